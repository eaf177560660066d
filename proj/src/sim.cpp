#include "popc/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace popc {

std::uint64_t split_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

PairSampler::PairSampler(const Configuration& c) {
    for (const auto& [q, k] : c.entries()) {
        states_.push_back(q);
        n_ += k;
        counts_.push_back(n_);  // prefix sums
    }
    if (n_ < 2) throw std::invalid_argument("pair sampling needs at least two agents");
}

std::size_t PairSampler::pick(Count r) const {
    return std::size_t(std::upper_bound(counts_.begin(), counts_.end(), r) - counts_.begin());
}

std::pair<StateId, StateId> PairSampler::draw(std::mt19937_64& rng) {
    const Count first = std::uniform_int_distribution<Count>(0, n_ - 1)(rng);
    Count second = std::uniform_int_distribution<Count>(0, n_ - 2)(rng);
    if (second >= first) ++second;
    StateId a = states_[pick(first)], b = states_[pick(second)];
    if (a > b) std::swap(a, b);
    return {a, b};
}

double PairSampler::probability(StateId a, StateId b) const {
    auto count = [&](StateId q) -> double {
        auto it = std::find(states_.begin(), states_.end(), q);
        if (it == states_.end()) return 0;
        std::size_t i = std::size_t(it - states_.begin());
        return double(counts_[i] - (i ? counts_[i - 1] : 0));
    };
    const double pairs = double(n_) * double(n_ - 1);
    if (a == b) return count(a) * (count(a) - 1) / pairs;
    return 2 * count(a) * count(b) / pairs;
}

namespace {

using Result = std::optional<std::pair<StateId, StateId>>;

// Memoised interaction table. A dense byte matrix answers "is this pair
// productive" for moderately sized protocols; results live in a hash map.
class InteractionCache {
public:
    explicit InteractionCache(const PairProtocol& p) : p_(p), s_(p.state_count()) {
        if (s_ <= kDenseLimit) productive_.assign(s_ * s_, -1);
    }

    bool productive(StateId a, StateId b) {
        if (!productive_.empty()) {
            std::int8_t& v = productive_[std::size_t(a) * s_ + b];
            if (v < 0) {
                v = get(a, b).has_value();
                productive_[std::size_t(b) * s_ + a] = v;
            }
            return v != 0;
        }
        return get(a, b).has_value();
    }

    const Result& get(StateId a, StateId b) {
        if (a > b) std::swap(a, b);
        const std::uint64_t key = (std::uint64_t(a) << 32) | b;
        auto it = results_.find(key);
        if (it == results_.end()) it = results_.emplace(key, p_.interact(a, b)).first;
        return it->second;
    }

private:
    static constexpr std::size_t kDenseLimit = 8192;
    const PairProtocol& p_;
    std::size_t s_;
    std::vector<std::int8_t> productive_;
    std::unordered_map<std::uint64_t, Result> results_;
};

// Occupied states with, for each, T(a) = number of agents outside state a
// that a-agents can productively meet.
class Population {
public:
    Population(const PairProtocol& p, const Configuration& c0)
        : cache_(p), count_(p.state_count(), 0), slot_(p.state_count(), -1), partners_(p.state_count(), 0) {
        for (const auto& [q, k] : c0.entries()) {
            if (q >= p.state_count()) throw std::invalid_argument("configuration uses an unknown state");
            add(q, std::int64_t(k));
            n_ += k;
        }
    }

    Count agents() const { return n_; }
    const std::vector<StateId>& occupied() const { return occupied_; }
    Count count(StateId q) const { return count_[q]; }

    // Ordered productive agent pairs with first agent in a.
    Count weight(StateId a) {
        const Count c = count_[a];
        return c * partners_[a] + (c > 1 && cache_.productive(a, a) ? c * (c - 1) : 0);
    }

    void add(StateId s, std::int64_t delta) {
        if (count_[s] == 0 && delta > 0) {
            Count t = 0;
            for (StateId b : occupied_) {
                if (cache_.productive(s, b)) t += count_[b];
            }
            partners_[s] = t;
            slot_[s] = std::int64_t(occupied_.size());
            occupied_.push_back(s);
        }
        for (StateId a : occupied_) {
            if (a != s && cache_.productive(a, s)) partners_[a] = Count(std::int64_t(partners_[a]) + delta);
        }
        count_[s] = Count(std::int64_t(count_[s]) + delta);
        if (count_[s] == 0) {
            const std::int64_t i = slot_[s];
            occupied_[i] = occupied_.back();
            slot_[occupied_[i]] = i;
            occupied_.pop_back();
            slot_[s] = -1;
        }
    }

    void apply(StateId a, StateId b, const std::pair<StateId, StateId>& r) {
        add(a, -1);
        add(b, -1);
        add(r.first, 1);
        add(r.second, 1);
    }

    InteractionCache& cache() { return cache_; }

    Configuration snapshot() const {
        Configuration c;
        for (StateId q : occupied_) c.add(q, count_[q]);
        return c;
    }

private:
    InteractionCache cache_;
    std::vector<Count> count_;
    std::vector<std::int64_t> slot_;
    std::vector<Count> partners_;
    std::vector<StateId> occupied_;
    Count n_ = 0;
};

Verdict final_output(const PairProtocol& p, const Configuration& c) { return p.output(c.support()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrialResult run_protocol(const PairProtocol& p, const Configuration& c0, std::uint64_t seed, std::uint64_t cap) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    Population pop(p, c0);
    TrialResult res;
    res.seed = seed;
    res.n = pop.agents();
    const double ordered_pairs = double(res.n) * double(res.n > 0 ? res.n - 1 : 0);
    std::vector<Count> weights;
    while (true) {
        Count total = 0;
        weights.clear();
        for (StateId a : pop.occupied()) {
            weights.push_back(pop.weight(a));
            total += weights.back();
        }
        if (total == 0) break;
        const double prob = double(total) / ordered_pairs;
        std::uint64_t silent = 0;
        if (prob < 1) silent = std::geometric_distribution<std::uint64_t>(prob)(rng);
        if (silent >= cap - res.interactions) {
            res.interactions = cap;
            res.capped = true;
            break;
        }
        res.interactions += silent + 1;

        Count r = std::uniform_int_distribution<Count>(0, total - 1)(rng);
        std::size_t i = 0;
        while (r >= weights[i]) r -= weights[i++];
        const StateId a = pop.occupied()[i];
        r /= pop.count(a);  // uniform over a's partner agents
        StateId b = a;
        for (StateId cand : pop.occupied()) {
            if (!pop.cache().productive(a, cand)) continue;
            const Count w = cand == a ? pop.count(a) - 1 : pop.count(cand);
            if (r < w) {
                b = cand;
                break;
            }
            r -= w;
        }
        const auto next = *pop.cache().get(a, b);
        pop.apply(a, b, next);
        if (res.interactions >= cap) {
            res.capped = !pop.occupied().empty() && [&] {
                for (StateId q : pop.occupied()) {
                    if (pop.weight(q)) return true;
                }
                return false;
            }();
            break;
        }
    }
    res.final_config = pop.snapshot();
    res.output = final_output(p, res.final_config);
    res.wall_seconds = seconds_since(t0);
    return res;
}

TrialResult run_protocol_naive(const PairProtocol& p, const Configuration& c0, std::uint64_t seed,
                               std::uint64_t cap) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    Population pop(p, c0);
    TrialResult res;
    res.seed = seed;
    res.n = pop.agents();
    auto live = [&] {
        for (StateId q : pop.occupied()) {
            if (pop.weight(q)) return true;
        }
        return false;
    };
    auto agent_state = [&](Count idx, std::optional<StateId> minus_one) {
        for (StateId q : pop.occupied()) {
            Count c = pop.count(q) - (minus_one == q ? 1 : 0);
            if (idx < c) return q;
            idx -= c;
        }
        throw std::logic_error("agent index out of range");
    };
    while (live()) {
        if (res.interactions >= cap) {
            res.capped = true;
            break;
        }
        ++res.interactions;
        StateId a = agent_state(std::uniform_int_distribution<Count>(0, res.n - 1)(rng), std::nullopt);
        StateId b = agent_state(std::uniform_int_distribution<Count>(0, res.n - 2)(rng), a);
        const auto& next = pop.cache().get(a, b);
        if (next) pop.apply(a, b, *next);
    }
    res.final_config = pop.snapshot();
    res.output = final_output(p, res.final_config);
    res.wall_seconds = seconds_since(t0);
    return res;
}

TrialResult run_computer_fair(const PopulationComputer& p, const Configuration& c0, std::uint64_t seed,
                              std::uint64_t cap) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    TrialResult res;
    res.seed = seed;
    res.n = c0.size();
    Configuration c = c0;
    while (true) {
        auto en = enabled(p, c);
        if (en.empty()) break;
        if (res.interactions >= cap) {
            res.capped = true;
            break;
        }
        c = step(c, *en[std::uniform_int_distribution<std::size_t>(0, en.size() - 1)(rng)]);
        ++res.interactions;
    }
    res.output = output(p, c);
    res.final_config = std::move(c);
    res.wall_seconds = seconds_since(t0);
    return res;
}

RunStats summarize(std::vector<TrialResult> results) {
    if (results.empty()) throw std::invalid_argument("no trials");
    RunStats s;
    s.trials = results.size();
    s.min = s.max = results.front().interactions;
    double sum = 0;
    for (const auto& r : results) {
        sum += double(r.interactions);
        s.min = std::min(s.min, r.interactions);
        s.max = std::max(s.max, r.interactions);
        ++s.histogram[r.output == Verdict::zero ? 0 : r.output == Verdict::one ? 1 : 2];
        s.capped += r.capped;
    }
    s.mean = sum / double(s.trials);
    double var = 0;
    for (const auto& r : results) var += (double(r.interactions) - s.mean) * (double(r.interactions) - s.mean);
    s.stddev = s.trials > 1 ? std::sqrt(var / double(s.trials - 1)) : 0;
    s.results = std::move(results);
    return s;
}

namespace {

template <class F>
std::vector<TrialResult> run_trials(std::size_t trials, unsigned jobs, F&& trial) {
    std::vector<TrialResult> results(trials);
    jobs = std::max(1u, std::min<unsigned>(jobs, unsigned(trials)));
    if (jobs == 1) {
        for (std::size_t i = 0; i < trials; ++i) results[i] = trial(i);
        return results;
    }
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) {
        pool.emplace_back([&, j] {
            for (std::size_t i = j; i < trials; i += jobs) results[i] = trial(i);
        });
    }
    for (auto& t : pool) t.join();
    return results;
}

}  // namespace

RunStats estimate(const PairProtocol& p, const Configuration& c0, std::size_t trials, std::uint64_t seed,
                  std::uint64_t cap, unsigned jobs) {
    if (trials == 0) throw std::invalid_argument("trials must be at least 1");
    return summarize(run_trials(trials, jobs, [&](std::size_t i) { return run_protocol(p, c0, split_seed(seed, i), cap); }));
}

RunStats estimate_fair(const PopulationComputer& p, const Configuration& c0, std::size_t trials, std::uint64_t seed,
                       std::uint64_t cap, unsigned jobs) {
    if (trials == 0) throw std::invalid_argument("trials must be at least 1");
    return summarize(
        run_trials(trials, jobs, [&](std::size_t i) { return run_computer_fair(p, c0, split_seed(seed, i), cap); }));
}

Configuration initial(const PairProtocol& p, const std::vector<Count>& input_counts) {
    const auto in = p.input_states();
    if (input_counts.size() != in.size()) {
        throw std::invalid_argument("expected " + std::to_string(in.size()) + " input counts, got " +
                                    std::to_string(input_counts.size()));
    }
    Configuration c;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (input_counts[i]) c.add(in[i], input_counts[i]);
    }
    return c;
}

InputMaker balanced_inputs(const PairProtocol& p, std::size_t vars) {
    auto in = p.input_states();
    if (vars == 0 || vars > in.size()) throw std::invalid_argument("bad number of input variables");
    in.resize(vars);
    return [in](Count n, std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, in.size() - 1);
        Configuration c;
        for (Count a = 0; a < n; ++a) c.add(in[pick(rng)]);
        return c;
    };
}

std::vector<BenchRow> scaling_bench(const PairProtocol& p, const InputMaker& make, const std::vector<Count>& sizes,
                                    std::size_t trials, std::uint64_t seed, std::uint64_t cap, unsigned jobs) {
    std::vector<BenchRow> rows;
    for (std::size_t row = 0; row < sizes.size(); ++row) {
        const std::uint64_t base = split_seed(seed, row);
        auto results = run_trials(trials, jobs, [&](std::size_t i) {
            const std::uint64_t s = split_seed(base, i);
            std::mt19937_64 rng(s);
            return run_protocol(p, make(sizes[row], rng), s, cap);
        });
        rows.push_back({sizes[row], summarize(std::move(results))});
    }
    return rows;
}

double loglog_slope(const std::vector<BenchRow>& rows) {
    if (rows.size() < 2) throw std::invalid_argument("slope needs at least two rows");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& r : rows) {
        const double x = std::log(double(r.n)), y = std::log(r.stats.mean);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double k = double(rows.size());
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

void write_trials_csv(std::ostream& os, const std::vector<TrialResult>& results) {
    os << "trial,seed,n,interactions,output,capped\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        os << i << ',' << r.seed << ',' << r.n << ',' << r.interactions << ',' << to_string(r.output) << ','
           << (r.capped ? 1 : 0) << '\n';
    }
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << "n,trials,mean,stddev,min,max\n";
    for (const auto& r : rows) {
        os << r.n << ',' << r.stats.trials << ',' << r.stats.mean << ',' << r.stats.stddev << ',' << r.stats.min << ','
           << r.stats.max << '\n';
    }
}

}  // namespace popc
