#include "popc/verify.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace popc {

std::size_t ReachGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& e : edges) n += e.size();
    return n;
}

namespace {

std::string key_of(const Configuration& c) {
    std::string k;
    k.reserve(c.entries().size() * 12);
    for (const auto& [q, n] : c.entries()) {
        k.append(reinterpret_cast<const char*>(&q), sizeof q);
        k.append(reinterpret_cast<const char*>(&n), sizeof n);
    }
    return k;
}

using Successors = std::function<void(const Configuration&, std::vector<std::pair<Configuration, std::uint32_t>>&)>;

ReachGraph bfs(const Configuration& c0, std::size_t cap, const Successors& next) {
    ReachGraph g;
    std::unordered_map<std::string, std::uint32_t> index;
    auto intern = [&](Configuration c) -> std::optional<std::uint32_t> {
        auto [it, fresh] = index.emplace(key_of(c), std::uint32_t(g.nodes.size()));
        if (fresh) {
            if (g.nodes.size() >= cap) {
                index.erase(it);
                g.truncated = true;
                return std::nullopt;
            }
            g.nodes.push_back(std::move(c));
            g.edges.emplace_back();
            g.terminal.push_back(0);
        }
        return it->second;
    };
    intern(c0);
    std::vector<std::pair<Configuration, std::uint32_t>> succ;
    for (std::size_t i = 0; i < g.nodes.size() && !g.truncated; ++i) {
        succ.clear();
        next(g.nodes[i], succ);
        g.terminal[i] = succ.empty();
        std::vector<ReachGraph::Edge> out;
        for (auto& [d, label] : succ) {
            auto j = intern(std::move(d));
            if (!j) break;
            out.push_back({*j, label});
        }
        g.edges[i] = std::move(out);
    }
    return g;
}

}  // namespace

ReachGraph explore(const PopulationComputer& p, const Configuration& c0, std::size_t cap) {
    if (cap == 0) throw std::invalid_argument("exploration cap must be positive");
    return bfs(c0, cap, [&](const Configuration& c, auto& out) {
        for (std::size_t t = 0; t < p.transitions().size(); ++t) {
            const auto& tr = p.transitions()[t];
            if (c.contains(tr.lhs)) out.emplace_back(step(c, tr), std::uint32_t(t));
        }
    });
}

ReachGraph explore(const PairProtocol& p, const Configuration& c0, std::size_t cap) {
    if (cap == 0) throw std::invalid_argument("exploration cap must be positive");
    return bfs(c0, cap, [&](const Configuration& c, auto& out) {
        const auto& e = c.entries();
        for (std::size_t i = 0; i < e.size(); ++i) {
            for (std::size_t j = i; j < e.size(); ++j) {
                if (i == j && e[i].second < 2) continue;
                auto r = p.interact(e[i].first, e[j].first);
                if (!r) continue;
                Configuration d = c;
                d.remove(e[i].first);
                d.remove(e[j].first);
                d.add(r->first);
                d.add(r->second);
                out.emplace_back(std::move(d), 0);
            }
        }
    });
}

std::vector<std::vector<std::uint32_t>> strongly_connected_components(const ReachGraph& g) {
    // Iterative Tarjan.
    const std::size_t n = g.nodes.size();
    constexpr std::uint32_t unseen = UINT32_MAX;
    std::vector<std::uint32_t> index(n, unseen), low(n, 0);
    std::vector<char> on_stack(n, 0);
    std::vector<std::uint32_t> stack;
    std::vector<std::vector<std::uint32_t>> out;
    std::uint32_t counter = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> frames;
    for (std::uint32_t root = 0; root < n; ++root) {
        if (index[root] != unseen) continue;
        frames.push_back({root, 0});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!frames.empty()) {
            auto& [v, pos] = frames.back();
            if (pos < g.edges[v].size()) {
                const std::uint32_t w = g.edges[v][pos++].target;
                if (index[w] == unseen) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    frames.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            const std::uint32_t done = v;
            frames.pop_back();
            if (!frames.empty()) low[frames.back().first] = std::min(low[frames.back().first], low[done]);
            if (low[done] == index[done]) {
                std::vector<std::uint32_t> comp;
                std::uint32_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp.push_back(w);
                } while (w != done);
                out.push_back(std::move(comp));
            }
        }
    }
    return out;
}

std::vector<std::vector<std::uint32_t>> bottom_sccs(const ReachGraph& g) {
    auto sccs = strongly_connected_components(g);
    std::vector<std::uint32_t> comp_of(g.nodes.size());
    for (std::uint32_t c = 0; c < sccs.size(); ++c) {
        for (auto v : sccs[c]) comp_of[v] = c;
    }
    std::vector<std::vector<std::uint32_t>> bottom;
    for (std::uint32_t c = 0; c < sccs.size(); ++c) {
        bool closed = true;
        for (auto v : sccs[c]) {
            for (const auto& e : g.edges[v]) closed = closed && comp_of[e.target] == c;
        }
        if (closed) bottom.push_back(sccs[c]);
    }
    return bottom;
}

std::optional<bool> check_bounded(const ReachGraph& g) {
    if (g.truncated) return std::nullopt;
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
        for (const auto& e : g.edges[v]) {
            if (e.target == v) return false;
        }
    }
    for (const auto& c : strongly_connected_components(g)) {
        if (c.size() > 1) return false;
    }
    return true;
}

std::optional<bool> check_terminating_fair(const ReachGraph& g) {
    if (g.truncated) return std::nullopt;
    const std::size_t n = g.nodes.size();
    std::vector<std::vector<std::uint32_t>> pred(n);
    for (std::uint32_t v = 0; v < n; ++v) {
        for (const auto& e : g.edges[v]) pred[e.target].push_back(v);
    }
    std::vector<char> seen(n, 0);
    std::deque<std::uint32_t> queue;
    for (std::uint32_t v = 0; v < n; ++v) {
        if (g.terminal[v]) {
            seen[v] = 1;
            queue.push_back(v);
        }
    }
    while (!queue.empty()) {
        auto v = queue.front();
        queue.pop_front();
        for (auto u : pred[v]) {
            if (!seen[u]) {
                seen[u] = 1;
                queue.push_back(u);
            }
        }
    }
    return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
}

namespace {

using OutputOf = std::function<Verdict(const Configuration&)>;

void judge(const ReachGraph& g, const OutputOf& out, bool expected, RunVerdict& v) {
    v.nodes = g.nodes.size();
    v.edges = g.edge_count();
    v.truncated = g.truncated;
    if (g.truncated) {
        v.note = "exploration cap reached";
        return;
    }
    v.bounded = *check_bounded(g);
    v.terminating = *check_terminating_fair(g);
    const Verdict want = expected ? Verdict::one : Verdict::zero;
    v.outputs_ok = true;
    for (const auto& comp : bottom_sccs(g)) {
        for (auto node : comp) {
            const Verdict got = out(g.nodes[node]);
            if (got != want) {
                v.outputs_ok = false;
                v.note = "bottom configuration with output " + to_string(got);
                return;
            }
        }
    }
    if (!v.terminating) v.note = "a configuration cannot reach any terminal configuration";
}

}  // namespace

bool CorrectnessReport::pass() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunVerdict& r) { return r.pass(); });
}

bool CorrectnessReport::indeterminate() const {
    return std::any_of(runs.begin(), runs.end(), [](const RunVerdict& r) { return r.truncated; });
}

std::vector<Multiset> helper_extras(const PopulationComputer& p, Count slack) {
    std::vector<Multiset> out{Multiset{}};
    const auto supp = p.helpers.support();
    if (supp.empty()) return out;
    if (supp.size() > 4) {
        StateId reservoir = supp.front();
        for (StateId q : supp) {
            if (p.helpers[q] > p.helpers[reservoir]) reservoir = q;
        }
        for (Count k = 1; k <= slack; ++k) out.push_back(Multiset{{reservoir, k}});
        return out;
    }
    // Multisets of each size k over supp, generated as non-decreasing sequences.
    std::function<void(std::size_t, Count, Multiset)> grow = [&](std::size_t from, Count left, Multiset m) {
        if (left == 0) {
            out.push_back(m);
            return;
        }
        for (std::size_t i = from; i < supp.size(); ++i) {
            Multiset n = m;
            n.add(supp[i]);
            grow(i, left - 1, n);
        }
    };
    for (Count k = 1; k <= slack; ++k) grow(0, k, {});
    return out;
}

CorrectnessReport check_correct(const PopulationComputer& p, const Predicate& pred, const InputVector& input,
                                Count helper_slack, std::size_t cap) {
    if (input.size() != p.inputs.size()) throw std::invalid_argument("input vector does not match the computer's inputs");
    CorrectnessReport rep;
    rep.expected = eval(pred, input);
    std::vector<Count> counts(input.begin(), input.end());
    for (const Multiset& extra : helper_extras(p, helper_slack)) {
        RunVerdict v;
        v.input = input;
        v.extra_helpers = extra;
        ReachGraph g = explore(p, initial(p, counts, extra), cap);
        judge(g, [&](const Configuration& c) { return output(p, c); }, rep.expected, v);
        rep.runs.push_back(std::move(v));
    }
    return rep;
}

RunVerdict check_correct(const PairProtocol& p, const Configuration& c0, bool expected, std::size_t cap) {
    RunVerdict v;
    for (StateId q : p.input_states()) v.input.push_back(c0[q]);
    ReachGraph g = explore(p, c0, cap);
    judge(g, [&](const Configuration& c) { return p.output(c.support()); }, expected, v);
    return v;
}

nlohmann::json to_json(const RunVerdict& v, const PopulationComputer& p) {
    return {{"input", v.input},
            {"extra_helpers", describe(p, v.extra_helpers)},
            {"nodes", v.nodes},
            {"edges", v.edges},
            {"truncated", v.truncated},
            {"bounded", v.bounded},
            {"terminating", v.terminating},
            {"outputs_ok", v.outputs_ok},
            {"pass", v.pass()},
            {"note", v.note}};
}

nlohmann::json to_json(const CorrectnessReport& r, const PopulationComputer& p) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& v : r.runs) runs.push_back(to_json(v, p));
    return {{"expected", r.expected ? 1 : 0}, {"pass", r.pass()}, {"indeterminate", r.indeterminate()}, {"runs", runs}};
}

namespace {

// Row t is s_t - r_t.
RationalMatrix incidence(const PopulationComputer& p) {
    RationalMatrix a(p.transitions().size(), std::vector<Rational>(p.state_count()));
    for (std::size_t t = 0; t < p.transitions().size(); ++t) {
        const auto& tr = p.transitions()[t];
        for (const auto& [q, k] : tr.rhs.entries()) a[t][q] += Rational(k);
        for (const auto& [q, k] : tr.lhs.entries()) a[t][q] -= Rational(k);
    }
    return a;
}

}  // namespace

PotentialSynthesis synthesize_potential(const PopulationComputer& p, std::size_t max_entries) {
    const std::size_t nt = p.transitions().size(), nq = p.state_count();
    if (nt * (2 * nq + nt) > max_entries) throw std::length_error("potential synthesis: system too large");
    PotentialSynthesis res;
    RationalMatrix a = incidence(p);

    // A x <= -1.
    auto x = solve_inequalities(a, std::vector<Rational>(nt, Rational(-1)));
    if (x) {
        // w = lambda (x - min x): lambda clears denominators and covers the
        // largest arity, so w(r) - w(s) = lambda (x(r) - x(s)) >= |r| - 1.
        Rational lo = 0;
        if (!x->empty()) lo = *std::min_element(x->begin(), x->end());
        boost::multiprecision::cpp_int lambda = 1;
        for (const auto& v : *x) {
            const auto d = boost::multiprecision::denominator(v);
            lambda = lambda / boost::multiprecision::gcd(lambda, d) * d;
        }
        std::size_t arity = 2;
        for (const auto& t : p.transitions()) arity = std::max<std::size_t>(arity, t.arity());
        lambda *= arity - 1;
        PotentialWeights w;
        for (const auto& v : *x) {
            Rational s = (v - lo) * Rational(lambda);
            w.weight.push_back(static_cast<std::uint64_t>(boost::multiprecision::numerator(s)));
        }
        if (w.weight.empty()) w.weight.assign(nq, 0);
        if (check_potential(p, w)) throw std::logic_error("potential synthesis produced invalid weights");
        res.weights = std::move(w);
        return res;
    }

    // A^T y = 0, 1^T y = 1, y >= 0.
    RationalMatrix m(nq + 1, std::vector<Rational>(nt));
    for (std::size_t t = 0; t < nt; ++t) {
        for (std::size_t q = 0; q < nq; ++q) m[q][t] = a[t][q];
        m[nq][t] = 1;
    }
    std::vector<Rational> b(nq + 1);
    b[nq] = 1;
    auto y = nonnegative_solution(m, b);
    if (!y) throw std::logic_error("potential synthesis: neither weights nor witness");
    if (!is_unbounded_witness(p, *y)) throw std::logic_error("potential synthesis produced an invalid witness");
    res.witness = std::move(*y);
    return res;
}

bool is_unbounded_witness(const PopulationComputer& p, const std::vector<Rational>& y) {
    if (y.size() != p.transitions().size()) return false;
    bool nonzero = false;
    for (const auto& v : y) {
        if (v < 0) return false;
        nonzero = nonzero || v != 0;
    }
    if (!nonzero) return false;
    RationalMatrix a = incidence(p);
    for (std::size_t q = 0; q < p.state_count(); ++q) {
        Rational sum = 0;
        for (std::size_t t = 0; t < y.size(); ++t) sum += y[t] * a[t][q];
        if (sum != 0) return false;
    }
    return true;
}

Count tmin_of(const Transition& t, const Configuration& c) {
    Count m = UINT64_MAX;
    for (const auto& [q, k] : t.lhs.entries()) m = std::min(m, c[q]);
    return t.lhs.empty() ? 0 : m;
}

Count speed_of(const PopulationComputer& p, const Configuration& c) {
    Count s = 0;
    for (const auto& t : p.transitions()) {
        const Count m = tmin_of(t, c);
        s += m * m;
    }
    return s;
}

bool check_well_initialised(const PopulationComputer& p, const Configuration& c) {
    Count in = 0;
    for (StateId x : p.inputs) in += c[x];
    return 3 * (in + p.helpers.size()) <= 2 * c.size();
}

RapidSyntactic check_rapid_syntactic(const PopulationComputer& p) {
    RapidSyntactic r;
    std::vector<std::size_t> outgoing(p.state_count(), 0);
    std::vector<char> is_input(p.state_count(), 0);
    for (StateId x : p.inputs) is_input[x] = 1;
    for (const auto& t : p.transitions()) {
        bool other = false;
        for (const auto& [q, k] : t.lhs.entries()) {
            ++outgoing[q];
            if (!is_input[q]) other = true;
            else if (k > 1) {
                r.input_discipline = false;
                r.problems.push_back("input " + p.label(q) + " read " + std::to_string(k) + " times by one transition");
            }
        }
        if (!other) {
            r.inputs_terminal = false;
            r.problems.push_back("transition " + describe(p, t.lhs) + " reads inputs only");
        }
        for (const auto& [q, k] : t.rhs.entries()) {
            if (is_input[q]) {
                r.input_discipline = false;
                r.problems.push_back("transition " + describe(p, t.lhs) + " produces input " + p.label(q));
            }
        }
    }
    for (StateId q = 0; q < p.state_count(); ++q) {
        if (outgoing[q] > 2) r.busy_states.push_back(p.label(q));
    }
    if (r.busy_states.size() > 1) {
        r.out_degree = false;
        std::string list;
        for (const auto& l : r.busy_states) list += (list.empty() ? "" : ", ") + l;
        r.problems.push_back("states with more than two outgoing transitions: " + list);
    }
    return r;
}

}  // namespace popc
