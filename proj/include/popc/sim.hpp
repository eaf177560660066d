#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

#include "popc/core.hpp"

namespace popc {

// Seed of trial `index` derived from `base` by one splitmix64 round over
// base + (index + 1) * golden gamma.
std::uint64_t split_seed(std::uint64_t base, std::uint64_t index);

struct TrialResult {
    std::uint64_t seed = 0;
    Count n = 0;
    std::uint64_t interactions = 0;  // equals the cap when capped
    bool capped = false;
    Verdict output = Verdict::undefined;
    double wall_seconds = 0;
    Configuration final_config;
};

struct RunStats {
    std::size_t trials = 0;
    double mean = 0;
    double stddev = 0;  // sample standard deviation
    std::uint64_t min = 0;
    std::uint64_t max = 0;
    std::array<std::size_t, 3> histogram{};  // outputs 0, 1, undefined
    std::size_t capped = 0;
    std::vector<TrialResult> results;
};

// Uniform random pair of distinct agents from a fixed configuration, drawn
// with prefix sums over the state counts.
class PairSampler {
public:
    explicit PairSampler(const Configuration& c);
    // Unordered pair of states, smaller id first.
    std::pair<StateId, StateId> draw(std::mt19937_64& rng);
    // Probability of the unordered state pair {a, b}.
    double probability(StateId a, StateId b) const;

private:
    std::vector<StateId> states_;
    std::vector<Count> counts_;  // prefix sums
    Count n_ = 0;
    std::size_t pick(Count r) const;
};

// Uniform-random-pair scheduler on a pairwise protocol. Interactions that
// change nothing are counted but skipped in bulk: the number of silent
// meetings before the next productive one is geometric, so the cost per
// productive interaction is linear in the number of occupied states.
TrialResult run_protocol(const PairProtocol& p, const Configuration& c0, std::uint64_t seed, std::uint64_t cap);

// Reference scheduler that draws every interaction explicitly.
TrialResult run_protocol_naive(const PairProtocol& p, const Configuration& c0, std::uint64_t seed,
                               std::uint64_t cap);

// Uniform choice among enabled transitions of any computer; counts steps.
TrialResult run_computer_fair(const PopulationComputer& p, const Configuration& c0, std::uint64_t seed,
                              std::uint64_t cap);

// Independent trials with seeds split_seed(seed, i).
RunStats estimate(const PairProtocol& p, const Configuration& c0, std::size_t trials, std::uint64_t seed,
                  std::uint64_t cap, unsigned jobs = 1);

// Fair-scheduler trials of a general computer (helpers included in c0).
RunStats estimate_fair(const PopulationComputer& p, const Configuration& c0, std::size_t trials, std::uint64_t seed,
                       std::uint64_t cap, unsigned jobs = 1);
RunStats summarize(std::vector<TrialResult> results);

// Agents on the protocol's input states, counts aligned with input_states().
Configuration initial(const PairProtocol& p, const std::vector<Count>& input_counts);

struct BenchRow {
    Count n = 0;
    RunStats stats;
};

using InputMaker = std::function<Configuration(Count n, std::mt19937_64& rng)>;

// Rows in the order of `sizes`; row i uses base seed split_seed(seed, i), and
// each trial draws its own input from its trial seed.
std::vector<BenchRow> scaling_bench(const PairProtocol& p, const InputMaker& make, const std::vector<Count>& sizes,
                                    std::size_t trials, std::uint64_t seed, std::uint64_t cap, unsigned jobs = 1);

// Least-squares slope of log(mean) against log(n).
// Each of the n agents picks one of the first `vars` input states uniformly.
InputMaker balanced_inputs(const PairProtocol& p, std::size_t vars);

double loglog_slope(const std::vector<BenchRow>& rows);

void write_trials_csv(std::ostream& os, const std::vector<TrialResult>& results);
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace popc
