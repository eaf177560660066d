#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "popc/core.hpp"
#include "popc/lp.hpp"
#include "popc/qfpa.hpp"
#include "popc/synth.hpp"

namespace popc {

// Configurations reachable from nodes[0], deduplicated.
struct ReachGraph {
    struct Edge {
        std::uint32_t target;
        std::uint32_t label;  // transition index; 0 for pairwise protocols
    };
    std::vector<Configuration> nodes;
    std::vector<std::vector<Edge>> edges;
    std::vector<char> terminal;
    bool truncated = false;
    std::size_t edge_count() const;
};

// Breadth-first; stops with `truncated` once more than `cap` nodes are found.
ReachGraph explore(const PopulationComputer& p, const Configuration& c0, std::size_t cap);
ReachGraph explore(const PairProtocol& p, const Configuration& c0, std::size_t cap);

// Strongly connected components, each listed once, in reverse topological order.
std::vector<std::vector<std::uint32_t>> strongly_connected_components(const ReachGraph& g);
std::vector<std::vector<std::uint32_t>> bottom_sccs(const ReachGraph& g);

// Every run from nodes[0] is finite: the graph is acyclic (self loops count).
// Nothing for truncated graphs.
std::optional<bool> check_bounded(const ReachGraph& g);
// Every fair run from nodes[0] is finite: a terminal node is reachable from
// every node. Nothing for truncated graphs.
std::optional<bool> check_terminating_fair(const ReachGraph& g);

struct RunVerdict {
    std::vector<std::uint64_t> input;
    Multiset extra_helpers;
    std::size_t nodes = 0;
    std::size_t edges = 0;
    bool truncated = false;
    bool bounded = false;
    bool terminating = false;
    bool outputs_ok = false;  // terminal and bottom-SCC outputs equal the oracle
    std::string note;
    bool pass() const { return !truncated && terminating && outputs_ok; }
};

struct CorrectnessReport {
    bool expected = false;  // oracle value
    std::vector<RunVerdict> runs;
    bool pass() const;
    bool indeterminate() const;  // some exploration hit the cap
};

// Extra helper multisets used for slack s: all multisets of size <= s over
// supp(H) when |supp(H)| <= 4, else extras on the most populous helper state.
std::vector<Multiset> helper_extras(const PopulationComputer& p, Count slack);

// Explores every initial configuration C_I + H + extra for the given input and
// judges it against eval(pred, input).
CorrectnessReport check_correct(const PopulationComputer& p, const Predicate& pred, const InputVector& input,
                                Count helper_slack, std::size_t cap);
// Same for a pairwise protocol started in `c0`.
RunVerdict check_correct(const PairProtocol& p, const Configuration& c0, bool expected, std::size_t cap);

nlohmann::json to_json(const RunVerdict& v, const PopulationComputer& p);
nlohmann::json to_json(const CorrectnessReport& r, const PopulationComputer& p);

// Dichotomy: integer weights w with w(r) >= w(s) + |r| - 1 for
// every transition, or a nonzero y >= 0 with A^T y = 0 (rows s - r).
struct PotentialSynthesis {
    std::optional<PotentialWeights> weights;
    std::optional<std::vector<Rational>> witness;  // indexed by transition
};

// Throws std::length_error beyond `max_entries` matrix entries.
PotentialSynthesis synthesize_potential(const PopulationComputer& p, std::size_t max_entries = 4000000);
// y >= 0, y != 0 and sum_t y_t (s_t - r_t) = 0, exactly.
bool is_unbounded_witness(const PopulationComputer& p, const std::vector<Rational>& y);

Count tmin_of(const Transition& t, const Configuration& c);
Count speed_of(const PopulationComputer& p, const Configuration& c);

// C(I) + |H| <= 2n/3. Reachability of c is the caller's obligation.
bool check_well_initialised(const PopulationComputer& p, const Configuration& c);

// Syntactic versions of the rapidity side conditions.
struct RapidSyntactic {
    bool out_degree = true;       // all states but one have <= 2 outgoing transitions
    bool inputs_terminal = true;  // every transition reads a non-input state
    bool input_discipline = true; // inputs read at most once per transition, never produced
    std::vector<std::string> busy_states;  // labels with > 2 outgoing transitions
    std::vector<std::string> problems;
    bool ok() const { return out_degree && inputs_terminal && input_discipline; }
};
RapidSyntactic check_rapid_syntactic(const PopulationComputer& p);

}  // namespace popc
