#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "popc/core.hpp"
#include "popc/qfpa.hpp"

namespace popc {

// Smallest k with 2^k >= x (x >= 1).
unsigned ceil_log2(std::uint64_t x);

// Reservoir label shared by all subcomputers.
inline const std::string reservoir_label = "0";

// Standalone remainder subcomputer over states "0" and the powers
// "1", "2", ..., "2^d" with d = ceil(log2 modulus).
PopulationComputer remainder_sub(std::int64_t modulus, std::int64_t residue = 0);

// Standalone threshold subcomputer over "0" and "+-2^i" for i in 0..degree.
PopulationComputer threshold_sub(std::int64_t bound, unsigned degree);

// Smallest degree for which a threshold atom with this bound and largest
// coefficient magnitude is sound inside a predicate with `atoms` atoms.
unsigned threshold_min_degree(std::int64_t bound, std::int64_t max_coeff, std::size_t atoms);

struct AtomPlan {
    enum class Kind { remainder, threshold, constant };
    Kind kind = Kind::constant;
    unsigned degree = 0;
    std::string prefix;          // state namespace, e.g. "r1:"
    bool constant_value = true;  // for folded atoms
    Count helpers = 0;           // helpers of the standalone subcomputer
};

struct SynthesisPlan {
    std::vector<AtomPlan> atoms;
    std::vector<std::size_t> split;  // b_i per variable
    std::size_t splitsize = 0;       // L
    Count helpers = 0;
};

struct Compiled {
    PopulationComputer computer;
    SynthesisPlan plan;
};

// Threshold degree overrides by atom index.
using DegreeOverrides = std::map<std::size_t, unsigned>;

Compiled compile_with_plan(const Predicate& p, const DegreeOverrides& overrides = {});
PopulationComputer compile(const Predicate& p, const DegreeOverrides& overrides = {});

nlohmann::json to_json(const SynthesisPlan& plan);
SynthesisPlan plan_from_json(const nlohmann::json& j);

// Size of one atom's subcomputer inside a compiled computer: its own states
// plus the shared reservoir, and the transitions that only touch those.
struct SubcomputerStats {
    std::string prefix;
    AtomPlan::Kind kind = AtomPlan::Kind::constant;
    unsigned degree = 0;
    std::size_t states = 0;
    std::size_t transitions = 0;
    Count helpers = 0;
};
std::vector<SubcomputerStats> subcomputer_stats(const PopulationComputer& p, const SynthesisPlan& plan);

// Label of the input state for variable `name`.
std::string input_label(const std::string& name);

struct PotentialWeights {
    std::vector<std::uint64_t> weight;  // indexed by state id
    std::uint64_t max() const;
    std::uint64_t of(const Multiset& m) const;
};

// Closed-form weights for a computer produced by compile().
PotentialWeights potential(const PopulationComputer& p);

// Index of the first transition violating w(r) >= w(s) + |r| - 1.
std::optional<std::size_t> check_potential(const PopulationComputer& p, const PotentialWeights& w);

}  // namespace popc
