#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "popc/circuit.hpp"

namespace popc {

using StateId = std::uint32_t;
using Count = std::uint64_t;

// Sparse multiset over state ids: sorted (state, count) pairs, counts > 0.
class Multiset {
public:
    using Entry = std::pair<StateId, Count>;

    Multiset() = default;
    Multiset(std::initializer_list<Entry> entries);
    static Multiset from_dense(const std::vector<Count>& dense);

    Count operator[](StateId q) const;
    void add(StateId q, Count k = 1);
    // Throws std::underflow_error if fewer than k agents are present.
    void remove(StateId q, Count k = 1);

    Count size() const { return total_; }
    bool empty() const { return total_ == 0; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<StateId> support() const;
    std::vector<Count> to_dense(std::size_t states) const;

    bool contains(const Multiset& other) const;  // this >= other pointwise
    Multiset operator+(const Multiset& other) const;

    auto operator<=>(const Multiset& other) const { return entries_ <=> other.entries_; }
    bool operator==(const Multiset& other) const { return entries_ == other.entries_; }

private:
    std::vector<Entry> entries_;
    Count total_ = 0;
};

using Configuration = Multiset;

struct Transition {
    Multiset lhs;
    Multiset rhs;
    std::size_t arity() const { return lhs.size(); }
    bool operator==(const Transition&) const = default;
};

enum class Verdict : std::int8_t { zero = 0, one = 1, undefined = -1 };
std::string to_string(Verdict v);

// Output b iff some agent is in marked[b] and none is in marked[1-b].
struct MarkedConsensus {
    std::set<StateId> zero;
    std::set<StateId> one;
    bool operator==(const MarkedConsensus&) const = default;
};

// Partition of all states; output b iff every agent is in a b-state.
struct Consensus {
    std::set<StateId> one;  // the remaining states vote 0
    bool operator==(const Consensus&) const = default;
};

using OutputFunction = std::variant<Circuit, MarkedConsensus, Consensus>;

// (Q, delta, I, O, H). Transitions are stored in insertion order; lookup by
// lhs returns the first one, so a duplicate lhs is representable (and
// reported by validate) but never silently wins.
class PopulationComputer {
public:
    StateId add_state(const std::string& label);
    std::optional<StateId> find_state(const std::string& label) const;
    StateId state(const std::string& label) const;  // throws if unknown
    const std::string& label(StateId q) const { return labels_.at(q); }
    std::size_t state_count() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }

    // Appends unconditionally.
    void add_transition(Multiset lhs, Multiset rhs);
    // Appends unless the lhs is already taken; returns whether it was added.
    bool try_add_transition(Multiset lhs, Multiset rhs);
    const std::vector<Transition>& transitions() const { return transitions_; }
    const Transition* find_transition(const Multiset& lhs) const;

    std::vector<StateId> inputs;  // ordered; position i reads variable i
    Multiset helpers;
    OutputFunction output = Circuit::make_constant(false);

    // Multiset from labelled counts, adding states as needed.
    Multiset multiset(const std::map<std::string, Count>& counts);
    Multiset multiset_of(std::initializer_list<std::string> labels);

    bool is_binary() const;
    std::size_t max_arity() const;
    // |Q| + |H| + sum of arities + gate count.
    std::size_t total_size() const;

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, StateId> index_;
    std::vector<Transition> transitions_;
    std::map<Multiset, std::size_t> by_lhs_;
};

std::vector<const Transition*> enabled(const PopulationComputer& p, const Configuration& c);
Configuration step(const Configuration& c, const Transition& t);
bool is_terminal(const PopulationComputer& p, const Configuration& c);

Verdict output(const PopulationComputer& p, const Configuration& c);
Verdict output_of_support(const PopulationComputer& p, const std::vector<StateId>& support);

std::vector<std::string> validate(const PopulationComputer& p);

// Input counts aligned with p.inputs, plus H, plus extra helpers (which must
// lie in supp(H)).
Configuration initial(const PopulationComputer& p, const std::vector<Count>& input_counts,
                      const Multiset& extra_helpers = {});

std::string describe(const PopulationComputer& p, const Multiset& m);

nlohmann::json to_json(const PopulationComputer& p);
PopulationComputer computer_from_json(const nlohmann::json& j);
void save_computer(const PopulationComputer& p, const std::filesystem::path& path);
PopulationComputer load_computer(const std::filesystem::path& path);

// Structural equality up to state numbering.
bool same_computer(const PopulationComputer& a, const PopulationComputer& b);

// A binary, helper-free protocol seen as a pairwise interaction rule. The
// simulator and the explorer only need this view, which lets very large
// protocols compute their transitions on demand.
class PairProtocol {
public:
    virtual ~PairProtocol() = default;
    virtual std::size_t state_count() const = 0;
    virtual std::string state_label(StateId q) const = 0;
    // Result of a meeting between agents in a and b, or nothing if silent.
    virtual std::optional<std::pair<StateId, StateId>> interact(StateId a, StateId b) const = 0;
    // `support` is sorted.
    virtual Verdict output(const std::vector<StateId>& support) const = 0;
    virtual std::vector<StateId> input_states() const = 0;
};

// PairProtocol view of an explicit binary computer.
class ExplicitPairProtocol final : public PairProtocol {
public:
    explicit ExplicitPairProtocol(const PopulationComputer& p);
    std::size_t state_count() const override { return p_->state_count(); }
    std::string state_label(StateId q) const override { return p_->label(q); }
    std::optional<std::pair<StateId, StateId>> interact(StateId a, StateId b) const override;
    Verdict output(const std::vector<StateId>& support) const override;
    std::vector<StateId> input_states() const override { return p_->inputs; }

private:
    const PopulationComputer* p_;
    std::unordered_map<std::uint64_t, std::pair<StateId, StateId>> rules_;
};

}  // namespace popc
