#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace popc {

// Reference to a circuit input (by position in Circuit::inputs) or to a gate.
struct Ref {
    enum class Kind : std::uint8_t { input, gate };
    Kind kind = Kind::input;
    std::uint32_t index = 0;

    static Ref input(std::uint32_t i) { return {Kind::input, i}; }
    static Ref gate(std::uint32_t i) { return {Kind::gate, i}; }
    bool is_gate() const { return kind == Kind::gate; }
    auto operator<=>(const Ref&) const = default;
};

struct Gate {
    Ref a;
    Ref b;
    bool operator==(const Gate&) const = default;
};

// NAND-only netlist over presence bits of state labels. A circuit whose value
// does not depend on its inputs is stored in constant form: no gates and
// `constant` set.
class Circuit {
public:
    std::vector<std::string> inputs;
    std::vector<Gate> gates;
    Ref out;
    std::optional<bool> constant;

    static Circuit make_constant(bool v, std::vector<std::string> inputs = {});

    bool eval(const std::set<std::string>& support) const;
    // Presence bits aligned with `inputs`.
    bool eval_bits(const std::vector<bool>& present) const;

    std::size_t gate_count() const { return gates.size(); }
    // Empty when the netlist is well-formed (backward references, valid out).
    std::vector<std::string> check() const;

    bool operator==(const Circuit&) const = default;
};

// Incremental NAND builder. Folds constants, cancels double negation and
// shares structurally identical gates.
class CircuitBuilder {
public:
    struct Wire {
        enum class Kind : std::uint8_t { zero, one, input, gate };
        Kind kind = Kind::zero;
        std::uint32_t index = 0;
        auto operator<=>(const Wire&) const = default;
    };

    explicit CircuitBuilder(std::vector<std::string> inputs = {});

    Wire zero() const { return {Wire::Kind::zero, 0}; }
    Wire one() const { return {Wire::Kind::one, 0}; }
    Wire constant(bool v) const { return v ? one() : zero(); }
    Wire input(std::uint32_t i) const;
    // Registers the label if new.
    Wire input(const std::string& label);

    Wire nand(Wire a, Wire b);
    Wire negate(Wire a);
    Wire conj(Wire a, Wire b);
    Wire disj(Wire a, Wire b);
    Wire exclusive(Wire a, Wire b);
    Wire majority(Wire a, Wire b, Wire c);
    Wire all_of(const std::vector<Wire>& ws);
    Wire any_of(const std::vector<Wire>& ws);

    // Copies `c` into this builder; `bind` supplies the wire for each input.
    Wire embed(const Circuit& c, const std::function<Wire(const std::string&)>& bind);

    // Drops gates not feeding `out` and renumbers.
    Circuit finish(Wire out) const;

private:
    std::vector<std::string> inputs_;
    std::map<std::string, std::uint32_t> input_index_;
    std::vector<Gate> gates_;
    std::map<std::pair<Ref, Ref>, std::uint32_t> shared_;

    static Ref as_ref(Wire w);
};

// Presence bits p_0..p_d name states 2^0..2^d; labels are the decimal values.
// True iff the support sum is congruent to `residue` modulo `modulus`.
Circuit build_remainder_output(unsigned degree, std::int64_t modulus, std::int64_t residue);

// Inputs are +2^i and -2^i for i in 0..d, labelled by their signed decimal
// values. True iff (sum of positive members) - (sum of negative members) >= bound.
Circuit build_threshold_output(unsigned degree, std::int64_t bound);

// Boolean skeleton over sub-circuit slots.
struct BoolExpr {
    enum class Op { slot, conj, disj, neg, constant };
    Op op = Op::constant;
    std::size_t slot = 0;
    bool value = false;
    std::vector<BoolExpr> children;
};

// Sub-circuits must have disjoint input labels.
Circuit combine(const BoolExpr& expr, const std::vector<Circuit>& subs);

// Rewrites every input label through `rename`.
Circuit rename_inputs(const Circuit& c, const std::function<std::string(const std::string&)>& rename);

// Replaces each input by the disjunction of the given labels (constant false
// when the list is empty).
Circuit substitute_inputs(const Circuit& c, const std::function<std::vector<std::string>(const std::string&)>& expand);

nlohmann::json to_json(const Circuit& c);
Circuit circuit_from_json(const nlohmann::json& j);

}  // namespace popc
