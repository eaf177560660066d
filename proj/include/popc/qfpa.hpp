#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace popc {

// Sum of coeffs[i] * x[i] >= bound.
struct ThresholdAtom {
    std::vector<std::int64_t> coeffs;
    std::int64_t bound = 0;
    bool operator==(const ThresholdAtom&) const = default;
};

// Sum of coeffs[i] * x[i] == residue (mod modulus), with coefficients and
// residue kept in [0, modulus).
struct RemainderAtom {
    std::vector<std::int64_t> coeffs;
    std::int64_t modulus = 1;
    std::int64_t residue = 0;
    bool operator==(const RemainderAtom&) const = default;
};

using Atom = std::variant<ThresholdAtom, RemainderAtom>;

struct Formula {
    enum class Op { atom, conj, disj, neg, constant };
    Op op = Op::constant;
    std::size_t atom = 0;  // index into Predicate::atoms when op == atom
    bool value = false;    // when op == constant
    std::vector<Formula> children;

    static Formula leaf(std::size_t index);
    static Formula constant_of(bool v);
    static Formula negate(Formula child);
    static Formula join(Op op, std::vector<Formula> children);

    bool operator==(const Formula&) const = default;
};

// Quantifier-free Presburger predicate: a boolean combination of atoms over a
// shared, ordered variable list. Every atom's coefficient vector spans all
// variables.
struct Predicate {
    std::vector<std::string> variables;
    std::vector<Atom> atoms;
    Formula root;

    std::size_t variable_count() const { return variables.size(); }
    bool operator==(const Predicate&) const = default;
};

// Counts per variable, aligned with Predicate::variables.
using InputVector = std::vector<std::uint64_t>;

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position);
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

Predicate parse_predicate(std::string_view text);
std::string to_string(const Predicate& p);

bool eval(const Predicate& p, const InputVector& x);
bool eval_atom(const Atom& a, const InputVector& x);

// Replaces every x_i by x_i + 2 x_i'. Primed variables are appended after the
// originals, in the same order.
Predicate double_predicate(const Predicate& p);

// Bit-size proxy for |p|: binary lengths of all nonzero coefficients, bounds
// and moduli (plus one per negative sign), one per variable occurrence and one
// per connective.
std::uint64_t size_bits(const Predicate& p);

// Signed powers of two summing to x, largest magnitude first.
std::vector<std::int64_t> bin_decompose(std::int64_t x);

RemainderAtom normalize(RemainderAtom a);

// Looks up variable names; throws std::invalid_argument on unknown names.
InputVector make_input(const Predicate& p, const std::map<std::string, std::uint64_t>& values);

nlohmann::json to_json(const Predicate& p);
Predicate predicate_from_json(const nlohmann::json& j);

}  // namespace popc
