#include "popc/qfpa.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <optional>

#include <boost/multiprecision/cpp_int.hpp>

namespace popc {

using BigInt = boost::multiprecision::cpp_int;

Formula Formula::leaf(std::size_t index) {
    Formula f;
    f.op = Op::atom;
    f.atom = index;
    return f;
}

Formula Formula::constant_of(bool v) {
    Formula f;
    f.op = Op::constant;
    f.value = v;
    return f;
}

Formula Formula::negate(Formula child) {
    Formula f;
    f.op = Op::neg;
    f.children.push_back(std::move(child));
    return f;
}

Formula Formula::join(Op op, std::vector<Formula> children) {
    if (children.size() == 1) return std::move(children.front());
    Formula f;
    f.op = op;
    f.children = std::move(children);
    return f;
}

ParseError::ParseError(const std::string& what, std::size_t position)
    : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
    std::int64_t r = a % m;
    return r < 0 ? r + m : r;
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b, std::size_t pos) {
    std::int64_t out = 0;
    if (__builtin_mul_overflow(a, b, &out)) throw ParseError("integer overflow", pos);
    return out;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b, std::size_t pos) {
    std::int64_t out = 0;
    if (__builtin_add_overflow(a, b, &out)) throw ParseError("integer overflow", pos);
    return out;
}

// A linear expression as parsed, before variables are given global positions.
struct Linear {
    std::vector<std::pair<std::string, std::int64_t>> terms;
    std::int64_t constant = 0;
};

enum class Relation { ge, gt, le, lt, eq };

struct RawAtom {
    Linear lhs;
    Relation rel = Relation::ge;
    std::int64_t rhs = 0;
    std::int64_t modulus = 0;  // > 0 only for remainder atoms
    std::size_t position = 0;
};

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    Predicate run() {
        Formula root = parse_or();
        skip_space();
        if (pos_ != text_.size()) throw ParseError("unexpected input", pos_);
        Predicate p;
        p.variables = variables_;
        for (const RawAtom& raw : raw_) p.atoms.push_back(lower(raw));
        p.root = std::move(root);
        return p;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::vector<std::string> variables_;
    std::vector<RawAtom> raw_;

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(std::string_view token) {
        skip_space();
        if (text_.substr(pos_, token.size()) == token) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    void expect(std::string_view token) {
        if (!accept(token)) throw ParseError("expected '" + std::string(token) + "'", pos_);
    }

    bool peek_digit() {
        skip_space();
        return pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]));
    }

    bool peek_ident() {
        skip_space();
        if (pos_ >= text_.size()) return false;
        char c = text_[pos_];
        return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
    }

    std::int64_t number() {
        skip_space();
        std::size_t start = pos_;
        std::int64_t v = 0;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            v = checked_add(checked_mul(v, 10, start), text_[pos_] - '0', start);
            ++pos_;
        }
        if (start == pos_) throw ParseError("expected integer", pos_);
        return v;
    }

    std::int64_t signed_number() {
        bool neg = false;
        while (true) {
            if (accept("-")) neg = !neg;
            else if (!accept("+")) break;
        }
        std::int64_t v = number();
        return neg ? -v : v;
    }

    std::string ident() {
        skip_space();
        std::size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'') ++pos_;
            else break;
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    Formula parse_or() {
        std::vector<Formula> parts{parse_and()};
        while (accept("||")) parts.push_back(parse_and());
        return Formula::join(Formula::Op::disj, std::move(parts));
    }

    Formula parse_and() {
        std::vector<Formula> parts{parse_unary()};
        while (accept("&&")) parts.push_back(parse_unary());
        return Formula::join(Formula::Op::conj, std::move(parts));
    }

    Formula parse_unary() {
        skip_space();
        if (accept("!")) return Formula::negate(parse_unary());
        if (accept("(")) {
            Formula inner = parse_or();
            expect(")");
            return inner;
        }
        return parse_atom();
    }

    Linear parse_linear() {
        Linear lin;
        std::size_t start = pos_;
        bool first = true;
        while (true) {
            skip_space();
            std::size_t term_pos = pos_;
            bool neg = false;
            bool had_sign = false;
            while (true) {
                if (accept("-")) {
                    neg = !neg;
                    had_sign = true;
                } else if (accept("+")) {
                    had_sign = true;
                } else {
                    break;
                }
            }
            if (!first && !had_sign) break;
            std::optional<std::int64_t> coeff;
            if (peek_digit()) coeff = number();
            if (coeff) accept("*");
            if (peek_ident()) {
                std::string name = ident();
                for (const auto& [n, c] : lin.terms) {
                    if (n == name) throw ParseError("variable '" + name + "' repeated in one atom", term_pos);
                }
                std::int64_t v = coeff.value_or(1);
                lin.terms.emplace_back(name, neg ? -v : v);
            } else if (coeff) {
                lin.constant = checked_add(lin.constant, neg ? -*coeff : *coeff, term_pos);
            } else {
                throw ParseError("expected term", pos_);
            }
            first = false;
        }
        if (lin.terms.empty()) throw ParseError("atom without variables", start);
        return lin;
    }

    Formula parse_atom() {
        RawAtom raw;
        raw.position = pos_;
        raw.lhs = parse_linear();
        if (accept(">=")) raw.rel = Relation::ge;
        else if (accept("<=")) raw.rel = Relation::le;
        else if (accept(">")) raw.rel = Relation::gt;
        else if (accept("<")) raw.rel = Relation::lt;
        else if (accept("=")) raw.rel = Relation::eq;
        else throw ParseError("expected relation", pos_);
        raw.rhs = signed_number();
        if (raw.rel == Relation::eq) {
            expect("mod");
            std::size_t mpos = pos_;
            raw.modulus = signed_number();
            if (raw.modulus <= 0) throw ParseError("modulus must be positive", mpos);
        }
        for (const auto& [name, c] : raw.lhs.terms) {
            if (std::find(variables_.begin(), variables_.end(), name) == variables_.end()) {
                variables_.push_back(name);
            }
        }
        raw_.push_back(std::move(raw));
        return Formula::leaf(raw_.size() - 1);
    }

    std::vector<std::int64_t> dense(const Linear& lin) const {
        std::vector<std::int64_t> out(variables_.size(), 0);
        for (const auto& [name, c] : lin.terms) {
            auto it = std::find(variables_.begin(), variables_.end(), name);
            out[static_cast<std::size_t>(it - variables_.begin())] = c;
        }
        return out;
    }

    Atom lower(const RawAtom& raw) const {
        std::vector<std::int64_t> coeffs = dense(raw.lhs);
        std::int64_t rhs = checked_add(raw.rhs, -raw.lhs.constant, raw.position);
        if (raw.rel == Relation::eq) {
            return normalize(RemainderAtom{std::move(coeffs), raw.modulus, rhs});
        }
        switch (raw.rel) {
            case Relation::ge: break;
            case Relation::gt: rhs = checked_add(rhs, 1, raw.position); break;
            case Relation::le:
            case Relation::lt:
                for (auto& c : coeffs) c = checked_mul(c, -1, raw.position);
                rhs = checked_mul(rhs, -1, raw.position);
                if (raw.rel == Relation::lt) rhs = checked_add(rhs, 1, raw.position);
                break;
            case Relation::eq: break;
        }
        return ThresholdAtom{std::move(coeffs), rhs};
    }
};

std::string linear_text(const std::vector<std::int64_t>& coeffs, const std::vector<std::string>& vars,
                        bool show_all) {
    std::string out;
    bool any = false;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        std::int64_t c = coeffs[i];
        if (c == 0 && !show_all) continue;
        if (any) out += c < 0 ? " - " : " + ";
        else if (c < 0) out += "-";
        std::uint64_t mag = c < 0 ? std::uint64_t(0) - std::uint64_t(c) : std::uint64_t(c);
        if (mag != 1) out += std::to_string(mag);
        out += vars[i];
        any = true;
    }
    if (!any) {
        // Keep at least one variable position so the atom reparses.
        out = "0" + vars.front();
    }
    return out;
}

std::string formula_text(const Predicate& p, const Formula& f, bool& first_atom, int parent_prec) {
    auto atom_text = [&](const Atom& a) {
        bool all = first_atom;
        first_atom = false;
        if (const auto* t = std::get_if<ThresholdAtom>(&a)) {
            return linear_text(t->coeffs, p.variables, all) + " >= " + std::to_string(t->bound);
        }
        const auto& r = std::get<RemainderAtom>(a);
        return linear_text(r.coeffs, p.variables, all) + " = " + std::to_string(r.residue) + " mod " +
               std::to_string(r.modulus);
    };
    switch (f.op) {
        case Formula::Op::atom: {
            std::string s = atom_text(p.atoms[f.atom]);
            return parent_prec > 0 ? "(" + s + ")" : s;
        }
        case Formula::Op::constant:
            throw std::invalid_argument("constant formulas have no surface syntax");
        case Formula::Op::neg:
            return "!" + formula_text(p, f.children.front(), first_atom, 3);
        case Formula::Op::conj:
        case Formula::Op::disj: {
            int prec = f.op == Formula::Op::conj ? 2 : 1;
            std::string sep = f.op == Formula::Op::conj ? " && " : " || ";
            std::string s;
            for (std::size_t i = 0; i < f.children.size(); ++i) {
                if (i) s += sep;
                s += formula_text(p, f.children[i], first_atom, prec);
            }
            return parent_prec > prec ? "(" + s + ")" : s;
        }
    }
    return {};
}

BigInt dot(const std::vector<std::int64_t>& coeffs, const InputVector& x) {
    BigInt s = 0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) s += BigInt(coeffs[i]) * BigInt(x.at(i));
    return s;
}

bool eval_formula(const Predicate& p, const Formula& f, const InputVector& x) {
    switch (f.op) {
        case Formula::Op::atom: return eval_atom(p.atoms.at(f.atom), x);
        case Formula::Op::constant: return f.value;
        case Formula::Op::neg: return !eval_formula(p, f.children.front(), x);
        case Formula::Op::conj:
            return std::all_of(f.children.begin(), f.children.end(),
                               [&](const Formula& c) { return eval_formula(p, c, x); });
        case Formula::Op::disj:
            return std::any_of(f.children.begin(), f.children.end(),
                               [&](const Formula& c) { return eval_formula(p, c, x); });
    }
    return false;
}

std::uint64_t bit_length(std::int64_t v) {
    std::uint64_t mag = v < 0 ? std::uint64_t(0) - std::uint64_t(v) : std::uint64_t(v);
    std::uint64_t bits = 0;
    while (mag) {
        ++bits;
        mag >>= 1;
    }
    return std::max<std::uint64_t>(bits, 1) + (v < 0 ? 1 : 0);
}

std::uint64_t connectives(const Formula& f) {
    std::uint64_t n = 0;
    if (f.op == Formula::Op::neg) n = 1;
    if (f.op == Formula::Op::conj || f.op == Formula::Op::disj) n = f.children.size() - 1;
    for (const Formula& c : f.children) n += connectives(c);
    return n;
}

nlohmann::json formula_json(const Formula& f) {
    switch (f.op) {
        case Formula::Op::atom: return {{"atom", f.atom}};
        case Formula::Op::constant: return {{"const", f.value}};
        case Formula::Op::neg: return {{"not", formula_json(f.children.front())}};
        case Formula::Op::conj:
        case Formula::Op::disj: {
            nlohmann::json arr = nlohmann::json::array();
            for (const Formula& c : f.children) arr.push_back(formula_json(c));
            return {{f.op == Formula::Op::conj ? "and" : "or", arr}};
        }
    }
    return {};
}

Formula formula_from_json(const nlohmann::json& j) {
    if (j.contains("atom")) return Formula::leaf(j.at("atom").get<std::size_t>());
    if (j.contains("const")) return Formula::constant_of(j.at("const").get<bool>());
    if (j.contains("not")) return Formula::negate(formula_from_json(j.at("not")));
    for (const char* key : {"and", "or"}) {
        if (!j.contains(key)) continue;
        std::vector<Formula> kids;
        for (const auto& c : j.at(key)) kids.push_back(formula_from_json(c));
        Formula f;
        f.op = std::string(key) == "and" ? Formula::Op::conj : Formula::Op::disj;
        f.children = std::move(kids);
        return f;
    }
    throw std::invalid_argument("malformed formula node");
}

}  // namespace

RemainderAtom normalize(RemainderAtom a) {
    if (a.modulus <= 0) throw std::invalid_argument("modulus must be positive");
    for (auto& c : a.coeffs) c = floor_mod(c, a.modulus);
    a.residue = floor_mod(a.residue, a.modulus);
    return a;
}

Predicate parse_predicate(std::string_view text) { return Parser(text).run(); }

std::string to_string(const Predicate& p) {
    bool first = true;
    return formula_text(p, p.root, first, 0);
}

bool eval_atom(const Atom& a, const InputVector& x) {
    if (const auto* t = std::get_if<ThresholdAtom>(&a)) return dot(t->coeffs, x) >= BigInt(t->bound);
    const auto& r = std::get<RemainderAtom>(a);
    BigInt s = dot(r.coeffs, x) % BigInt(r.modulus);
    if (s < 0) s += r.modulus;
    return s == BigInt(r.residue);
}

bool eval(const Predicate& p, const InputVector& x) {
    if (x.size() != p.variables.size()) throw std::invalid_argument("input size mismatch");
    return eval_formula(p, p.root, x);
}

Predicate double_predicate(const Predicate& p) {
    Predicate out;
    out.variables = p.variables;
    for (const std::string& v : p.variables) {
        std::string primed = v + "'";
        while (std::find(out.variables.begin(), out.variables.end(), primed) != out.variables.end()) primed += "'";
        out.variables.push_back(primed);
    }
    auto widen = [](const std::vector<std::int64_t>& c) {
        std::vector<std::int64_t> w = c;
        for (std::int64_t a : c) {
            std::int64_t twice = 0;
            if (__builtin_mul_overflow(a, 2, &twice)) throw std::overflow_error("coefficient overflow in double");
            w.push_back(twice);
        }
        return w;
    };
    for (const Atom& a : p.atoms) {
        if (const auto* t = std::get_if<ThresholdAtom>(&a)) {
            out.atoms.emplace_back(ThresholdAtom{widen(t->coeffs), t->bound});
        } else {
            const auto& r = std::get<RemainderAtom>(a);
            out.atoms.emplace_back(normalize(RemainderAtom{widen(r.coeffs), r.modulus, r.residue}));
        }
    }
    out.root = p.root;
    return out;
}

std::uint64_t size_bits(const Predicate& p) {
    std::uint64_t total = connectives(p.root);
    for (const Atom& a : p.atoms) {
        const auto& coeffs = std::visit([](const auto& at) -> const std::vector<std::int64_t>& { return at.coeffs; }, a);
        for (std::int64_t c : coeffs) {
            if (c != 0) total += bit_length(c) + 1;
        }
        if (const auto* t = std::get_if<ThresholdAtom>(&a)) {
            total += bit_length(t->bound);
        } else {
            const auto& r = std::get<RemainderAtom>(a);
            total += bit_length(r.residue) + bit_length(r.modulus);
        }
    }
    return total;
}

std::vector<std::int64_t> bin_decompose(std::int64_t x) {
    std::vector<std::int64_t> out;
    if (x == 0) return out;
    std::uint64_t mag = x < 0 ? std::uint64_t(0) - std::uint64_t(x) : std::uint64_t(x);
    for (int i = 63; i >= 0; --i) {
        std::uint64_t bit = std::uint64_t(1) << i;
        if (!(mag & bit)) continue;
        if (i == 63) throw std::overflow_error("bin_decompose: magnitude too large");
        auto v = static_cast<std::int64_t>(bit);
        out.push_back(x < 0 ? -v : v);
    }
    return out;
}

InputVector make_input(const Predicate& p, const std::map<std::string, std::uint64_t>& values) {
    InputVector x(p.variables.size(), 0);
    for (const auto& [name, v] : values) {
        auto it = std::find(p.variables.begin(), p.variables.end(), name);
        if (it == p.variables.end()) throw std::invalid_argument("unknown variable '" + name + "'");
        x[static_cast<std::size_t>(it - p.variables.begin())] = v;
    }
    return x;
}

nlohmann::json to_json(const Predicate& p) {
    nlohmann::json atoms = nlohmann::json::array();
    for (const Atom& a : p.atoms) {
        if (const auto* t = std::get_if<ThresholdAtom>(&a)) {
            atoms.push_back({{"kind", "threshold"}, {"coeffs", t->coeffs}, {"bound", t->bound}});
        } else {
            const auto& r = std::get<RemainderAtom>(a);
            atoms.push_back(
                {{"kind", "remainder"}, {"coeffs", r.coeffs}, {"modulus", r.modulus}, {"residue", r.residue}});
        }
    }
    return {{"variables", p.variables}, {"atoms", atoms}, {"formula", formula_json(p.root)}};
}

Predicate predicate_from_json(const nlohmann::json& j) {
    Predicate p;
    p.variables = j.at("variables").get<std::vector<std::string>>();
    for (const auto& a : j.at("atoms")) {
        auto coeffs = a.at("coeffs").get<std::vector<std::int64_t>>();
        if (coeffs.size() != p.variables.size()) throw std::invalid_argument("atom arity mismatch");
        if (a.at("kind") == "threshold") {
            p.atoms.emplace_back(ThresholdAtom{std::move(coeffs), a.at("bound").get<std::int64_t>()});
        } else {
            p.atoms.emplace_back(normalize(RemainderAtom{std::move(coeffs), a.at("modulus").get<std::int64_t>(),
                                                         a.at("residue").get<std::int64_t>()}));
        }
    }
    p.root = formula_from_json(j.at("formula"));
    return p;
}

}  // namespace popc
