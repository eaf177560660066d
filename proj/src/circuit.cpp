#include "popc/circuit.hpp"

#include <algorithm>
#include <stdexcept>

namespace popc {

Circuit Circuit::make_constant(bool v, std::vector<std::string> inputs) {
    Circuit c;
    c.inputs = std::move(inputs);
    c.constant = v;
    return c;
}

bool Circuit::eval_bits(const std::vector<bool>& present) const {
    if (constant) return *constant;
    std::vector<bool> value(gates.size());
    auto read = [&](Ref r) { return r.is_gate() ? bool(value[r.index]) : bool(present.at(r.index)); };
    for (std::size_t g = 0; g < gates.size(); ++g) value[g] = !(read(gates[g].a) && read(gates[g].b));
    return read(out);
}

bool Circuit::eval(const std::set<std::string>& support) const {
    std::vector<bool> present(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) present[i] = support.count(inputs[i]) > 0;
    return eval_bits(present);
}

std::vector<std::string> Circuit::check() const {
    std::vector<std::string> problems;
    auto valid = [&](Ref r, std::size_t limit) {
        return r.is_gate() ? r.index < limit : r.index < inputs.size();
    };
    for (std::size_t g = 0; g < gates.size(); ++g) {
        if (!valid(gates[g].a, g) || !valid(gates[g].b, g)) {
            problems.push_back("gate " + std::to_string(g) + " has a forward or dangling reference");
        }
    }
    if (!constant && !valid(out, gates.size())) problems.emplace_back("dangling output reference");
    if (constant && !gates.empty()) problems.emplace_back("constant circuit with gates");
    return problems;
}

CircuitBuilder::CircuitBuilder(std::vector<std::string> inputs) {
    for (auto& label : inputs) input(label);
}

CircuitBuilder::Wire CircuitBuilder::input(std::uint32_t i) const {
    if (i >= inputs_.size()) throw std::out_of_range("circuit input index");
    return {Wire::Kind::input, i};
}

CircuitBuilder::Wire CircuitBuilder::input(const std::string& label) {
    auto [it, fresh] = input_index_.emplace(label, static_cast<std::uint32_t>(inputs_.size()));
    if (fresh) inputs_.push_back(label);
    return {Wire::Kind::input, it->second};
}

Ref CircuitBuilder::as_ref(Wire w) {
    if (w.kind == Wire::Kind::input) return Ref::input(w.index);
    if (w.kind == Wire::Kind::gate) return Ref::gate(w.index);
    throw std::logic_error("constant wire has no reference");
}

CircuitBuilder::Wire CircuitBuilder::nand(Wire a, Wire b) {
    using K = Wire::Kind;
    if (a.kind == K::zero || b.kind == K::zero) return one();
    if (a.kind == K::one && b.kind == K::one) return zero();
    if (a.kind == K::one) return negate(b);
    if (b.kind == K::one) return negate(a);
    if (a == b) return negate(a);
    if (b < a) std::swap(a, b);
    // x NAND (NOT x) is constantly true.
    auto is_not_of = [&](Wire g, Wire x) {
        if (g.kind != K::gate) return false;
        const Gate& gate = gates_[g.index];
        return gate.a == gate.b && gate.a == as_ref(x);
    };
    if (is_not_of(a, b) || is_not_of(b, a)) return one();
    auto key = std::make_pair(as_ref(a), as_ref(b));
    if (auto it = shared_.find(key); it != shared_.end()) return {K::gate, it->second};
    auto index = static_cast<std::uint32_t>(gates_.size());
    gates_.push_back({key.first, key.second});
    shared_.emplace(key, index);
    return {K::gate, index};
}

CircuitBuilder::Wire CircuitBuilder::negate(Wire a) {
    using K = Wire::Kind;
    if (a.kind == K::zero) return one();
    if (a.kind == K::one) return zero();
    if (a.kind == K::gate) {
        const Gate& g = gates_[a.index];
        if (g.a == g.b) return g.a.is_gate() ? Wire{K::gate, g.a.index} : Wire{K::input, g.a.index};
    }
    Ref r = as_ref(a);
    auto key = std::make_pair(r, r);
    if (auto it = shared_.find(key); it != shared_.end()) return {K::gate, it->second};
    auto index = static_cast<std::uint32_t>(gates_.size());
    gates_.push_back({r, r});
    shared_.emplace(key, index);
    return {K::gate, index};
}

CircuitBuilder::Wire CircuitBuilder::conj(Wire a, Wire b) { return negate(nand(a, b)); }

CircuitBuilder::Wire CircuitBuilder::disj(Wire a, Wire b) { return nand(negate(a), negate(b)); }

CircuitBuilder::Wire CircuitBuilder::exclusive(Wire a, Wire b) {
    using K = Wire::Kind;
    if (a.kind == K::zero) return b;
    if (b.kind == K::zero) return a;
    if (a.kind == K::one) return negate(b);
    if (b.kind == K::one) return negate(a);
    if (a == b) return zero();
    Wire t = nand(a, b);
    return nand(nand(a, t), nand(b, t));
}

CircuitBuilder::Wire CircuitBuilder::majority(Wire a, Wire b, Wire c) {
    using K = Wire::Kind;
    // Fold constants first so the generic form does not leave dead gates.
    if (a.kind == K::zero) return conj(b, c);
    if (b.kind == K::zero) return conj(a, c);
    if (c.kind == K::zero) return conj(a, b);
    if (a.kind == K::one) return disj(b, c);
    if (b.kind == K::one) return disj(a, c);
    if (c.kind == K::one) return disj(a, b);
    return nand(nand(a, b), nand(c, nand(negate(a), negate(b))));
}

CircuitBuilder::Wire CircuitBuilder::all_of(const std::vector<Wire>& ws) {
    Wire acc = one();
    for (Wire w : ws) acc = conj(acc, w);
    return acc;
}

CircuitBuilder::Wire CircuitBuilder::any_of(const std::vector<Wire>& ws) {
    Wire acc = zero();
    for (Wire w : ws) acc = disj(acc, w);
    return acc;
}

CircuitBuilder::Wire CircuitBuilder::embed(const Circuit& c, const std::function<Wire(const std::string&)>& bind) {
    if (c.constant) return constant(*c.constant);
    std::vector<Wire> ins;
    ins.reserve(c.inputs.size());
    for (const auto& label : c.inputs) ins.push_back(bind(label));
    std::vector<Wire> gw(c.gates.size());
    auto read = [&](Ref r) { return r.is_gate() ? gw[r.index] : ins[r.index]; };
    for (std::size_t g = 0; g < c.gates.size(); ++g) gw[g] = nand(read(c.gates[g].a), read(c.gates[g].b));
    return read(c.out);
}

Circuit CircuitBuilder::finish(Wire out) const {
    using K = Wire::Kind;
    if (out.kind == K::zero || out.kind == K::one) return Circuit::make_constant(out.kind == K::one, inputs_);
    Circuit c;
    c.inputs = inputs_;
    if (out.kind == K::input) {
        c.out = Ref::input(out.index);
        return c;
    }
    std::vector<bool> live(gates_.size(), false);
    live[out.index] = true;
    for (std::size_t g = gates_.size(); g-- > 0;) {
        if (!live[g]) continue;
        for (Ref r : {gates_[g].a, gates_[g].b}) {
            if (r.is_gate()) live[r.index] = true;
        }
    }
    std::vector<std::uint32_t> renumber(gates_.size(), 0);
    for (std::size_t g = 0; g < gates_.size(); ++g) {
        if (!live[g]) continue;
        renumber[g] = static_cast<std::uint32_t>(c.gates.size());
        auto map = [&](Ref r) { return r.is_gate() ? Ref::gate(renumber[r.index]) : r; };
        c.gates.push_back({map(gates_[g].a), map(gates_[g].b)});
    }
    c.out = Ref::gate(renumber[out.index]);
    return c;
}

namespace {

using Wire = CircuitBuilder::Wire;

std::vector<Wire> add_constant(CircuitBuilder& b, const std::vector<Wire>& bits, std::uint64_t k, unsigned width) {
    std::vector<Wire> sum;
    Wire carry = b.zero();
    for (unsigned i = 0; i < width; ++i) {
        Wire x = i < bits.size() ? bits[i] : b.zero();
        Wire kb = b.constant(i < 64 && ((k >> i) & 1));
        sum.push_back(b.exclusive(b.exclusive(x, kb), carry));
        carry = b.majority(x, kb, carry);
    }
    return sum;
}

unsigned bit_width(std::uint64_t v) {
    unsigned w = 0;
    while (v) {
        ++w;
        v >>= 1;
    }
    return std::max(w, 1u);
}

Wire build_expr(CircuitBuilder& b, const BoolExpr& e, const std::vector<Wire>& slots) {
    switch (e.op) {
        case BoolExpr::Op::slot: return slots.at(e.slot);
        case BoolExpr::Op::constant: return b.constant(e.value);
        case BoolExpr::Op::neg: return b.negate(build_expr(b, e.children.at(0), slots));
        case BoolExpr::Op::conj:
        case BoolExpr::Op::disj: {
            std::vector<Wire> parts;
            for (const auto& c : e.children) parts.push_back(build_expr(b, c, slots));
            return e.op == BoolExpr::Op::conj ? b.all_of(parts) : b.any_of(parts);
        }
    }
    return b.zero();
}

}  // namespace

Circuit build_remainder_output(unsigned degree, std::int64_t modulus, std::int64_t residue) {
    if (modulus < 2 || degree > 62) throw std::invalid_argument("remainder circuit: modulus must be at least 2");
    if ((std::int64_t(1) << degree) < modulus || (degree > 0 && (std::int64_t(1) << (degree - 1)) >= modulus)) {
        throw std::invalid_argument("remainder circuit: degree must be ceil(log2(modulus))");
    }
    if (residue < 0 || residue >= modulus) throw std::invalid_argument("remainder circuit: residue out of range");
    CircuitBuilder b;
    std::vector<Wire> bits;
    for (unsigned i = 0; i <= degree; ++i) bits.push_back(b.input(std::to_string(std::int64_t(1) << i)));
    const std::int64_t limit = std::int64_t(1) << (degree + 1);
    std::vector<Wire> matches;
    for (std::int64_t v = residue; v < limit; v += modulus) {
        std::vector<Wire> literals;
        for (unsigned i = 0; i <= degree; ++i) literals.push_back((v >> i) & 1 ? bits[i] : b.negate(bits[i]));
        matches.push_back(b.all_of(literals));
    }
    return b.finish(b.any_of(matches));
}

Circuit build_threshold_output(unsigned degree, std::int64_t bound) {
    if (degree > 60) throw std::invalid_argument("threshold circuit: degree too large");
    CircuitBuilder b;
    std::vector<Wire> pos, neg;
    for (unsigned i = 0; i <= degree; ++i) pos.push_back(b.input(std::to_string(std::int64_t(1) << i)));
    for (unsigned i = 0; i <= degree; ++i) neg.push_back(b.input(std::to_string(-(std::int64_t(1) << i))));
    // P - N >= c  iff  N + max(c-1,0) < P + max(1-c,0).
    const std::uint64_t k_neg = bound >= 1 ? std::uint64_t(bound) - 1 : 0;
    const std::uint64_t k_pos = bound >= 1 ? 0 : std::uint64_t(1) - std::uint64_t(bound);
    const std::uint64_t top = (std::uint64_t(1) << (degree + 1)) - 1;
    const unsigned width = bit_width(top + std::max(k_neg, k_pos));
    std::vector<Wire> lhs = add_constant(b, neg, k_neg, width);
    std::vector<Wire> rhs = add_constant(b, pos, k_pos, width);
    Wire borrow = b.zero();
    for (unsigned i = 0; i < width; ++i) borrow = b.majority(b.negate(lhs[i]), rhs[i], borrow);
    return b.finish(borrow);
}

Circuit combine(const BoolExpr& expr, const std::vector<Circuit>& subs) {
    CircuitBuilder b;
    std::set<std::string> seen;
    std::vector<Wire> slots;
    for (const Circuit& c : subs) {
        for (const auto& label : c.inputs) {
            if (!seen.insert(label).second) throw std::invalid_argument("combine: shared input label " + label);
            b.input(label);
        }
    }
    for (const Circuit& c : subs) {
        slots.push_back(b.embed(c, [&](const std::string& label) { return b.input(label); }));
    }
    return b.finish(build_expr(b, expr, slots));
}

Circuit rename_inputs(const Circuit& c, const std::function<std::string(const std::string&)>& rename) {
    Circuit out = c;
    for (auto& label : out.inputs) label = rename(label);
    return out;
}

Circuit substitute_inputs(const Circuit& c,
                          const std::function<std::vector<std::string>(const std::string&)>& expand) {
    CircuitBuilder b;
    std::map<std::string, std::vector<std::string>> expansion;
    for (const auto& label : c.inputs) {
        expansion[label] = expand(label);
        for (const auto& e : expansion[label]) b.input(e);
    }
    Wire out = b.embed(c, [&](const std::string& label) {
        std::vector<Wire> parts;
        for (const auto& e : expansion[label]) parts.push_back(b.input(e));
        return b.any_of(parts);
    });
    return b.finish(out);
}

namespace {

nlohmann::json ref_json(const Circuit& c, Ref r) {
    if (r.is_gate()) return {{"g", r.index}};
    return {{"in", c.inputs.at(r.index)}};
}

Ref ref_from_json(const nlohmann::json& j, const std::map<std::string, std::uint32_t>& index) {
    if (j.contains("g")) return Ref::gate(j.at("g").get<std::uint32_t>());
    const auto label = j.at("in").get<std::string>();
    auto it = index.find(label);
    if (it == index.end()) throw std::invalid_argument("circuit reference to undeclared input " + label);
    return Ref::input(it->second);
}

}  // namespace

nlohmann::json to_json(const Circuit& c) {
    nlohmann::json gates = nlohmann::json::array();
    for (const Gate& g : c.gates) gates.push_back({{"a", ref_json(c, g.a)}, {"b", ref_json(c, g.b)}});
    nlohmann::json out = c.constant ? nlohmann::json{{"const", *c.constant ? 1 : 0}} : ref_json(c, c.out);
    return {{"inputs", c.inputs}, {"gates", gates}, {"out", out}};
}

Circuit circuit_from_json(const nlohmann::json& j) {
    Circuit c;
    c.inputs = j.at("inputs").get<std::vector<std::string>>();
    std::map<std::string, std::uint32_t> index;
    for (std::uint32_t i = 0; i < c.inputs.size(); ++i) {
        if (!index.emplace(c.inputs[i], i).second) throw std::invalid_argument("duplicate circuit input");
    }
    for (const auto& g : j.at("gates")) c.gates.push_back({ref_from_json(g.at("a"), index), ref_from_json(g.at("b"), index)});
    const auto& out = j.at("out");
    if (out.contains("const")) {
        c.constant = out.at("const").get<int>() != 0;
    } else {
        c.out = ref_from_json(out, index);
    }
    auto problems = c.check();
    if (!problems.empty()) throw std::invalid_argument("malformed circuit: " + problems.front());
    return c;
}

}  // namespace popc
