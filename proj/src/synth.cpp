#include "popc/synth.hpp"

#include <algorithm>
#include <stdexcept>

namespace popc {

unsigned ceil_log2(std::uint64_t x) {
    if (x == 0) throw std::invalid_argument("ceil_log2(0)");
    unsigned k = 0;
    while (k < 64 && (std::uint64_t(1) << k) < x) ++k;
    return k;
}

namespace {

std::string power_label(std::int64_t v) { return std::to_string(v); }

std::uint64_t magnitude(std::int64_t v) { return v < 0 ? std::uint64_t(0) - std::uint64_t(v) : std::uint64_t(v); }

Multiset values_to_multiset(PopulationComputer& p, const std::vector<std::int64_t>& values, std::size_t zeros) {
    Multiset m;
    for (std::int64_t v : values) m.add(p.add_state(power_label(v)));
    m.add(p.add_state(reservoir_label), zeros);
    return m;
}

}  // namespace

PopulationComputer remainder_sub(std::int64_t modulus, std::int64_t residue) {
    if (modulus < 2) throw std::invalid_argument("remainder subcomputer needs modulus >= 2");
    if (modulus > (std::int64_t(1) << 40)) throw std::invalid_argument("modulus too large");
    const unsigned d = ceil_log2(std::uint64_t(modulus));
    const std::int64_t top = std::int64_t(1) << d;
    PopulationComputer p;
    const StateId zero = p.add_state(reservoir_label);
    for (unsigned i = 0; i <= d; ++i) p.add_state(power_label(std::int64_t(1) << i));
    auto power = [&](unsigned i) { return p.state(power_label(std::int64_t(1) << i)); };

    for (unsigned i = 0; i < d; ++i) p.add_transition({{power(i), 2}}, Multiset{{power(i + 1), 1}, {zero, 1}});

    const auto rest = bin_decompose(top - modulus);
    if (rest.size() >= 2) {
        p.add_transition(Multiset{{power(d), 1}, {zero, rest.size() - 1}}, values_to_multiset(p, rest, 0));
    } else {
        p.add_transition(Multiset{{power(d), 1}, {zero, 1}}, values_to_multiset(p, rest, 2 - rest.size()));
    }
    if (d >= 2) {
        const auto bulk = bin_decompose(std::int64_t((__int128(d) * top) % modulus));
        p.add_transition(Multiset{{power(d), d}}, values_to_multiset(p, bulk, d - bulk.size()));
    }
    p.helpers.add(zero, 3 * d);
    p.output = build_remainder_output(d, modulus, ((residue % modulus) + modulus) % modulus);
    return p;
}

unsigned threshold_min_degree(std::int64_t bound, std::int64_t max_coeff, std::size_t atoms) {
    const std::uint64_t c = std::max<std::uint64_t>(magnitude(bound), 1);
    unsigned d = ceil_log2(c) + 1;
    const std::uint64_t spread = std::uint64_t(std::max<std::size_t>(atoms, 1)) * magnitude(max_coeff);
    if (spread > 0) d = std::max(d, ceil_log2(spread));
    return std::max(d, 1u);
}

PopulationComputer threshold_sub(std::int64_t bound, unsigned degree) {
    if (degree < threshold_min_degree(bound, 0, 1)) throw std::invalid_argument("threshold degree below minimum");
    if (degree > 60) throw std::invalid_argument("threshold degree too large");
    PopulationComputer p;
    const StateId zero = p.add_state(reservoir_label);
    for (unsigned i = 0; i <= degree; ++i) p.add_state(power_label(std::int64_t(1) << i));
    for (unsigned i = 0; i <= degree; ++i) p.add_state(power_label(-(std::int64_t(1) << i)));
    auto pos = [&](unsigned i) { return p.state(power_label(std::int64_t(1) << i)); };
    auto neg = [&](unsigned i) { return p.state(power_label(-(std::int64_t(1) << i))); };

    for (unsigned i = 0; i < degree; ++i) {
        p.add_transition({{pos(i), 2}}, Multiset{{zero, 1}, {pos(i + 1), 1}});
        p.add_transition({{neg(i), 2}}, Multiset{{zero, 1}, {neg(i + 1), 1}});
    }
    for (unsigned i = 0; i <= degree; ++i) p.add_transition(Multiset{{neg(i), 1}, {pos(i), 1}}, {{zero, 2}});
    p.add_transition(Multiset{{pos(degree), 1}, {neg(degree - 1), 1}}, Multiset{{zero, 1}, {pos(degree - 1), 1}});
    p.add_transition(Multiset{{neg(degree), 1}, {pos(degree - 1), 1}}, Multiset{{zero, 1}, {neg(degree - 1), 1}});
    p.helpers.add(zero, degree);
    p.output = build_threshold_output(degree, bound);
    return p;
}

std::string input_label(const std::string& name) { return "X:" + name; }

namespace {

BoolExpr skeleton(const Formula& f, const std::vector<std::optional<std::size_t>>& slot_of,
                  const std::vector<AtomPlan>& plans) {
    BoolExpr e;
    switch (f.op) {
        case Formula::Op::atom:
            if (slot_of.at(f.atom)) {
                e.op = BoolExpr::Op::slot;
                e.slot = *slot_of[f.atom];
            } else {
                e.op = BoolExpr::Op::constant;
                e.value = plans.at(f.atom).constant_value;
            }
            return e;
        case Formula::Op::constant:
            e.op = BoolExpr::Op::constant;
            e.value = f.value;
            return e;
        case Formula::Op::neg: e.op = BoolExpr::Op::neg; break;
        case Formula::Op::conj: e.op = BoolExpr::Op::conj; break;
        case Formula::Op::disj: e.op = BoolExpr::Op::disj; break;
    }
    for (const Formula& c : f.children) e.children.push_back(skeleton(c, slot_of, plans));
    return e;
}

const std::vector<std::int64_t>& coefficients(const Atom& a) {
    return std::visit([](const auto& at) -> const std::vector<std::int64_t>& { return at.coeffs; }, a);
}

}  // namespace

Compiled compile_with_plan(const Predicate& pred, const DegreeOverrides& overrides) {
    if (pred.atoms.empty()) throw std::invalid_argument("predicate has no atoms");
    const std::size_t s = pred.atoms.size();
    Compiled out;
    PopulationComputer& p = out.computer;
    SynthesisPlan& plan = out.plan;
    const StateId zero = p.add_state(reservoir_label);
    for (const auto& v : pred.variables) p.inputs.push_back(p.add_state(input_label(v)));

    std::vector<PopulationComputer> subs(s);
    std::vector<std::optional<std::size_t>> slot_of(s);
    std::vector<Circuit> circuits;
    for (std::size_t j = 0; j < s; ++j) {
        AtomPlan ap;
        const Atom& atom = pred.atoms[j];
        if (const auto* r = std::get_if<RemainderAtom>(&atom)) {
            if (r->modulus == 1) {
                ap.kind = AtomPlan::Kind::constant;
                ap.constant_value = true;
            } else {
                ap.kind = AtomPlan::Kind::remainder;
                ap.degree = ceil_log2(std::uint64_t(r->modulus));
                ap.prefix = "r" + std::to_string(j + 1) + ":";
                subs[j] = remainder_sub(r->modulus, r->residue);
            }
        } else {
            const auto& t = std::get<ThresholdAtom>(atom);
            std::int64_t amax = 0;
            for (auto a : t.coeffs) amax = std::max<std::int64_t>(amax, std::int64_t(magnitude(a)));
            const unsigned least = threshold_min_degree(t.bound, amax, s);
            ap.kind = AtomPlan::Kind::threshold;
            if (auto it = overrides.find(j); it != overrides.end()) {
                if (it->second < least) {
                    throw std::invalid_argument("threshold degree " + std::to_string(it->second) + " for atom " +
                                                std::to_string(j + 1) + " is below the minimum " +
                                                std::to_string(least));
                }
                ap.degree = it->second;
            } else {
                ap.degree = least + 4;
            }
            ap.prefix = "t" + std::to_string(j + 1) + ":";
            subs[j] = threshold_sub(t.bound, ap.degree);
        }
        if (ap.kind != AtomPlan::Kind::constant) {
            const PopulationComputer& sub = subs[j];
            auto rename = [&](const std::string& label) {
                return label == reservoir_label ? label : ap.prefix + label;
            };
            for (const auto& label : sub.labels()) p.add_state(rename(label));
            for (const auto& t : sub.transitions()) {
                Multiset lhs, rhs;
                for (const auto& [q, k] : t.lhs.entries()) lhs.add(p.state(rename(sub.label(q))), k);
                for (const auto& [q, k] : t.rhs.entries()) rhs.add(p.state(rename(sub.label(q))), k);
                p.add_transition(std::move(lhs), std::move(rhs));
            }
            ap.helpers = sub.helpers.size();
            plan.helpers += ap.helpers;
            slot_of[j] = circuits.size();
            circuits.push_back(rename_inputs(std::get<Circuit>(sub.output), rename));
        }
        plan.atoms.push_back(ap);
    }

    for (std::size_t i = 0; i < pred.variables.size(); ++i) {
        Multiset rhs;
        for (std::size_t j = 0; j < s; ++j) {
            if (plan.atoms[j].kind == AtomPlan::Kind::constant) continue;
            for (std::int64_t v : bin_decompose(coefficients(pred.atoms[j])[i])) {
                rhs.add(p.state(plan.atoms[j].prefix + std::to_string(v)));
            }
        }
        const std::size_t b = rhs.size();
        plan.split.push_back(b);
        Multiset lhs{{p.inputs[i], 1}, {zero, b > 1 ? b - 1 : 1}};
        if (b <= 1) rhs.add(zero, 2 - b);
        p.add_transition(std::move(lhs), std::move(rhs));
    }
    plan.splitsize = plan.split.empty() ? 0 : *std::max_element(plan.split.begin(), plan.split.end());
    plan.helpers += std::max<std::size_t>(plan.splitsize, 2) - 1;
    p.helpers.add(zero, plan.helpers);
    p.output = combine(skeleton(pred.root, slot_of, plan.atoms), circuits);
    return out;
}

namespace {

const char* kind_name(AtomPlan::Kind k) {
    switch (k) {
        case AtomPlan::Kind::remainder: return "remainder";
        case AtomPlan::Kind::threshold: return "threshold";
        default: return "constant";
    }
}

AtomPlan::Kind kind_from(const std::string& s) {
    if (s == "remainder") return AtomPlan::Kind::remainder;
    if (s == "threshold") return AtomPlan::Kind::threshold;
    if (s == "constant") return AtomPlan::Kind::constant;
    throw std::invalid_argument("unknown atom kind '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const SynthesisPlan& plan) {
    nlohmann::json atoms = nlohmann::json::array();
    for (const auto& a : plan.atoms) {
        atoms.push_back({{"kind", kind_name(a.kind)},
                         {"degree", a.degree},
                         {"prefix", a.prefix},
                         {"constant_value", a.constant_value},
                         {"helpers", a.helpers}});
    }
    return {{"atoms", atoms}, {"split", plan.split}, {"splitsize", plan.splitsize}, {"helpers", plan.helpers}};
}

SynthesisPlan plan_from_json(const nlohmann::json& j) {
    SynthesisPlan plan;
    for (const auto& a : j.at("atoms")) {
        AtomPlan ap;
        ap.kind = kind_from(a.at("kind").get<std::string>());
        ap.degree = a.at("degree").get<unsigned>();
        ap.prefix = a.at("prefix").get<std::string>();
        ap.constant_value = a.at("constant_value").get<bool>();
        ap.helpers = a.at("helpers").get<Count>();
        plan.atoms.push_back(ap);
    }
    plan.split = j.at("split").get<std::vector<std::size_t>>();
    plan.splitsize = j.at("splitsize").get<std::size_t>();
    plan.helpers = j.at("helpers").get<Count>();
    return plan;
}

std::vector<SubcomputerStats> subcomputer_stats(const PopulationComputer& p, const SynthesisPlan& plan) {
    std::vector<SubcomputerStats> out;
    for (const auto& a : plan.atoms) {
        SubcomputerStats st{a.prefix, a.kind, a.degree, 0, 0, a.helpers};
        if (a.kind == AtomPlan::Kind::constant) {
            out.push_back(st);
            continue;
        }
        std::vector<char> mine(p.state_count(), 0);
        for (StateId q = 0; q < p.state_count(); ++q) {
            const std::string& l = p.label(q);
            mine[q] = l == reservoir_label || l.rfind(a.prefix, 0) == 0;
            st.states += mine[q];
        }
        for (const auto& t : p.transitions()) {
            bool inside = true, own = false;
            for (const auto* m : {&t.lhs, &t.rhs}) {
                for (const auto& [q, k] : m->entries()) {
                    inside = inside && mine[q];
                    own = own || p.label(q) != reservoir_label;
                }
            }
            st.transitions += inside && own;
        }
        out.push_back(st);
    }
    return out;
}

PopulationComputer compile(const Predicate& p, const DegreeOverrides& overrides) {
    return compile_with_plan(p, overrides).computer;
}

std::uint64_t PotentialWeights::max() const {
    return weight.empty() ? 0 : *std::max_element(weight.begin(), weight.end());
}

std::uint64_t PotentialWeights::of(const Multiset& m) const {
    std::uint64_t total = 0;
    for (const auto& [q, k] : m.entries()) total += weight.at(q) * k;
    return total;
}

PotentialWeights potential(const PopulationComputer& p) {
    PotentialWeights w;
    w.weight.assign(p.state_count(), 0);
    std::vector<bool> known(p.state_count(), false);
    // Highest exponent per remainder namespace.
    std::map<std::string, unsigned> top;
    auto split = [](const std::string& label) {
        auto colon = label.find(':');
        return std::make_pair(label.substr(0, colon + 1), label.substr(colon + 1));
    };
    for (StateId q = 0; q < p.state_count(); ++q) {
        const auto& label = p.label(q);
        if (label.size() > 1 && label[0] == 'r' && label.find(':') != std::string::npos) {
            auto [prefix, value] = split(label);
            top[prefix] = std::max(top[prefix], ceil_log2(std::stoull(value)));
        }
    }
    for (StateId q = 0; q < p.state_count(); ++q) {
        const auto& label = p.label(q);
        if (label == reservoir_label) {
            known[q] = true;
        } else if (label.rfind("X:", 0) == 0) {
            continue;
        } else if (label[0] == 't' && label.find(':') != std::string::npos) {
            w.weight[q] = 1;
            known[q] = true;
        } else if (label[0] == 'r' && label.find(':') != std::string::npos) {
            auto [prefix, value] = split(label);
            const unsigned d = top[prefix];
            const unsigned i = ceil_log2(std::stoull(value));
            const unsigned shift = ceil_log2(6ull * std::max(d, 1u));
            const unsigned dp = d > shift ? d - shift : 0;
            w.weight[q] = i < dp ? 2 : (std::uint64_t(1) << (i - dp)) + 1;
            known[q] = true;
        } else {
            throw std::invalid_argument("potential: state '" + label + "' is not from a compiled computer");
        }
    }
    for (StateId x : p.inputs) {
        for (const auto& t : p.transitions()) {
            if (t.lhs[x] == 0) continue;
            std::uint64_t sum = t.arity() - 1;
            for (const auto& [q, k] : t.rhs.entries()) {
                if (!known[q]) throw std::invalid_argument("potential: distribution into unknown state");
                sum += w.weight[q] * k;
            }
            w.weight[x] = sum;
            known[x] = true;
        }
    }
    for (StateId q = 0; q < p.state_count(); ++q) {
        if (!known[q]) throw std::invalid_argument("potential: no weight for '" + p.label(q) + "'");
    }
    return w;
}

std::optional<std::size_t> check_potential(const PopulationComputer& p, const PotentialWeights& w) {
    if (w.weight.size() != p.state_count()) throw std::invalid_argument("potential weights do not cover all states");
    for (std::size_t i = 0; i < p.transitions().size(); ++i) {
        const auto& t = p.transitions()[i];
        if (w.of(t.lhs) < w.of(t.rhs) + t.arity() - 1) return i;
    }
    return std::nullopt;
}

}  // namespace popc
