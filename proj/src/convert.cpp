#include "popc/convert.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace popc {

namespace {

using Term = RefinementMap::Term;

// Refinement images recorded by label while a computer is being built; ids
// are only fixed after trimming.
struct ImageBuilder {
    std::unordered_map<std::string, std::vector<Term>> image;
    std::vector<Term> offset;

    void set(const std::string& label, std::vector<Term> terms) { image[label] = std::move(terms); }

    RefinementMap finish(const PopulationComputer& p) const {
        RefinementMap m;
        m.image.resize(p.state_count());
        for (StateId q = 0; q < p.state_count(); ++q) {
            auto it = image.find(p.label(q));
            if (it == image.end()) throw std::logic_error("no refinement image for " + p.label(q));
            m.image[q] = it->second;
        }
        m.offset = offset;
        return m;
    }
};

std::vector<Term> terms_of(const Multiset& m, std::int64_t scale = 1) {
    std::vector<Term> t;
    for (const auto& [q, k] : m.entries()) t.emplace_back(q, scale * std::int64_t(k));
    return t;
}

std::vector<Term> merge_terms(std::vector<Term> a, const std::vector<Term>& b) {
    std::map<StateId, std::int64_t> acc;
    for (const auto& [q, k] : a) acc[q] += k;
    for (const auto& [q, k] : b) acc[q] += k;
    std::vector<Term> out;
    for (const auto& [q, k] : acc) {
        if (k != 0) out.emplace_back(q, k);
    }
    return out;
}

// Enumeration of a multiset with repetitions, in state order.
std::vector<StateId> expand(const Multiset& m) {
    std::vector<StateId> v;
    for (const auto& [q, k] : m.entries()) v.insert(v.end(), k, q);
    return v;
}

Multiset pair_of(StateId a, StateId b) {
    Multiset m;
    m.add(a);
    m.add(b);
    return m;
}

std::uint64_t pair_key(StateId a, StateId b) {
    if (a > b) std::swap(a, b);
    return (std::uint64_t(a) << 32) | b;
}

}  // namespace

std::optional<Configuration> RefinementMap::apply(const Configuration& c) const {
    std::map<StateId, std::int64_t> acc;
    for (const auto& [q, k] : offset) acc[q] += k;
    for (const auto& [q, k] : c.entries()) {
        for (const auto& [old, coeff] : image.at(q)) acc[old] += coeff * std::int64_t(k);
    }
    Configuration out;
    for (const auto& [q, k] : acc) {
        if (k < 0) return std::nullopt;
        out.add(q, Count(k));
    }
    return out;
}

nlohmann::json to_json(const RefinementMap& m, const PopulationComputer& from, const PopulationComputer& to) {
    nlohmann::json j = nlohmann::json::object();
    for (StateId q = 0; q < m.image.size(); ++q) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [old, k] : m.image[q]) row[to.label(old)] = k;
        j[from.label(q)] = row;
    }
    if (!m.offset.empty()) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [old, k] : m.offset) row[to.label(old)] = k;
        j["@offset"] = row;
    }
    return j;
}

RefinementMap refinement_from_json(const nlohmann::json& j, const PopulationComputer& from,
                                   const PopulationComputer& to) {
    RefinementMap m;
    m.image.resize(from.state_count());
    auto row = [&](const nlohmann::json& r) {
        std::vector<Term> t;
        for (const auto& [label, k] : r.items()) t.emplace_back(to.state(label), k.get<std::int64_t>());
        return merge_terms(t, {});
    };
    for (const auto& [label, r] : j.items()) {
        if (label == "@offset") m.offset = row(r);
        else m.image.at(from.state(label)) = row(r);
    }
    return m;
}

PopulationComputer trim(const PopulationComputer& p, std::vector<std::optional<StateId>>* kept) {
    const std::size_t n = p.state_count();
    const auto& ts = p.transitions();
    std::vector<char> reached(n, 0);
    std::vector<std::size_t> missing(ts.size());
    std::vector<std::vector<std::size_t>> readers(n);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        missing[i] = ts[i].lhs.entries().size();
        for (const auto& [q, k] : ts[i].lhs.entries()) readers[q].push_back(i);
    }
    std::vector<StateId> work;
    auto reach = [&](StateId q) {
        if (!reached[q]) {
            reached[q] = 1;
            work.push_back(q);
        }
    };
    for (StateId q : p.inputs) reach(q);
    for (const auto& [q, k] : p.helpers.entries()) reach(q);
    while (!work.empty()) {
        StateId q = work.back();
        work.pop_back();
        for (std::size_t i : readers[q]) {
            if (--missing[i] == 0) {
                for (const auto& [r, k] : ts[i].rhs.entries()) reach(r);
            }
        }
    }

    PopulationComputer out;
    std::vector<std::optional<StateId>> map(n);
    for (StateId q = 0; q < n; ++q) {
        if (reached[q]) map[q] = out.add_state(p.label(q));
    }
    auto remap = [&](const Multiset& m) {
        Multiset r;
        for (const auto& [q, k] : m.entries()) r.add(*map[q], k);
        return r;
    };
    for (const auto& t : ts) {
        bool live = std::all_of(t.lhs.entries().begin(), t.lhs.entries().end(),
                                [&](const auto& e) { return reached[e.first] != 0; });
        if (live) out.add_transition(remap(t.lhs), remap(t.rhs));
    }
    for (StateId q : p.inputs) out.inputs.push_back(*map[q]);
    out.helpers = remap(p.helpers);
    if (const auto* c = std::get_if<Circuit>(&p.output)) {
        bool dropped = std::any_of(c->inputs.begin(), c->inputs.end(), [&](const std::string& label) {
            auto q = p.find_state(label);
            return !q || !reached[*q];
        });
        if (!dropped) {
            out.output = *c;
        } else {
            out.output = substitute_inputs(*c, [&](const std::string& label) {
                auto q = p.find_state(label);
                return q && reached[*q] ? std::vector<std::string>{label} : std::vector<std::string>{};
            });
        }
    } else if (const auto* m = std::get_if<MarkedConsensus>(&p.output)) {
        MarkedConsensus mc;
        for (StateId q : m->zero) {
            if (map[q]) mc.zero.insert(*map[q]);
        }
        for (StateId q : m->one) {
            if (map[q]) mc.one.insert(*map[q]);
        }
        out.output = mc;
    } else {
        Consensus cons;
        for (StateId q : std::get<Consensus>(p.output).one) {
            if (map[q]) cons.one.insert(*map[q]);
        }
        out.output = cons;
    }
    if (kept) *kept = std::move(map);
    return out;
}

namespace {

// Trims and projects the recorded images onto the surviving states.
Converted finish_conversion(const PopulationComputer& built, const ImageBuilder& images) {
    Converted c;
    c.computer = trim(built);
    c.map = images.finish(c.computer);
    return c;
}

}  // namespace

Converted preprocess(const PopulationComputer& p) {
    PopulationComputer out;
    ImageBuilder img;
    for (StateId q = 0; q < p.state_count(); ++q) {
        out.add_state(p.label(q));
        img.set(p.label(q), {{q, 1}});
    }
    for (const auto& t : p.transitions()) out.add_transition(t.lhs, t.rhs);
    const StateId start = out.add_state("[start]");
    img.set("[start]", {});
    for (StateId x : p.inputs) {
        const std::string star = "*" + p.label(x);
        if (p.find_state(star)) throw std::invalid_argument("preprocess: label collision on " + star);
        StateId xs = out.add_state(star);
        img.set(star, {{x, 1}});
        out.add_transition(pair_of(xs, start), pair_of(x, start));
        out.inputs.push_back(xs);
    }
    out.helpers = p.helpers;
    out.helpers.add(start);
    out.output = p.output;
    return finish_conversion(out, img);
}

Converted binarise(const PopulationComputer& p) {
    if (std::holds_alternative<Consensus>(p.output)) throw std::invalid_argument("binarise: consensus output unsupported");
    const std::size_t n = p.state_count();
    const auto& ts = p.transitions();
    std::vector<Count> m(n, 0);
    std::vector<std::size_t> outdeg(n, 0);
    for (const auto& t : ts) {
        if (t.lhs.entries().size() > 2) throw std::invalid_argument("binarise: lhs with more than two state types");
        for (const auto& [q, k] : t.lhs.entries()) {
            m[q] = std::max(m[q], k);
            ++outdeg[q];
        }
    }

    PopulationComputer out;
    ImageBuilder img;
    auto owner = [&](StateId q, Count i) {
        std::string label = i == 1 ? p.label(q) : "(" + p.label(q) + "," + std::to_string(i) + ")";
        StateId s = out.add_state(label);
        img.set(label, i ? std::vector<Term>{{q, std::int64_t(i)}} : std::vector<Term>{});
        return s;
    };
    for (StateId q = 0; q < n; ++q) owner(q, 1);

    struct Plan {
        StateId primary = 0;
        std::optional<StateId> secondary;
        std::vector<StateId> s;  // enumeration s_1..s_l
    };
    std::vector<Plan> plans(ts.size());
    auto chain = [&](std::size_t ti, std::size_t i) {
        const auto& s = plans[ti].s;
        if (i == s.size()) return owner(s.back(), 1);
        std::string label = "(@t" + std::to_string(ti) + "," + std::to_string(i) + ")";
        StateId id = out.add_state(label);
        std::vector<Term> rest;
        for (std::size_t k = i - 1; k < s.size(); ++k) rest.emplace_back(s[k], 1);
        img.set(label, merge_terms(rest, {}));
        return id;
    };
    auto committed = [&](StateId q, Count i, std::size_t ti) {
        if (i == 0) return chain(ti, 1);
        std::string label = "(" + p.label(q) + "," + std::to_string(i) + ",@t" + std::to_string(ti) + ")";
        StateId id = out.add_state(label);
        img.set(label, merge_terms({{q, std::int64_t(i)}}, terms_of(ts[ti].rhs)));
        return id;
    };
    auto direct = [&](const Multiset& rhs) {
        Multiset r;
        for (StateId q : expand(rhs)) r.add(owner(q, 1));
        return r;
    };

    // Commit: one transition per owning pair, earliest source transition wins.
    for (std::size_t ti = 0; ti < ts.size(); ++ti) {
        const auto& t = ts[ti];
        Plan& plan = plans[ti];
        plan.s = expand(t.rhs);
        const auto& l = t.lhs.entries();
        const Count size = t.lhs.size();
        if (l.size() == 2) {
            StateId q = l[0].first, r = l[1].first;
            // The busier state is never primary, which keeps beta small.
            if (outdeg[r] < outdeg[q] || (outdeg[r] == outdeg[q] && p.label(r) < p.label(q))) std::swap(q, r);
            plan.primary = q;
            plan.secondary = r;
            const Count rq = t.lhs[q], rr = t.lhs[r];
            for (Count i = rq; i <= m[q]; ++i) {
                for (Count j = rr; j <= m[r]; ++j) {
                    Multiset lhs = pair_of(owner(q, i), owner(r, j));
                    if (i == rq && j == rr && size == 2) {
                        out.try_add_transition(lhs, direct(t.rhs));
                    } else {
                        out.try_add_transition(lhs, pair_of(committed(q, i - rq, ti), owner(r, j - rr)));
                    }
                }
            }
        } else {
            const StateId q = l[0].first;
            plan.primary = q;
            const Count rq = l[0].second;
            for (Count i = 1; i <= m[q]; ++i) {
                for (Count j = i; j <= m[q]; ++j) {
                    if (i + j < rq) continue;
                    Multiset lhs = pair_of(owner(q, i), owner(q, j));
                    const Count k = i + j - rq;
                    if (k == 0 && size == 2) {
                        out.try_add_transition(lhs, direct(t.rhs));
                    } else if (k <= m[q]) {
                        out.try_add_transition(lhs, pair_of(committed(q, k, ti), owner(q, 0)));
                    } else {
                        out.try_add_transition(lhs, pair_of(committed(q, k - m[q], ti), owner(q, m[q])));
                    }
                }
            }
        }
    }
    // Stack.
    for (StateId q = 0; q < n; ++q) {
        for (Count i = 1; i + 1 <= m[q]; ++i) {
            for (Count j = i; j + 1 <= m[q]; ++j) {
                Multiset lhs = pair_of(owner(q, i), owner(q, j));
                if (i + j <= m[q]) out.try_add_transition(lhs, pair_of(owner(q, i + j), owner(q, 0)));
                else out.try_add_transition(lhs, pair_of(owner(q, m[q]), owner(q, i + j - m[q])));
            }
        }
    }
    // Transfer and execute.
    for (std::size_t ti = 0; ti < ts.size(); ++ti) {
        const Plan& plan = plans[ti];
        const StateId q = plan.primary;
        for (Count i = 1; i <= m[q]; ++i) {
            out.try_add_transition(pair_of(committed(q, i, ti), owner(q, 0)), pair_of(chain(ti, 1), owner(q, i)));
        }
        const Count rsec = plan.secondary ? ts[ti].lhs[*plan.secondary] : 0;
        for (std::size_t i = 1; i < plan.s.size(); ++i) {
            StateId partner = i <= rsec ? owner(*plan.secondary, 0) : owner(q, 0);
            out.try_add_transition(pair_of(chain(ti, i), partner), pair_of(chain(ti, i + 1), owner(plan.s[i - 1], 1)));
        }
    }

    for (StateId x : p.inputs) out.inputs.push_back(owner(x, 1));
    for (const auto& [q, k] : p.helpers.entries()) out.helpers.add(owner(q, 1), k);
    if (const auto* c = std::get_if<Circuit>(&p.output)) {
        // Presence of q: some agent owns at least one q. At a terminal
        // configuration every (q,0) agent is owned, so this is exact.
        out.output = substitute_inputs(*c, [&](const std::string& label) {
            std::vector<std::string> owners;
            auto q = p.find_state(label);
            if (!q) return owners;
            for (Count i = 1; i <= std::max<Count>(m[*q], 1); ++i) owners.push_back(out.label(owner(*q, i)));
            return owners;
        });
    } else {
        const auto& mc = std::get<MarkedConsensus>(p.output);
        MarkedConsensus marked;
        for (StateId q : mc.zero) {
            for (Count i = 1; i <= std::max<Count>(m[q], 1); ++i) marked.zero.insert(owner(q, i));
        }
        for (StateId q : mc.one) {
            for (Count i = 1; i <= std::max<Count>(m[q], 1); ++i) marked.one.insert(owner(q, i));
        }
        out.output = marked;
    }
    return finish_conversion(out, img);
}

namespace {

std::string bit_char(int v) { return v < 0 ? "_" : std::to_string(v); }

int nand_bits(int a, int b) { return a < 0 || b < 0 ? -1 : !(a && b); }

}  // namespace

Converted focalise(const PopulationComputer& p) {
    const auto* circuit = std::get_if<Circuit>(&p.output);
    if (!circuit) throw std::invalid_argument("focalise: output is not a circuit");
    if (!p.is_binary()) throw std::invalid_argument("focalise: computer is not binary");
    if (p.helpers.empty()) throw std::invalid_argument("focalise: needs a helper state");

    // Spare agents are handed back to the most populous helper state.
    StateId qh = p.helpers.entries().front().first;
    for (const auto& [q, k] : p.helpers.entries()) {
        if (k > p.helpers[qh]) qh = q;
    }

    // Normalise the netlist: dead gates removed, unknown labels read as absent,
    // and the output always driven by a gate.
    CircuitBuilder cb;
    auto wire = cb.embed(*circuit, [&](const std::string& label) {
        return p.find_state(label) ? cb.input(label) : cb.zero();
    });
    Circuit c = cb.finish(wire);
    if (c.constant) {
        CircuitBuilder raw;
        Circuit k;
        k.inputs = {p.label(qh)};
        k.gates.push_back({Ref::input(0), Ref::input(0)});
        k.gates.push_back({Ref::input(0), Ref::gate(0)});  // always 1
        if (!*c.constant) k.gates.push_back({Ref::gate(1), Ref::gate(1)});
        k.out = Ref::gate(std::uint32_t(k.gates.size() - 1));
        c = k;
    } else if (!c.out.is_gate()) {
        Ref x = c.out;
        c.gates = {{x, x}, {Ref::gate(0), Ref::gate(0)}};
        c.out = Ref::gate(1);
    }
    c.gates.resize(c.out.index + 1);  // gates after the output are dead

    // Tracked states: the ones the netlist reads, in input order.
    std::vector<char> used(c.inputs.size(), 0);
    for (const auto& g : c.gates) {
        for (Ref r : {g.a, g.b}) {
            if (!r.is_gate()) used[r.index] = 1;
        }
    }
    std::vector<StateId> tracked;
    std::vector<std::size_t> track_index(c.inputs.size(), 0);
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        if (!used[i]) continue;
        track_index[i] = tracked.size();
        tracked.push_back(p.state(c.inputs[i]));
    }
    const std::size_t nq = tracked.size(), ng = c.gates.size();
    const std::size_t resets = nq + ng;

    PopulationComputer out;
    ImageBuilder img;
    const std::vector<Term> spare{{qh, 1}};
    for (StateId q = 0; q < p.state_count(); ++q) {
        out.add_state(p.label(q));
        img.set(p.label(q), {{q, 1}});
    }
    auto minus = [&](StateId q) { return StateId(q); };
    auto plus = [&](StateId q) {
        std::string label = "(" + p.label(q) + ",+)";
        img.set(label, {{q, 1}});
        return out.add_state(label);
    };
    auto tracker = [&](std::size_t k, const std::string& v) {
        std::string label = "[" + p.label(tracked[k]) + ":" + v + "]";
        img.set(label, spare);
        return out.add_state(label);
    };
    auto gate = [&](std::size_t g, int o, int a, int b) {
        std::string label = "[g" + std::to_string(g) + ":" + bit_char(o) + "," + bit_char(a) + "," + bit_char(b) + "]";
        img.set(label, spare);
        return out.add_state(label);
    };
    auto reset = [&](std::size_t i) {
        std::string label = "[reset:" + std::to_string(i) + "]";
        img.set(label, spare);
        return out.add_state(label);
    };
    // The 7 reachable gate states: idle, first input known, evaluated.
    auto gate_states = [&](std::size_t g) {
        std::vector<StateId> s{gate(g, -1, -1, -1), gate(g, -1, 0, -1), gate(g, -1, 1, -1)};
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) s.push_back(gate(g, nand_bits(a, b), a, b));
        }
        return s;
    };
    // Agents certifying that gate input r has value v.
    auto witnesses = [&](Ref r, int v) {
        std::vector<StateId> s;
        if (!r.is_gate()) {
            s.push_back(tracker(track_index[r.index], std::to_string(v)));
        } else {
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    if (nand_bits(a, b) == v) s.push_back(gate(r.index, v, a, b));
                }
            }
        }
        return s;
    };

    // Execute: the original transitions, raising the reset flag on one agent.
    for (const auto& t : p.transitions()) {
        auto lhs = expand(t.lhs);
        auto rhs = expand(t.rhs);
        Multiset after = pair_of(plus(rhs[0]), minus(rhs[1]));
        for (int sa = 0; sa < 2; ++sa) {
            for (int sb = 0; sb < 2; ++sb) {
                if (lhs[0] == lhs[1] && sa > sb) continue;
                StateId a = sa ? plus(lhs[0]) : minus(lhs[0]);
                StateId b = sb ? plus(lhs[1]) : minus(lhs[1]);
                out.try_add_transition(pair_of(a, b), after);
            }
        }
    }
    // Denotify, unless the pair can execute.
    for (StateId q = 0; q < p.state_count(); ++q) {
        for (StateId r = q; r < p.state_count(); ++r) {
            out.try_add_transition(pair_of(plus(q), plus(r)), pair_of(plus(q), minus(r)));
        }
    }
    // Reset round, trackers first, then gates in topological order. Listed
    // before init-reset so a tracker due for reset is reset.
    for (std::size_t k = 0; k < nq; ++k) {
        for (const char* v : {"0", "1", "!"}) {
            out.try_add_transition(pair_of(reset(k), tracker(k, v)), pair_of(reset(k + 1), tracker(k, "0")));
        }
    }
    for (std::size_t g = 0; g < ng; ++g) {
        for (StateId s : gate_states(g)) {
            out.try_add_transition(pair_of(reset(nq + g), s), pair_of(reset(nq + g + 1), gate(g, -1, -1, -1)));
        }
    }
    // Detect.
    for (std::size_t k = 0; k < nq; ++k) {
        out.try_add_transition(pair_of(tracker(k, "0"), minus(tracked[k])), pair_of(tracker(k, "!"), minus(tracked[k])));
    }
    // Gate evaluation.
    for (std::size_t g = 0; g < ng; ++g) {
        for (int v = 0; v < 2; ++v) {
            for (StateId w : witnesses(c.gates[g].a, v)) {
                out.try_add_transition(pair_of(gate(g, -1, -1, -1), w), pair_of(gate(g, -1, v, -1), w));
            }
        }
        for (int a = 0; a < 2; ++a) {
            for (int v = 0; v < 2; ++v) {
                for (StateId w : witnesses(c.gates[g].b, v)) {
                    out.try_add_transition(pair_of(gate(g, -1, a, -1), w), pair_of(gate(g, nand_bits(a, v), a, v), w));
                }
            }
        }
    }
    // Init-reset.
    for (StateId q = 0; q < p.state_count(); ++q) {
        for (std::size_t i = 0; i <= resets; ++i) out.try_add_transition(pair_of(plus(q), reset(i)), pair_of(minus(q), reset(0)));
    }
    for (std::size_t k = 0; k < nq; ++k) {
        for (std::size_t i = 0; i <= resets; ++i) {
            out.try_add_transition(pair_of(tracker(k, "!"), reset(i)), pair_of(tracker(k, "1"), reset(std::min(i, nq))));
        }
    }
    for (std::size_t i = 0; i <= resets; ++i) {
        for (std::size_t j = i; j <= resets; ++j) out.try_add_transition(pair_of(reset(i), reset(j)), pair_of(reset(0), minus(qh)));
    }
    // Leader election; the agent in the label-smaller state stays.
    auto elect = [&](const std::vector<StateId>& group) {
        for (std::size_t i = 0; i < group.size(); ++i) {
            for (std::size_t j = i; j < group.size(); ++j) {
                StateId a = group[i], b = group[j];
                StateId keep = out.label(a) < out.label(b) ? a : b;
                out.try_add_transition(pair_of(a, b), pair_of(keep, reset(0)));
            }
        }
    };
    for (std::size_t k = 0; k < nq; ++k) elect({tracker(k, "0"), tracker(k, "1"), tracker(k, "!")});
    for (std::size_t g = 0; g < ng; ++g) elect(gate_states(g));

    out.inputs = p.inputs;
    out.helpers = p.helpers;
    for (std::size_t k = 0; k < nq; ++k) out.helpers.add(tracker(k, "0"));
    for (std::size_t g = 0; g < ng; ++g) out.helpers.add(gate(g, -1, -1, -1));
    out.helpers.add(reset(0));
    MarkedConsensus marked;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            StateId s = gate(ng - 1, nand_bits(a, b), a, b);
            (nand_bits(a, b) ? marked.one : marked.zero).insert(s);
        }
    }
    out.output = marked;
    img.offset = {{qh, -std::int64_t(resets + 1)}};
    return finish_conversion(out, img);
}

Converted autarkify(const PopulationComputer& p) {
    if (!std::holds_alternative<MarkedConsensus>(p.output)) throw std::invalid_argument("autarkify: needs marked-consensus output");
    std::vector<std::pair<StateId, StateId>> pairs;
    std::set<StateId> seen;
    for (StateId x : p.inputs) {
        const std::string& label = p.label(x);
        if (!label.empty() && label.back() == '\'') continue;
        auto primed = p.find_state(label + "'");
        if (!primed || std::find(p.inputs.begin(), p.inputs.end(), *primed) == p.inputs.end()) {
            throw std::invalid_argument("autarkify: input " + label + " has no primed partner");
        }
        pairs.emplace_back(x, *primed);
        seen.insert(x);
        seen.insert(*primed);
    }
    if (seen.size() != p.inputs.size()) throw std::invalid_argument("autarkify: unpaired primed input");

    PopulationComputer out;
    ImageBuilder img;
    for (StateId q = 0; q < p.state_count(); ++q) {
        out.add_state(p.label(q));
        img.set(p.label(q), {{q, 1}});
    }
    for (const auto& t : p.transitions()) out.add_transition(t.lhs, t.rhs);
    const std::vector<StateId> hs = expand(p.helpers);
    const std::size_t m = hs.size();
    auto up = [&](std::size_t i) {
        std::string label = "[up:" + std::to_string(i) + "]";
        img.set(label, {});
        return out.add_state(label);
    };
    auto down = [&](std::size_t i) {
        if (i == 1) return hs[0];
        std::string label = "[down:" + std::to_string(i) + "]";
        img.set(label, {});
        return out.add_state(label);
    };
    if (m > 0) {
        const StateId liberated = m == 1 ? hs[0] : up(1);
        for (const auto& [x, xp] : pairs) out.add_transition({{x, 2}}, pair_of(xp, liberated));
    }
    for (std::size_t i = 1; i + 1 <= m; ++i) {
        for (std::size_t j = i; j + 1 <= m; ++j) {
            if (i + j < m) out.add_transition(pair_of(up(i), up(j)), pair_of(up(i + j), up(0)));
            else out.add_transition(pair_of(up(i), up(j)), pair_of(down(m), up(i + j - m)));
        }
    }
    for (std::size_t i = 1; i + 1 <= m; ++i) out.add_transition(pair_of(down(i + 1), up(0)), pair_of(down(i), hs[i]));
    for (const auto& [x, xp] : pairs) out.inputs.push_back(x);
    out.output = p.output;
    return finish_conversion(out, img);
}

DistributedProtocol::DistributedProtocol(PopulationComputer base) : base_(std::move(base)) {
    if (!base_.is_binary()) throw std::invalid_argument("distribute: computer is not binary");
    if (!base_.helpers.empty()) throw std::invalid_argument("distribute: computer has helpers");
    const auto* marked = std::get_if<MarkedConsensus>(&base_.output);
    if (!marked) throw std::invalid_argument("distribute: needs marked-consensus output");
    mark_.assign(base_.state_count(), -1);
    for (StateId q : marked->zero) mark_[q] = 0;
    for (StateId q : marked->one) mark_[q] = 1;
    for (const auto& t : base_.transitions()) {
        auto l = expand(t.lhs);
        auto r = expand(t.rhs);
        rules_.emplace(pair_key(l[0], l[1]), std::make_pair(r[0], r[1]));
    }
}

std::string DistributedProtocol::state_label(StateId s) const {
    return base_.label(base_of(s)) + "|" + std::to_string(opinion_of(s)) + std::to_string(token_of(s));
}

std::optional<std::pair<StateId, StateId>> DistributedProtocol::interact(StateId a, StateId b) const {
    const bool swapped = a > b;
    StateId x = swapped ? b : a, y = swapped ? a : b;
    StateId q = base_of(x), p = base_of(y);
    StateId q2 = q, p2 = p;
    if (auto it = rules_.find(pair_key(q, p)); it != rules_.end()) std::tie(q2, p2) = it->second;
    int ox = opinion_of(x), oy = opinion_of(y), kx = token_of(x), ky = token_of(y);
    const int marked = mark_[q2] >= 0 ? mark_[q2] : mark_[p2];
    if (marked >= 0) {
        ox = oy = marked;  // certify
        kx = ky = 1;
    } else if (ox != oy && (kx || ky)) {
        if (kx && ky) {
            kx = ky = 0;  // drop
        } else {
            const int winner = kx ? ox : oy;  // convince
            ox = oy = winner;
            kx = ky = 0;
        }
    }
    StateId x2 = encode(q2, ox, kx), y2 = encode(p2, oy, ky);
    if (pair_key(x2, y2) == pair_key(x, y)) return std::nullopt;
    if (swapped) return std::make_pair(y2, x2);
    return std::make_pair(x2, y2);
}

Verdict DistributedProtocol::output(const std::vector<StateId>& support) const {
    bool zero = false, one = false;
    for (StateId s : support) (opinion_of(s) ? one : zero) = true;
    if (one && !zero) return Verdict::one;
    if (zero && !one) return Verdict::zero;
    return Verdict::undefined;
}

std::vector<StateId> DistributedProtocol::input_states() const {
    std::vector<StateId> v;
    for (StateId q : base_.inputs) v.push_back(encode(q, 0, 0));
    return v;
}

PopulationComputer DistributedProtocol::materialize() const {
    PopulationComputer out;
    const auto n = StateId(state_count());
    for (StateId s = 0; s < n; ++s) out.add_state(state_label(s));
    Consensus cons;
    for (StateId a = 0; a < n; ++a) {
        if (opinion_of(a)) cons.one.insert(a);
        for (StateId b = a; b < n; ++b) {
            if (auto r = interact(a, b)) out.add_transition(pair_of(a, b), pair_of(r->first, r->second));
        }
    }
    for (StateId x : input_states()) out.inputs.push_back(x);
    out.output = cons;
    return out;
}

std::size_t adjusted_size(const PopulationComputer& p) {
    std::size_t gates = 0;
    if (const auto* c = std::get_if<Circuit>(&p.output)) gates = c->gate_count();
    return p.state_count() + p.helpers.size() + gates;
}

bool PipelineReport::ok() const {
    return std::all_of(stages.begin(), stages.end(), [](const StageReport& s) { return s.problems.empty(); });
}

nlohmann::json to_json(const PipelineReport& r) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : r.stages) {
        stages.push_back({{"stage", s.name},
                          {"states", s.states},
                          {"transitions", s.transitions},
                          {"helpers", s.helpers},
                          {"size", s.size},
                          {"adjusted_size", s.adjusted},
                          {"problems", s.problems}});
    }
    return {{"stages", stages}, {"min_input", r.min_input}, {"protocol_states", r.protocol_states}, {"ok", r.ok()}};
}

namespace {

StageReport report_of(const std::string& name, const PopulationComputer& p) {
    StageReport s;
    s.name = name;
    s.states = p.state_count();
    s.transitions = p.transitions().size();
    s.helpers = p.helpers.size();
    s.size = p.total_size();
    s.adjusted = adjusted_size(p);
    s.problems = validate(p);
    return s;
}

// Inputs have no incoming transitions, every transition involves a non-input
// state, and inputs occur at most once per lhs.
std::vector<std::string> input_discipline(const PopulationComputer& p) {
    std::vector<std::string> v;
    std::set<StateId> in(p.inputs.begin(), p.inputs.end());
    for (const auto& t : p.transitions()) {
        bool other = false;
        for (const auto& [q, k] : t.lhs.entries()) {
            if (!in.count(q)) other = true;
            else if (k > 1) v.push_back("input " + p.label(q) + " consumed twice by one transition");
        }
        if (!other) v.push_back("transition " + describe(p, t.lhs) + " fires on inputs alone");
        for (const auto& [q, k] : t.rhs.entries()) {
            if (in.count(q)) v.push_back("transition produces input " + p.label(q));
        }
    }
    return v;
}

}  // namespace

PipelineResult run_pipeline(const PopulationComputer& p, PipelineMode mode) {
    PipelineResult res;
    auto push = [&](const std::string& name, Converted c) {
        res.report.stages.push_back(report_of(name, c.computer));
        if (!res.report.stages.back().problems.empty()) {
            throw std::invalid_argument(name + ": " + res.report.stages.back().problems.front());
        }
        res.stages.push_back({name, std::move(c.computer), std::move(c.map)});
    };
    res.stages.push_back({"input", p, std::nullopt});
    res.report.stages.push_back(report_of("input", p));
    if (!res.report.stages.back().problems.empty()) {
        throw std::invalid_argument("input: " + res.report.stages.back().problems.front());
    }
    if (mode == PipelineMode::full) {
        push("preprocess", preprocess(p));
    } else {
        auto v = input_discipline(p);
        if (!v.empty()) throw std::invalid_argument("input: fast pipeline precondition failed: " + v.front());
    }
    push("binarise", binarise(res.stages.back().computer));
    push("focalise", focalise(res.stages.back().computer));
    const PopulationComputer& focal = res.stages.back().computer;
    res.report.min_input = focal.inputs.size() + 2 * focal.helpers.size();
    push("autarkify", autarkify(focal));
    res.protocol = std::make_shared<DistributedProtocol>(res.stages.back().computer);
    res.report.protocol_states = res.protocol->state_count();
    return res;
}

namespace {

// Transitions indexed by their smallest lhs state, for fast enabledness.
class EnabledIndex {
public:
    explicit EnabledIndex(const PopulationComputer& p) : p_(p), by_first_(p.state_count()) {
        for (std::size_t i = 0; i < p.transitions().size(); ++i) {
            by_first_[p.transitions()[i].lhs.entries().front().first].push_back(i);
        }
    }
    std::vector<std::size_t> enabled(const Configuration& c) const {
        std::vector<std::size_t> out;
        for (const auto& [q, k] : c.entries()) {
            for (std::size_t i : by_first_[q]) {
                if (c.contains(p_.transitions()[i].lhs)) out.push_back(i);
            }
        }
        return out;
    }

private:
    const PopulationComputer& p_;
    std::vector<std::vector<std::size_t>> by_first_;
};

bool one_step(const PopulationComputer& p, const Configuration& c, const Configuration& d) {
    if (c == d) return true;
    for (const auto& t : p.transitions()) {
        if (c.contains(t.lhs) && step(c, t) == d) return true;
    }
    return false;
}

}  // namespace

RefinementCheck check_refinement(const PopulationComputer& prev, const PopulationComputer& next,
                                 const RefinementMap& pi, std::size_t runs, std::uint64_t seed, Count max_input,
                                 std::size_t max_steps) {
    RefinementCheck res;
    std::mt19937_64 rng(seed);
    EnabledIndex index(next);
    auto fail = [&](std::string why) {
        res.ok = false;
        if (res.violations.size() < 20) res.violations.push_back(std::move(why));
    };
    if (prev.inputs.size() != next.inputs.size()) {
        fail("input counts differ");
        return res;
    }
    const auto helper_support = next.helpers.support();
    for (std::size_t run = 0; run < runs; ++run) {
        ++res.runs;
        std::vector<Count> counts(next.inputs.size());
        for (auto& k : counts) k = rng() % (max_input + 1);
        Multiset extra;
        if (!helper_support.empty()) {
            for (Count e = rng() % 3; e > 0; --e) extra.add(helper_support[rng() % helper_support.size()]);
        }
        Configuration c = initial(next, counts, extra);
        auto image = pi.apply(c);
        if (!image) {
            fail("initial configuration maps to a negative count");
            continue;
        }
        Configuration rest = *image;
        bool initial_ok = true;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if ((*image)[prev.inputs[i]] != counts[i]) initial_ok = false;
            else rest.remove(prev.inputs[i], counts[i]);
        }
        initial_ok = initial_ok && rest.contains(prev.helpers);
        for (const auto& [q, k] : rest.entries()) initial_ok = initial_ok && prev.helpers[q] > 0;
        if (!initial_ok) fail("initial " + describe(next, c) + " maps to non-initial " + describe(prev, *image));

        for (std::size_t s = 0;; ++s) {
            auto en = index.enabled(c);
            if (en.empty()) {
                if (!is_terminal(prev, *image)) fail("terminal " + describe(next, c) + " maps to non-terminal");
                else if (output(prev, *image) != output(next, c)) fail("output disagrees at " + describe(next, c));
                break;
            }
            if (s >= max_steps) {
                fail("run exceeded step limit");
                break;
            }
            Configuration d = step(c, next.transitions()[en[rng() % en.size()]]);
            ++res.steps;
            auto next_image = pi.apply(d);
            if (!next_image) {
                fail("reachable configuration maps to a negative count");
                break;
            }
            if (!one_step(prev, *image, *next_image)) {
                fail("step " + describe(next, c) + " => " + describe(next, d) + " is not simulated");
                break;
            }
            c = std::move(d);
            image = std::move(next_image);
        }
    }
    return res;
}

}  // namespace popc
