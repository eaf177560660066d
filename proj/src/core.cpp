#include "popc/core.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace popc {

Multiset::Multiset(std::initializer_list<Entry> entries) {
    for (const auto& [q, k] : entries) add(q, k);
}

Multiset Multiset::from_dense(const std::vector<Count>& dense) {
    Multiset m;
    for (std::size_t q = 0; q < dense.size(); ++q) {
        if (dense[q]) {
            m.entries_.emplace_back(static_cast<StateId>(q), dense[q]);
            m.total_ += dense[q];
        }
    }
    return m;
}

Count Multiset::operator[](StateId q) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), q,
                               [](const Entry& e, StateId s) { return e.first < s; });
    return it != entries_.end() && it->first == q ? it->second : 0;
}

void Multiset::add(StateId q, Count k) {
    if (k == 0) return;
    auto it = std::lower_bound(entries_.begin(), entries_.end(), q,
                               [](const Entry& e, StateId s) { return e.first < s; });
    if (it != entries_.end() && it->first == q) it->second += k;
    else entries_.insert(it, {q, k});
    total_ += k;
}

void Multiset::remove(StateId q, Count k) {
    if (k == 0) return;
    auto it = std::lower_bound(entries_.begin(), entries_.end(), q,
                               [](const Entry& e, StateId s) { return e.first < s; });
    if (it == entries_.end() || it->first != q || it->second < k) throw std::underflow_error("multiset underflow");
    it->second -= k;
    if (it->second == 0) entries_.erase(it);
    total_ -= k;
}

std::vector<StateId> Multiset::support() const {
    std::vector<StateId> s;
    s.reserve(entries_.size());
    for (const auto& e : entries_) s.push_back(e.first);
    return s;
}

std::vector<Count> Multiset::to_dense(std::size_t states) const {
    std::vector<Count> d(states, 0);
    for (const auto& [q, k] : entries_) d.at(q) = k;
    return d;
}

bool Multiset::contains(const Multiset& other) const {
    for (const auto& [q, k] : other.entries_) {
        if ((*this)[q] < k) return false;
    }
    return true;
}

Multiset Multiset::operator+(const Multiset& other) const {
    Multiset m = *this;
    for (const auto& [q, k] : other.entries_) m.add(q, k);
    return m;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::zero: return "0";
        case Verdict::one: return "1";
        case Verdict::undefined: return "undefined";
    }
    return "undefined";
}

StateId PopulationComputer::add_state(const std::string& label) {
    auto [it, fresh] = index_.emplace(label, static_cast<StateId>(labels_.size()));
    if (fresh) labels_.push_back(label);
    return it->second;
}

std::optional<StateId> PopulationComputer::find_state(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

StateId PopulationComputer::state(const std::string& label) const {
    auto q = find_state(label);
    if (!q) throw std::out_of_range("unknown state '" + label + "'");
    return *q;
}

void PopulationComputer::add_transition(Multiset lhs, Multiset rhs) {
    by_lhs_.emplace(lhs, transitions_.size());
    transitions_.push_back({std::move(lhs), std::move(rhs)});
}

bool PopulationComputer::try_add_transition(Multiset lhs, Multiset rhs) {
    if (by_lhs_.count(lhs)) return false;
    add_transition(std::move(lhs), std::move(rhs));
    return true;
}

const Transition* PopulationComputer::find_transition(const Multiset& lhs) const {
    auto it = by_lhs_.find(lhs);
    return it == by_lhs_.end() ? nullptr : &transitions_[it->second];
}

Multiset PopulationComputer::multiset(const std::map<std::string, Count>& counts) {
    Multiset m;
    for (const auto& [label, k] : counts) m.add(add_state(label), k);
    return m;
}

Multiset PopulationComputer::multiset_of(std::initializer_list<std::string> labels) {
    Multiset m;
    for (const auto& label : labels) m.add(add_state(label));
    return m;
}

bool PopulationComputer::is_binary() const {
    return std::all_of(transitions_.begin(), transitions_.end(), [](const Transition& t) { return t.arity() == 2; });
}

std::size_t PopulationComputer::max_arity() const {
    std::size_t m = 0;
    for (const auto& t : transitions_) m = std::max<std::size_t>(m, t.arity());
    return m;
}

std::size_t PopulationComputer::total_size() const {
    std::size_t size = state_count() + helpers.size();
    for (const auto& t : transitions_) size += t.arity();
    if (const auto* c = std::get_if<Circuit>(&output)) size += c->gate_count();
    return size;
}

std::vector<const Transition*> enabled(const PopulationComputer& p, const Configuration& c) {
    std::vector<const Transition*> out;
    for (const auto& t : p.transitions()) {
        if (c.contains(t.lhs)) out.push_back(&t);
    }
    return out;
}

Configuration step(const Configuration& c, const Transition& t) {
    if (!c.contains(t.lhs)) throw std::invalid_argument("transition not enabled");
    Configuration d = c;
    for (const auto& [q, k] : t.lhs.entries()) d.remove(q, k);
    for (const auto& [q, k] : t.rhs.entries()) d.add(q, k);
    return d;
}

bool is_terminal(const PopulationComputer& p, const Configuration& c) {
    return std::none_of(p.transitions().begin(), p.transitions().end(),
                        [&](const Transition& t) { return c.contains(t.lhs); });
}

Verdict output_of_support(const PopulationComputer& p, const std::vector<StateId>& support) {
    if (const auto* circuit = std::get_if<Circuit>(&p.output)) {
        std::vector<bool> present(circuit->inputs.size(), false);
        for (std::size_t i = 0; i < circuit->inputs.size(); ++i) {
            auto q = p.find_state(circuit->inputs[i]);
            present[i] = q && std::binary_search(support.begin(), support.end(), *q);
        }
        return circuit->eval_bits(present) ? Verdict::one : Verdict::zero;
    }
    if (const auto* marked = std::get_if<MarkedConsensus>(&p.output)) {
        bool zero = false, one = false;
        for (StateId q : support) {
            zero = zero || marked->zero.count(q);
            one = one || marked->one.count(q);
        }
        if (one && !zero) return Verdict::one;
        if (zero && !one) return Verdict::zero;
        return Verdict::undefined;
    }
    const auto& cons = std::get<Consensus>(p.output);
    bool zero = false, one = false;
    for (StateId q : support) {
        if (cons.one.count(q)) one = true;
        else zero = true;
    }
    if (one && !zero) return Verdict::one;
    if (zero && !one) return Verdict::zero;
    return Verdict::undefined;
}

Verdict output(const PopulationComputer& p, const Configuration& c) { return output_of_support(p, c.support()); }

std::string describe(const PopulationComputer& p, const Multiset& m) {
    std::string s;
    for (const auto& [q, k] : m.entries()) {
        if (!s.empty()) s += ", ";
        if (k != 1) s += std::to_string(k) + "*";
        s += p.label(q);
    }
    return "{" + s + "}";
}

std::vector<std::string> validate(const PopulationComputer& p) {
    std::vector<std::string> v;
    const std::size_t n = p.state_count();
    auto in_range = [&](const Multiset& m) {
        return std::all_of(m.entries().begin(), m.entries().end(), [&](const auto& e) { return e.first < n; });
    };
    std::map<Multiset, std::size_t> seen;
    for (std::size_t i = 0; i < p.transitions().size(); ++i) {
        const auto& t = p.transitions()[i];
        std::string name = describe(p, t.lhs) + " -> " + describe(p, t.rhs);
        if (!in_range(t.lhs) || !in_range(t.rhs)) v.push_back("transition " + std::to_string(i) + " uses unknown states");
        if (t.lhs.size() != t.rhs.size()) v.push_back("arity mismatch in " + name);
        if (t.lhs.size() < 2) v.push_back("arity below 2 in " + name);
        if (t.lhs.entries().size() > 2) v.push_back("more than two state types on the left of " + name);
        auto [it, fresh] = seen.emplace(t.lhs, i);
        if (!fresh && p.transitions()[it->second].rhs != t.rhs) {
            v.push_back("nondeterminism: " + describe(p, t.lhs) + " has two different right-hand sides");
        }
    }
    std::set<StateId> inputs;
    for (StateId q : p.inputs) {
        if (q >= n) v.emplace_back("input state out of range");
        if (!inputs.insert(q).second) v.push_back("input state listed twice: " + p.label(q));
    }
    for (const auto& [q, k] : p.helpers.entries()) {
        if (q >= n) v.emplace_back("helper state out of range");
        else if (inputs.count(q)) v.push_back("helper placed in input state " + p.label(q));
    }
    if (const auto* c = std::get_if<Circuit>(&p.output)) {
        for (const auto& problem : c->check()) v.push_back("output circuit: " + problem);
        for (const auto& label : c->inputs) {
            if (!p.find_state(label)) v.push_back("output circuit reads unknown state " + label);
        }
    } else if (const auto* m = std::get_if<MarkedConsensus>(&p.output)) {
        for (StateId q : m->zero) {
            if (m->one.count(q)) v.push_back("state marked for both outputs: " + p.label(q));
            if (q >= n) v.emplace_back("marked state out of range");
        }
        for (StateId q : m->one) {
            if (q >= n) v.emplace_back("marked state out of range");
        }
    } else {
        for (StateId q : std::get<Consensus>(p.output).one) {
            if (q >= n) v.emplace_back("consensus state out of range");
        }
    }
    return v;
}

Configuration initial(const PopulationComputer& p, const std::vector<Count>& input_counts,
                      const Multiset& extra_helpers) {
    if (input_counts.size() != p.inputs.size()) throw std::invalid_argument("input vector size mismatch");
    for (const auto& [q, k] : extra_helpers.entries()) {
        if (p.helpers[q] == 0) throw std::invalid_argument("extra helper outside supp(H): " + p.label(q));
    }
    Configuration c = p.helpers + extra_helpers;
    for (std::size_t i = 0; i < input_counts.size(); ++i) c.add(p.inputs[i], input_counts[i]);
    return c;
}

namespace {

nlohmann::json multiset_json(const PopulationComputer& p, const Multiset& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [q, k] : m.entries()) j[p.label(q)] = k;
    return j;
}

Multiset multiset_from_json(PopulationComputer& p, const nlohmann::json& j, bool must_exist) {
    Multiset m;
    for (const auto& [label, k] : j.items()) {
        if (must_exist && !p.find_state(label)) throw std::invalid_argument("unknown state '" + label + "'");
        auto count = k.get<std::int64_t>();
        if (count < 0) throw std::invalid_argument("negative multiplicity for '" + label + "'");
        m.add(p.add_state(label), static_cast<Count>(count));
    }
    return m;
}

std::vector<std::string> sorted_labels(const PopulationComputer& p, const std::set<StateId>& s) {
    std::vector<std::string> out;
    for (StateId q : s) out.push_back(p.label(q));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

nlohmann::json to_json(const PopulationComputer& p) {
    std::vector<std::string> states = p.labels();
    std::sort(states.begin(), states.end());
    std::vector<std::string> inputs;
    for (StateId q : p.inputs) inputs.push_back(p.label(q));
    std::vector<std::pair<std::string, nlohmann::json>> ts;
    for (const auto& t : p.transitions()) {
        nlohmann::json lhs = multiset_json(p, t.lhs);
        ts.emplace_back(lhs.dump(), nlohmann::json{{"lhs", lhs}, {"rhs", multiset_json(p, t.rhs)}});
    }
    std::stable_sort(ts.begin(), ts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    nlohmann::json transitions = nlohmann::json::array();
    for (auto& [key, t] : ts) transitions.push_back(std::move(t));
    nlohmann::json out;
    if (const auto* c = std::get_if<Circuit>(&p.output)) {
        out = {{"kind", "circuit"}, {"circuit", to_json(*c)}};
    } else if (const auto* m = std::get_if<MarkedConsensus>(&p.output)) {
        out = {{"kind", "marked"}, {"zero", sorted_labels(p, m->zero)}, {"one", sorted_labels(p, m->one)}};
    } else {
        out = {{"kind", "consensus"}, {"one", sorted_labels(p, std::get<Consensus>(p.output).one)}};
    }
    return {{"states", states},
            {"inputs", inputs},
            {"helpers", multiset_json(p, p.helpers)},
            {"transitions", transitions},
            {"output", out}};
}

PopulationComputer computer_from_json(const nlohmann::json& j) {
    PopulationComputer p;
    for (const auto& label : j.at("states")) p.add_state(label.get<std::string>());
    for (const auto& label : j.at("inputs")) p.inputs.push_back(p.state(label.get<std::string>()));
    p.helpers = multiset_from_json(p, j.at("helpers"), true);
    for (const auto& t : j.at("transitions")) {
        p.add_transition(multiset_from_json(p, t.at("lhs"), true), multiset_from_json(p, t.at("rhs"), true));
    }
    const auto& out = j.at("output");
    const auto kind = out.at("kind").get<std::string>();
    auto ids = [&](const nlohmann::json& arr) {
        std::set<StateId> s;
        for (const auto& label : arr) s.insert(p.state(label.get<std::string>()));
        return s;
    };
    if (kind == "circuit") p.output = circuit_from_json(out.at("circuit"));
    else if (kind == "marked") p.output = MarkedConsensus{ids(out.at("zero")), ids(out.at("one"))};
    else if (kind == "consensus") p.output = Consensus{ids(out.at("one"))};
    else throw std::invalid_argument("unknown output kind '" + kind + "'");
    auto problems = validate(p);
    if (!problems.empty()) throw std::invalid_argument("invalid computer: " + problems.front());
    return p;
}

void save_computer(const PopulationComputer& p, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(p).dump(1) << '\n';
}

PopulationComputer load_computer(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return computer_from_json(nlohmann::json::parse(in));
}

bool same_computer(const PopulationComputer& a, const PopulationComputer& b) { return to_json(a) == to_json(b); }

namespace {
std::uint64_t pair_key(StateId a, StateId b) {
    if (a > b) std::swap(a, b);
    return (std::uint64_t(a) << 32) | b;
}
}  // namespace

ExplicitPairProtocol::ExplicitPairProtocol(const PopulationComputer& p) : p_(&p) {
    if (!p.is_binary()) throw std::invalid_argument("pair protocol view needs a binary computer");
    rules_.reserve(p.transitions().size() * 2);
    for (const auto& t : p.transitions()) {
        const auto& l = t.lhs.entries();
        const auto& r = t.rhs.entries();
        StateId a = l.front().first;
        StateId b = l.size() == 2 ? l.back().first : a;
        StateId c = r.front().first;
        StateId d = r.size() == 2 ? r.back().first : c;
        rules_.emplace(pair_key(a, b), std::make_pair(c, d));
    }
}

std::optional<std::pair<StateId, StateId>> ExplicitPairProtocol::interact(StateId a, StateId b) const {
    auto it = rules_.find(pair_key(a, b));
    if (it == rules_.end()) return std::nullopt;
    return it->second;
}

Verdict ExplicitPairProtocol::output(const std::vector<StateId>& support) const {
    return output_of_support(*p_, support);
}

}  // namespace popc
