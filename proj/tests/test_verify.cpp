#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "popc/convert.hpp"
#include "popc/verify.hpp"

using namespace popc;

namespace {

PopulationComputer toy() { return load_computer(std::string(POPC_FIXTURES) + "/toy_cycle.json"); }

// Independent reference: depth-first search over a std::set of configurations.
std::size_t naive_reachable(const PopulationComputer& p, const Configuration& c0) {
    std::set<Configuration> seen{c0};
    std::vector<Configuration> todo{c0};
    while (!todo.empty()) {
        Configuration c = todo.back();
        todo.pop_back();
        for (const auto& t : p.transitions()) {
            bool fits = true;
            for (const auto& [q, k] : t.lhs.entries()) fits = fits && c[q] >= k;
            if (!fits) continue;
            Configuration d;
            for (const auto& [q, k] : c.entries()) {
                Count left = k - t.lhs[q];
                if (left) d.add(q, left);
            }
            for (const auto& [q, k] : t.rhs.entries()) d.add(q, k);
            if (seen.insert(d).second) todo.push_back(d);
        }
    }
    return seen.size();
}

void for_inputs(std::size_t vars, std::uint64_t total, const std::function<void(const InputVector&)>& f) {
    InputVector in(vars);
    std::function<void(std::size_t, std::uint64_t)> rec = [&](std::size_t i, std::uint64_t left) {
        if (i == vars) return f(in);
        for (std::uint64_t k = 0; k <= left; ++k) {
            in[i] = k;
            rec(i + 1, left - k);
        }
    };
    rec(0, total);
}

}  // namespace

TEST(Verify, ToyTwoAgents) {
    PopulationComputer p = toy();
    auto q1 = p.state("q1"), q2 = p.state("q2");
    ReachGraph g = explore(p, Configuration{{q1, 2}}, 100);
    ASSERT_EQ(g.nodes.size(), 2u);
    EXPECT_EQ(g.nodes[1], (Configuration{{q2, 2}}));
    EXPECT_FALSE(g.terminal[0]);
    EXPECT_TRUE(g.terminal[1]);
    EXPECT_EQ(check_bounded(g), true);
}

TEST(Verify, ToyThreeAgentsCycle) {
    PopulationComputer p = toy();
    auto q1 = p.state("q1"), q2 = p.state("q2");
    ReachGraph g = explore(p, Configuration{{q1, 3}}, 100);
    std::set<Configuration> nodes(g.nodes.begin(), g.nodes.end());
    EXPECT_TRUE(nodes.count(Configuration{{q1, 3}}));
    EXPECT_TRUE(nodes.count(Configuration{{q1, 1}, {q2, 2}}));
    EXPECT_TRUE(nodes.count(Configuration{{q1, 2}, {q2, 1}}));
    EXPECT_EQ(check_bounded(g), false);
    EXPECT_EQ(check_terminating_fair(g), true);
}

TEST(Verify, TerminalStartIsSingleNode) {
    PopulationComputer p = toy();
    ReachGraph g = explore(p, Configuration{{p.state("q2"), 4}}, 10);
    EXPECT_EQ(g.nodes.size(), 1u);
    EXPECT_TRUE(g.terminal[0]);
    EXPECT_EQ(check_bounded(g), true);
    EXPECT_EQ(check_terminating_fair(g), true);
}

TEST(Verify, PureCycleDoesNotTerminate) {
    PopulationComputer p;
    p.add_transition(p.multiset({{"a", 2}}), p.multiset({{"b", 2}}));
    p.add_transition(p.multiset({{"b", 2}}), p.multiset({{"a", 2}}));
    ReachGraph g = explore(p, p.multiset({{"a", 2}}), 10);
    EXPECT_EQ(g.nodes.size(), 2u);
    EXPECT_EQ(check_terminating_fair(g), false);
    EXPECT_EQ(check_bounded(g), false);
}

TEST(Verify, TruncationIsIndeterminate) {
    PopulationComputer p = toy();
    ReachGraph g = explore(p, Configuration{{p.state("q1"), 12}}, 3);
    EXPECT_TRUE(g.truncated);
    EXPECT_FALSE(check_bounded(g).has_value());
    EXPECT_FALSE(check_terminating_fair(g).has_value());
}

TEST(Verify, NodeCountMatchesNaiveReference) {
    PopulationComputer t = toy();
    for (Count n = 1; n <= 8; ++n) {
        Configuration c{{t.state("q1"), n}};
        EXPECT_EQ(explore(t, c, 100000).nodes.size(), naive_reachable(t, c));
    }
    PopulationComputer p = compile(parse_predicate("8x + 2y + z = 4 mod 11"));
    for_inputs(3, 3, [&](const InputVector& in) {
        auto c = initial(p, std::vector<Count>(in.begin(), in.end()));
        EXPECT_EQ(explore(p, c, 1000000).nodes.size(), naive_reachable(p, c));
    });
}

TEST(Verify, RemainderBoundedOnSmallInputs) {
    PopulationComputer p = compile(parse_predicate("x = 1 mod 3"));
    for (Count x = 0; x <= 5; ++x) {
        EXPECT_EQ(check_bounded(explore(p, initial(p, {x}), 100000)), true) << x;
    }
}

TEST(Verify, CheckCorrectRemainder) {
    Predicate pred = parse_predicate("2x + y = 3 mod 5");
    PopulationComputer p = compile(pred);
    for_inputs(2, 4, [&](const InputVector& in) {
        auto r = check_correct(p, pred, in, 2, 1000000);
        EXPECT_TRUE(r.pass()) << in[0] << "," << in[1];
        EXPECT_EQ(r.runs.size(), 3u);
    });
}

TEST(Verify, CheckCorrectSmallThreshold) {
    Predicate pred = parse_predicate("x - y >= 2");
    PopulationComputer p = compile(pred, {{0, 2}});
    for_inputs(2, 5, [&](const InputVector& in) { EXPECT_TRUE(check_correct(p, pred, in, 2, 1000000).pass()); });
}

TEST(Verify, WrongPredicateIsCaught) {
    PopulationComputer p = compile(parse_predicate("x - y >= 3"));
    Predicate other = parse_predicate("x - y >= 2");
    bool caught = false;
    for_inputs(2, 5, [&](const InputVector& in) { caught = caught || !check_correct(p, other, in, 0, 1000000).pass(); });
    EXPECT_TRUE(caught);
}

TEST(Verify, HelperExtras) {
    PopulationComputer p = compile(parse_predicate("x >= 2"));
    auto e = helper_extras(p, 2);
    ASSERT_EQ(e.size(), 3u);
    EXPECT_EQ(e[2].size(), 2u);
    PopulationComputer two;
    two.helpers = two.multiset({{"a", 1}, {"b", 1}});
    // Sizes 0, 1 (two ways), 2 (three ways).
    EXPECT_EQ(helper_extras(two, 2).size(), 6u);
}

TEST(Verify, ToyWitness) {
    PopulationComputer p = toy();
    auto r = synthesize_potential(p);
    ASSERT_FALSE(r.weights.has_value());
    ASSERT_TRUE(r.witness.has_value());
    const auto& y = *r.witness;
    // t1 = 2q1 -> 2q2 once per two uses of t2 = q1,q2 -> 2q1.
    const std::size_t t1 = p.find_transition(p.multiset({{"q1", 2}})) - &p.transitions()[0];
    const std::size_t t2 = 1 - t1;
    EXPECT_EQ(y[t2], 2 * y[t1]);
    EXPECT_EQ(y[t1] + y[t2], 1);
    EXPECT_TRUE(is_unbounded_witness(p, y));
    EXPECT_FALSE(is_unbounded_witness(p, {Rational(1), Rational(1)}));
    EXPECT_FALSE(is_unbounded_witness(p, {Rational(0), Rational(0)}));
}

TEST(Verify, SinkTransitionWeights) {
    PopulationComputer p;
    p.add_transition(p.multiset_of({"a", "b"}), p.multiset({{"c", 2}}));
    auto r = synthesize_potential(p);
    ASSERT_TRUE(r.weights.has_value());
    EXPECT_FALSE(r.witness.has_value());
    EXPECT_FALSE(check_potential(p, *r.weights).has_value());
}

TEST(Verify, CompiledFamilyHasWeights) {
    for (const char* text : {"x >= 2", "x - y >= 0", "x = 1 mod 3", "2x + y = 3 mod 5", "(x = 1 mod 3) && (x >= 2)",
                             "(8x + 5y = 4 mod 11) || (-2x + y >= 5)"}) {
        PopulationComputer p = compile(parse_predicate(text));
        auto r = synthesize_potential(p);
        ASSERT_TRUE(r.weights.has_value()) << text;
        EXPECT_FALSE(r.witness.has_value());
        EXPECT_FALSE(check_potential(p, *r.weights).has_value()) << text;
    }
}

TEST(Verify, BoundedAgreesWithRestrictedSynthesis) {
    // A cycle in the reach graph exists iff the transitions it uses admit a
    // loop witness, on these fixtures.
    auto restricted = [](const PopulationComputer& p, const ReachGraph& g) {
        std::set<std::uint32_t> used;
        for (const auto& es : g.edges) {
            for (const auto& e : es) used.insert(e.label);
        }
        PopulationComputer r;
        for (const auto& l : p.labels()) r.add_state(l);
        for (auto t : used) r.add_transition(p.transitions()[t].lhs, p.transitions()[t].rhs);
        return r;
    };
    PopulationComputer t = toy();
    for (Count n = 2; n <= 5; ++n) {
        ReachGraph g = explore(t, Configuration{{t.state("q1"), n}}, 10000);
        EXPECT_EQ(*check_bounded(g), !synthesize_potential(restricted(t, g)).witness.has_value()) << n;
    }
    PopulationComputer f = compile(parse_predicate("2x + y = 3 mod 5"));
    ReachGraph g = explore(f, initial(f, {2, 2}), 100000);
    EXPECT_EQ(*check_bounded(g), !synthesize_potential(restricted(f, g)).witness.has_value());
}

TEST(Verify, SpeedAndTmin) {
    PopulationComputer p = remainder_sub(11, 4);
    auto c = p.multiset({{"1", 2}, {"0", 12}});
    const Transition* combine0 = p.find_transition(p.multiset({{"1", 2}}));
    EXPECT_EQ(tmin_of(*combine0, c), 2u);
    EXPECT_EQ(speed_of(p, {}), 0u);
    // Adding an agent to every state never lowers the speed.
    Configuration d = c;
    for (StateId q = 0; q < p.state_count(); ++q) {
        Configuration e = d;
        e.add(q);
        EXPECT_GE(speed_of(p, e), speed_of(p, d));
        d = e;
    }
}

TEST(Verify, WellInitialised) {
    PopulationComputer p = compile(parse_predicate("x >= 2"));
    const Count h = p.helpers.size();
    // No input agents and exactly |H| = 2n/3 is on the boundary.
    Configuration c{{p.state("0"), 3 * h / 2}};
    if ((3 * h) % 2 == 0) EXPECT_TRUE(check_well_initialised(p, c));
    Configuration roomy{{p.state("0"), 3 * h}};
    EXPECT_TRUE(check_well_initialised(p, roomy));
    auto all_inputs = initial(p, {10 * h});
    all_inputs.remove(p.state("0"), h);
    all_inputs.add(p.inputs[0], h);
    EXPECT_FALSE(check_well_initialised(p, initial(p, {0})));
    EXPECT_FALSE(check_well_initialised(p, all_inputs));
}

TEST(Verify, RapidSyntactic) {
    for (const char* text : {"x = 1 mod 3", "2x + y = 3 mod 5", "8x + 5y = 4 mod 11"}) {
        auto r = check_rapid_syntactic(compile(parse_predicate(text)));
        EXPECT_TRUE(r.ok()) << text << ": " << (r.problems.empty() ? "" : r.problems.front());
        EXPECT_LE(r.busy_states.size(), 1u) << text;
    }
    // Threshold subcomputers: +-2^(d-1) combine, cancel and cancel against
    // +-2^d, so the out-degree condition fails there; the input conditions hold.
    auto t = check_rapid_syntactic(compile(parse_predicate("x >= 2")));
    EXPECT_TRUE(t.inputs_terminal);
    EXPECT_TRUE(t.input_discipline);
    EXPECT_FALSE(t.out_degree);
    EXPECT_EQ(t.busy_states, (std::vector<std::string>{"t1:32", "t1:-32"}));
    PopulationComputer busy;
    for (const char* q : {"q", "p"}) {
        std::string s = q;
        busy.add_transition(busy.multiset({{s, 2}}), busy.multiset({{"o", 2}}));
        busy.add_transition(busy.multiset_of({s, "a"}), busy.multiset({{"o", 2}}));
        busy.add_transition(busy.multiset_of({s, "b"}), busy.multiset({{"o", 2}}));
    }
    EXPECT_FALSE(check_rapid_syntactic(busy).out_degree);
    PopulationComputer produce;
    produce.inputs = {produce.add_state("x")};
    produce.add_transition(produce.multiset_of({"h", "h"}), produce.multiset_of({"x", "h"}));
    EXPECT_FALSE(check_rapid_syntactic(produce).ok());
}

TEST(Verify, DistributedLayerExhaustive) {
    // Base: x, x -> y, y and y, x -> y, y with Q0 = {x}, Q1 = {y}; decides
    // "at least two agents".
    PopulationComputer base;
    auto x = base.add_state("x"), y = base.add_state("y");
    base.inputs = {x};
    base.add_transition(Multiset{{x, 2}}, Multiset{{y, 2}});
    base.add_transition(Multiset{{x, 1}, {y, 1}}, Multiset{{y, 2}});
    base.output = MarkedConsensus{{x}, {y}};
    DistributedProtocol d(base);
    for (Count n = 1; n <= 7; ++n) {
        Configuration c0{{DistributedProtocol::encode(x, 0, 0), n}};
        RunVerdict v = check_correct(d, c0, n >= 2, 1000000);
        EXPECT_TRUE(v.pass()) << n << ": " << v.note;
    }
    // The materialised protocol explores identically.
    PopulationComputer m = d.materialize();
    Configuration c0{{DistributedProtocol::encode(x, 0, 0), 5}};
    EXPECT_EQ(explore(m, c0, 100000).nodes.size(), explore(d, c0, 100000).nodes.size());
}

TEST(Verify, ReportJson) {
    Predicate pred = parse_predicate("x >= 2");
    PopulationComputer p = compile(pred);
    auto r = check_correct(p, pred, {3}, 1, 100000);
    auto j = to_json(r, p);
    EXPECT_EQ(j["expected"], 1);
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_EQ(j["runs"].size(), 2u);
    EXPECT_TRUE(j["runs"][0].contains("nodes"));
}
