#include <gtest/gtest.h>

#include "popc/convert.hpp"
#include "popc/synth.hpp"

using namespace popc;

namespace {

PopulationComputer doubled(const std::string& text) { return compile(double_predicate(parse_predicate(text))); }

// q,q,r -> a,b,c plus a plain binary rule, with a circuit reading a and c.
PopulationComputer ternary() {
    PopulationComputer p;
    auto x = p.add_state("x");
    auto q = p.add_state("q"), r = p.add_state("r");
    p.inputs = {x};
    p.helpers = Multiset{{r, 1}, {q, 2}};
    p.add_transition(p.multiset({{"x", 1}, {"q", 1}}), p.multiset({{"q", 2}}));
    p.add_transition(p.multiset({{"q", 2}, {"r", 1}}), p.multiset_of({"a", "b", "c"}));
    p.add_transition(p.multiset_of({"a", "b"}), p.multiset_of({"c", "c"}));
    Circuit c;
    c.inputs = {"a", "c"};
    c.gates = {{Ref::input(0), Ref::input(1)}};
    c.out = Ref::gate(0);
    p.output = c;
    return p;
}

}  // namespace

TEST(Convert, TrimDropsUnreachableStates) {
    PopulationComputer p;
    p.inputs = {p.add_state("x")};
    p.helpers = p.multiset({{"h", 1}});
    p.add_transition(p.multiset_of({"x", "h"}), p.multiset_of({"y", "h"}));
    p.add_transition(p.multiset_of({"dead", "h"}), p.multiset_of({"y", "y"}));
    Circuit c;
    c.inputs = {"dead"};
    c.gates = {{Ref::input(0), Ref::input(0)}};
    c.out = Ref::gate(0);
    p.output = c;
    std::vector<std::optional<StateId>> kept;
    PopulationComputer t = trim(p, &kept);
    EXPECT_EQ(t.state_count(), 3u);
    EXPECT_EQ(t.transitions().size(), 1u);
    EXPECT_FALSE(kept[p.state("dead")].has_value());
    const auto& out = std::get<Circuit>(t.output);
    ASSERT_TRUE(out.constant.has_value());
    EXPECT_TRUE(*out.constant);
}

TEST(Convert, PreprocessAddsStartFlags) {
    PopulationComputer p = compile(parse_predicate("8x + 2y + z = 4 mod 11"));
    Converted c = preprocess(p);
    PopulationComputer q = c.computer;
    EXPECT_EQ(q.state_count(), p.state_count() + 4);
    EXPECT_EQ(q.transitions().size(), p.transitions().size() + 3);
    EXPECT_EQ(q.helpers.size(), p.helpers.size() + 1);
    ASSERT_EQ(q.inputs.size(), 3u);
    for (StateId x : q.inputs) EXPECT_EQ(q.label(x)[0], '*');
    // Configurations of starred inputs alone are terminal.
    Configuration only_inputs;
    for (StateId x : q.inputs) only_inputs.add(x, 3);
    EXPECT_TRUE(is_terminal(q, only_inputs));
    EXPECT_TRUE(validate(q).empty());
    EXPECT_TRUE(check_refinement(p, q, c.map, 50, 1).ok);
}

TEST(Convert, BinariseMultiwayTransition) {
    PopulationComputer p = ternary();
    Converted c = binarise(p);
    PopulationComputer b = c.computer;
    EXPECT_TRUE(b.is_binary());
    EXPECT_TRUE(validate(b).empty());
    // r has fewer outgoing transitions than q, so r is the primary.
    const Transition* commit = b.find_transition(b.multiset_of({"r", "(q,2)"}));
    ASSERT_NE(commit, nullptr);
    EXPECT_EQ(commit->rhs, b.multiset({{"(@t1,1)", 1}, {"(q,0)", 1}}));
    // Stacking q,q -> (q,2),(q,0) and the binary rule kept verbatim.
    EXPECT_EQ(b.find_transition(b.multiset({{"q", 2}}))->rhs, b.multiset_of({"(q,2)", "(q,0)"}));
    EXPECT_EQ(b.find_transition(b.multiset_of({"a", "b"}))->rhs, b.multiset({{"c", 2}}));
    auto r = check_refinement(p, b, c.map, 100, 7);
    EXPECT_TRUE(r.ok) << (r.violations.empty() ? "" : r.violations.front());
}

TEST(Convert, BinariseFastModulo) {
    PopulationComputer p = remainder_sub(11, 4);
    PopulationComputer in = p;
    in.inputs = {in.state("1"), in.state("2"), in.state("16")};
    in.helpers = in.multiset({{"0", 3}});
    Converted c = binarise(in);
    EXPECT_TRUE(c.computer.is_binary());
    EXPECT_TRUE(validate(c.computer).empty());
    auto r = check_refinement(in, c.computer, c.map, 100, 3, 5);
    EXPECT_TRUE(r.ok) << (r.violations.empty() ? "" : r.violations.front());
}

TEST(Convert, BinariseCompiledFamily) {
    for (const char* text : {"x >= 2", "2x + y = 3 mod 5", "(8x + 5y = 4 mod 11) || (-2x + y >= 5)"}) {
        PopulationComputer p = doubled(text);
        Converted c = binarise(p);
        EXPECT_TRUE(c.computer.is_binary()) << text;
        auto r = check_refinement(p, c.computer, c.map, 100, 11);
        EXPECT_TRUE(r.ok) << text << ": " << (r.violations.empty() ? "" : r.violations.front());
    }
}

TEST(Convert, FocaliseLeaderAndGate) {
    PopulationComputer b = binarise(doubled("x - y >= 1")).computer;
    Converted c = focalise(b);
    PopulationComputer f = c.computer;
    EXPECT_TRUE(validate(f).empty());
    ASSERT_TRUE(std::holds_alternative<MarkedConsensus>(f.output));
    // Two tracker agents for the same state: one is demoted to reset.
    std::string tracked;
    for (const auto& l : f.labels()) {
        if (l.size() > 3 && l.substr(l.size() - 3) == ":1]" && l[1] != 'g' && l.rfind("[reset", 0) != 0) tracked = l;
    }
    ASSERT_FALSE(tracked.empty());
    const std::string zero = tracked.substr(0, tracked.size() - 2) + "0]";
    const Transition* lead = f.find_transition(f.multiset_of({zero, tracked}));
    ASSERT_NE(lead, nullptr);
    EXPECT_EQ(lead->rhs, f.multiset_of({zero, "[reset:0]"}));
    // An idle gate agent either learns its first input, is reset or takes
    // part in leader election.
    std::size_t steps = 0;
    for (const auto& t : f.transitions()) {
        for (const auto& [q, k] : t.lhs.entries()) {
            if (f.label(q) == "[g0:_,_,_]") {
                ++steps;
                bool moved = false;
                for (const auto& [s, m] : t.rhs.entries()) moved |= f.label(s) == "[g0:_,0,_]" || f.label(s) == "[g0:_,1,_]";
                bool reset = false;
                for (const auto& [s, m] : t.lhs.entries()) reset |= f.label(s).rfind("[reset", 0) == 0;
                reset |= k == 2;  // leader election between two gate agents
                for (const auto& [s, m] : t.lhs.entries()) reset |= f.label(s).rfind("[g0", 0) == 0 && s != q;
                EXPECT_TRUE(moved || reset) << describe(f, t.lhs);
            }
        }
    }
    EXPECT_GT(steps, 0u);
    // Helpers grow by one per tracker, one per gate and the reset agent.
    EXPECT_GT(f.helpers.size(), b.helpers.size());
}

TEST(Convert, FocaliseRefinement) {
    PopulationComputer b = binarise(doubled("x >= 2")).computer;
    Converted c = focalise(b);
    auto r = check_refinement(b, c.computer, c.map, 100, 5, 2);
    EXPECT_TRUE(r.ok) << (r.violations.empty() ? "" : r.violations.front());
}

TEST(Convert, FocaliseConstantOutput) {
    PopulationComputer p = doubled("x = 0 mod 1");
    Converted c = focalise(binarise(p).computer);
    EXPECT_TRUE(validate(c.computer).empty());
    auto r = check_refinement(binarise(p).computer, c.computer, c.map, 30, 2, 2);
    EXPECT_TRUE(r.ok) << (r.violations.empty() ? "" : r.violations.front());
}

TEST(Convert, AutarkifySingleHelper) {
    PopulationComputer p;
    auto x = p.add_state("x"), xp = p.add_state("x'"), h = p.add_state("h");
    p.inputs = {x, xp};
    p.helpers = Multiset{{h, 1}};
    p.add_transition(Multiset{{xp, 1}, {h, 1}}, Multiset{{h, 2}});
    p.output = MarkedConsensus{{}, {h}};
    Converted c = autarkify(p);
    EXPECT_TRUE(c.computer.helpers.empty());
    ASSERT_EQ(c.computer.inputs.size(), 1u);
    EXPECT_EQ(c.computer.find_transition(c.computer.multiset({{"x", 2}}))->rhs, c.computer.multiset_of({"x'", "h"}));
}

TEST(Convert, AutarkifyHelperChain) {
    PopulationComputer p;
    auto x = p.add_state("x"), xp = p.add_state("x'");
    p.inputs = {x, xp};
    p.helpers = p.multiset({{"a", 2}, {"b", 2}});
    p.output = MarkedConsensus{{p.state("a")}, {p.state("b")}};
    Converted c = autarkify(p);
    PopulationComputer q = c.computer;
    EXPECT_EQ(q.find_transition(q.multiset({{"x", 2}}))->rhs, q.multiset_of({"x'", "[up:1]"}));
    EXPECT_EQ(q.find_transition(q.multiset_of({"[up:1]", "[up:3]"}))->rhs, q.multiset_of({"[down:4]", "[up:0]"}));
    EXPECT_EQ(q.find_transition(q.multiset_of({"[down:4]", "[up:0]"}))->rhs, q.multiset_of({"[down:3]", "b"}));
    EXPECT_EQ(q.find_transition(q.multiset_of({"[down:2]", "[up:0]"}))->rhs, q.multiset_of({"a", "a"}));
    // Eight doubled agents release four helpers, landing exactly on H.
    Configuration c0 = q.multiset({{"x", 8}});
    for (int i = 0; i < 1000; ++i) {
        auto en = enabled(q, c0);
        if (en.empty()) break;
        c0 = step(c0, *en.front());
    }
    EXPECT_EQ(c0[q.state("x'")], 4u);
    EXPECT_EQ(c0[q.state("b")], 2u);
    EXPECT_THROW(autarkify(binarise(compile(parse_predicate("x >= 1"))).computer), std::invalid_argument);
}

TEST(Convert, DistributeRules) {
    PopulationComputer base;
    auto a = base.add_state("a"), b = base.add_state("b"), m = base.add_state("m"), z = base.add_state("z");
    base.inputs = {a};
    base.add_transition(Multiset{{a, 1}, {b, 1}}, Multiset{{m, 1}, {b, 1}});
    base.output = MarkedConsensus{{z}, {m}};
    DistributedProtocol d(base);
    using D = DistributedProtocol;
    EXPECT_EQ(d.state_count(), 16u);
    // Certify: the base step lands in the 1-marked state.
    auto r = d.interact(D::encode(a, 0, 0), D::encode(b, 0, 0));
    ASSERT_TRUE(r.has_value());
    std::multiset<StateId> got{r->first, r->second};
    EXPECT_EQ(got, (std::multiset<StateId>{D::encode(m, 1, 1), D::encode(b, 1, 1)}));
    // Convince: a token holder flips a tokenless opponent, both lose tokens.
    r = d.interact(D::encode(b, 1, 1), D::encode(b, 0, 0));
    ASSERT_TRUE(r.has_value());
    EXPECT_EQ(r->first, D::encode(b, 1, 0));
    EXPECT_EQ(r->second, D::encode(b, 1, 0));
    // Drop: opposite tokens cancel, opinions stay.
    r = d.interact(D::encode(b, 1, 1), D::encode(b, 0, 1));
    ASSERT_TRUE(r.has_value());
    EXPECT_EQ(std::multiset<StateId>({r->first, r->second}),
              (std::multiset<StateId>{D::encode(b, 1, 0), D::encode(b, 0, 0)}));
    // Same opinion with tokens over a silent unmarked pair: nothing happens.
    EXPECT_FALSE(d.interact(D::encode(b, 1, 1), D::encode(b, 1, 1)).has_value());
    // A marked agent certifies even when the base pair is silent.
    r = d.interact(D::encode(b, 1, 1), D::encode(z, 1, 1));
    ASSERT_TRUE(r.has_value());
    EXPECT_EQ(std::multiset<StateId>({r->first, r->second}),
              (std::multiset<StateId>{D::encode(b, 0, 1), D::encode(z, 0, 1)}));
    EXPECT_EQ(d.output({D::encode(b, 1, 0), D::encode(z, 1, 1)}), Verdict::one);
    EXPECT_EQ(d.output({D::encode(b, 1, 0), D::encode(z, 0, 1)}), Verdict::undefined);
    PopulationComputer mat = d.materialize();
    EXPECT_TRUE(validate(mat).empty());
    EXPECT_TRUE(mat.is_binary());
}

TEST(Convert, CorruptedMapFails) {
    PopulationComputer p = doubled("x >= 2");
    Converted c = binarise(p);
    ASSERT_TRUE(check_refinement(p, c.computer, c.map, 100, 9).ok);
    RefinementMap bad = c.map;
    PopulationComputer b = c.computer;
    std::swap(bad.image[b.state("X:x")], bad.image[b.state("0")]);
    EXPECT_FALSE(check_refinement(p, b, bad, 100, 9).ok);
}

TEST(Convert, RefinementJsonRoundTrip) {
    PopulationComputer b = binarise(doubled("x >= 2")).computer;
    Converted c = focalise(b);
    auto j = to_json(c.map, c.computer, b);
    EXPECT_TRUE(j.contains("@offset"));
    RefinementMap back = refinement_from_json(j, c.computer, b);
    EXPECT_EQ(back.image, c.map.image);
    EXPECT_EQ(back.offset, c.map.offset);
}

TEST(Convert, PipelineFastValidates) {
    PipelineResult r = run_pipeline(doubled("x - y >= 1"), PipelineMode::fast);
    ASSERT_TRUE(r.report.ok());
    ASSERT_EQ(r.report.stages.size(), 4u);
    const auto& last = r.stages.back().computer;
    EXPECT_TRUE(last.helpers.empty());
    EXPECT_EQ(r.report.protocol_states, 4 * last.state_count());
    EXPECT_EQ(r.report.min_input, 108u);
    auto j = to_json(r.report);
    EXPECT_TRUE(j["ok"].get<bool>());
}

TEST(Convert, PipelineRejectsNonRapidInFastMode) {
    PopulationComputer p;
    auto x = p.add_state("x"), h = p.add_state("h");
    p.inputs = {x};
    p.helpers = Multiset{{h, 1}};
    p.add_transition(Multiset{{x, 2}}, Multiset{{h, 2}});
    p.output = Circuit::make_constant(true, {"h"});
    try {
        run_pipeline(p, PipelineMode::fast);
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("input:"), std::string::npos);
    }
    // The full pipeline routes inputs through start flags and succeeds.
    PopulationComputer d = p;
    auto xp = d.add_state("x'");
    d.inputs.push_back(xp);
    d.add_transition(Multiset{{xp, 1}, {h, 1}}, Multiset{{h, 2}});
    PipelineResult r = run_pipeline(d, PipelineMode::full);
    EXPECT_TRUE(r.report.ok());
    EXPECT_EQ(r.report.stages[1].name, "preprocess");
}

TEST(Convert, PipelineStatesLinearInComputerSize) {
    // Measured over the family: protocol states per unit of compiled size.
    for (const char* text : {"x >= 2", "x - y >= 0", "x = 1 mod 3", "2x + y = 3 mod 5"}) {
        PopulationComputer p = doubled(text);
        PipelineResult r = run_pipeline(p, PipelineMode::fast);
        double ratio = double(r.report.protocol_states) / double(p.total_size());
        EXPECT_LT(ratio, 40.0) << text;
    }
}
