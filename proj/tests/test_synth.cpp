#include <gtest/gtest.h>

#include "popc/synth.hpp"

using namespace popc;

namespace {

std::set<std::string> labels_of(const PopulationComputer& p) { return {p.labels().begin(), p.labels().end()}; }

Multiset ms(PopulationComputer& p, const std::map<std::string, Count>& m) { return p.multiset(m); }

const Transition* rule(PopulationComputer& p, const std::map<std::string, Count>& lhs) {
    return p.find_transition(ms(p, lhs));
}

std::int64_t value_of(const std::string& label) {
    auto colon = label.find(':');
    return std::stoll(colon == std::string::npos ? label : label.substr(colon + 1));
}

const std::vector<std::string> family = {"x >= 2",
                                         "x - y >= 0",
                                         "x = 1 mod 3",
                                         "2x + y = 3 mod 5",
                                         "(x = 1 mod 3) && (x >= 2)",
                                         "(8x + 5y = 4 mod 11) || (-2x + y >= 5)"};

}  // namespace

TEST(Synth, RemainderModulus11) {
    PopulationComputer p = remainder_sub(11, 4);
    EXPECT_EQ(labels_of(p), (std::set<std::string>{"0", "1", "2", "4", "8", "16"}));
    EXPECT_EQ(p.helpers.size(), 12u);
    ASSERT_EQ(p.transitions().size(), 6u);
    for (std::string v : {"1", "2", "4", "8"}) {
        const Transition* t = rule(p, {{v, 2}});
        ASSERT_NE(t, nullptr);
        EXPECT_EQ(t->rhs, ms(p, {{std::to_string(2 * std::stoi(v)), 1}, {"0", 1}}));
    }
    EXPECT_EQ(rule(p, {{"16", 1}, {"0", 1}})->rhs, ms(p, {{"4", 1}, {"1", 1}}));
    EXPECT_EQ(rule(p, {{"16", 4}})->rhs, ms(p, {{"8", 1}, {"1", 1}, {"0", 2}}));
    EXPECT_TRUE(validate(p).empty());
}

TEST(Synth, RemainderModulus19) {
    PopulationComputer p = remainder_sub(19);
    const Transition* t = rule(p, {{"32", 1}, {"0", 2}});
    ASSERT_NE(t, nullptr);
    EXPECT_EQ(t->rhs, ms(p, {{"8", 1}, {"4", 1}, {"1", 1}}));
}

TEST(Synth, RemainderModulus2) {
    PopulationComputer p = remainder_sub(2);
    ASSERT_EQ(p.transitions().size(), 2u);
    EXPECT_EQ(rule(p, {{"2", 1}, {"0", 1}})->rhs, ms(p, {{"0", 2}}));
    EXPECT_EQ(p.helpers.size(), 3u);
}

TEST(Synth, RemainderTransitionsPreserveResidue) {
    for (std::int64_t theta = 2; theta <= 70; ++theta) {
        PopulationComputer p = remainder_sub(theta);
        EXPECT_TRUE(validate(p).empty());
        for (const auto& t : p.transitions()) {
            std::int64_t l = 0, r = 0;
            for (const auto& [q, k] : t.lhs.entries()) l += value_of(p.label(q)) * std::int64_t(k);
            for (const auto& [q, k] : t.rhs.entries()) r += value_of(p.label(q)) * std::int64_t(k);
            ASSERT_EQ(((l - r) % theta + theta) % theta, 0) << theta;
        }
    }
}

TEST(Synth, ThresholdBound5Degree4) {
    PopulationComputer p = threshold_sub(5, 4);
    EXPECT_EQ(p.state_count(), 11u);
    EXPECT_EQ(p.transitions().size(), 15u);
    EXPECT_EQ(p.helpers.size(), 4u);
    EXPECT_EQ(rule(p, {{"8", 2}})->rhs, ms(p, {{"0", 1}, {"16", 1}}));
    EXPECT_EQ(rule(p, {{"-1", 2}})->rhs, ms(p, {{"0", 1}, {"-2", 1}}));
    EXPECT_EQ(rule(p, {{"-16", 1}, {"16", 1}})->rhs, ms(p, {{"0", 2}}));
    EXPECT_EQ(rule(p, {{"16", 1}, {"-8", 1}})->rhs, ms(p, {{"0", 1}, {"8", 1}}));
    EXPECT_EQ(rule(p, {{"-16", 1}, {"8", 1}})->rhs, ms(p, {{"0", 1}, {"-8", 1}}));
    // A configuration with large sum but small support sum is not terminal.
    auto c = ms(p, {{"8", 2}, {"-4", 1}, {"-2", 1}});
    EXPECT_FALSE(is_terminal(p, c));
    for (const auto& t : p.transitions()) {
        std::int64_t l = 0, r = 0;
        for (const auto& [q, k] : t.lhs.entries()) l += value_of(p.label(q)) * std::int64_t(k);
        for (const auto& [q, k] : t.rhs.entries()) r += value_of(p.label(q)) * std::int64_t(k);
        EXPECT_EQ(l, r);
    }
}

TEST(Synth, ThresholdDegreeBelowMinimumRejected) {
    EXPECT_THROW(threshold_sub(5, 3), std::invalid_argument);
    EXPECT_THROW(compile(parse_predicate("-2x + y >= 5"), {{0, 3}}), std::invalid_argument);
}

TEST(Synth, MixedPredicateDistribution) {
    Compiled c = compile_with_plan(parse_predicate("(8x + 5y = 4 mod 11) || (-2x + y >= 5)"), {{1, 4}});
    PopulationComputer& p = c.computer;
    EXPECT_EQ(rule(p, {{"X:x", 1}, {"0", 1}})->rhs, ms(p, {{"r1:8", 1}, {"t2:-2", 1}}));
    EXPECT_EQ(rule(p, {{"X:y", 1}, {"0", 2}})->rhs, ms(p, {{"r1:1", 1}, {"r1:4", 1}, {"t2:1", 1}}));
    EXPECT_EQ(c.plan.splitsize, 3u);
    EXPECT_EQ(p.helpers.size(), 18u);
    EXPECT_EQ(p.helpers, ms(p, {{"0", 18}}));
    EXPECT_TRUE(validate(p).empty());
}

TEST(Synth, MixedPredicateDefaultDegree) {
    Compiled c = compile_with_plan(parse_predicate("(8x + 5y = 4 mod 11) || (-2x + y >= 5)"));
    EXPECT_EQ(c.plan.atoms[1].degree, 8u);
    EXPECT_EQ(c.plan.atoms[0].degree, 4u);
}

TEST(Synth, SingleRemainderAtom) {
    PopulationComputer p = compile(parse_predicate("x = 1 mod 3"));
    EXPECT_EQ(rule(p, {{"X:x", 1}, {"0", 1}})->rhs, ms(p, {{"r1:1", 1}, {"0", 1}}));
    EXPECT_EQ(p.helpers.size(), 7u);
}

TEST(Synth, ZeroCoefficientDrains) {
    PopulationComputer p = compile(parse_predicate("0x + y >= 1"));
    EXPECT_EQ(rule(p, {{"X:x", 1}, {"0", 1}})->rhs, ms(p, {{"0", 2}}));
}

TEST(Synth, TrivialModulusFolds) {
    PopulationComputer p = compile(parse_predicate("x = 0 mod 1"));
    const auto& out = std::get<Circuit>(p.output);
    ASSERT_TRUE(out.constant.has_value());
    EXPECT_TRUE(*out.constant);
}

TEST(Synth, CompiledFamilyIsValidAndCertified) {
    for (const auto& text : family) {
        for (bool doubled : {false, true}) {
            Predicate pred = parse_predicate(text);
            if (doubled) pred = double_predicate(pred);
            PopulationComputer p = compile(pred);
            EXPECT_TRUE(validate(p).empty()) << text;
            auto w = potential(p);
            EXPECT_EQ(w.weight[p.state("0")], 0u);
            EXPECT_FALSE(check_potential(p, w).has_value()) << text;
        }
    }
}

TEST(Synth, PotentialMixedPredicateWeights) {
    PopulationComputer p = compile(parse_predicate("(8x + 5y = 4 mod 11) || (-2x + y >= 5)"), {{1, 4}});
    auto w = potential(p);
    EXPECT_EQ(w.weight[p.state("r1:8")], 9u);
    EXPECT_EQ(w.weight[p.state("X:x")], 11u);
    for (StateId q = 0; q < p.state_count(); ++q) {
        if (p.label(q).rfind("t2:", 0) == 0) EXPECT_EQ(w.weight[q], 1u);
    }
}

TEST(Synth, CheckPotentialRejects) {
    PopulationComputer p = remainder_sub(5);
    PotentialWeights zeros{std::vector<std::uint64_t>(p.state_count(), 0)};
    EXPECT_TRUE(check_potential(p, zeros).has_value());

    PopulationComputer toy;
    auto q1 = toy.add_state("q1"), q2 = toy.add_state("q2");
    toy.add_transition({{q1, 2}}, {{q2, 2}});
    toy.add_transition(Multiset{{q1, 1}, {q2, 1}}, {{q1, 2}});
    PotentialWeights w{{1, 0}};
    auto bad = check_potential(toy, w);
    ASSERT_TRUE(bad.has_value());
    EXPECT_EQ(*bad, 1u);
}

TEST(Synth, SizeLinearInFormulaBits) {
    // Measured: compiled size stays below 40 units per formula bit over the
    // test family and the modulus ladder.
    std::vector<std::string> texts = family;
    for (int k = 3; k <= 10; ++k) texts.push_back("x = 1 mod " + std::to_string((1 << k) + 1));
    for (const auto& text : texts) {
        Predicate pred = parse_predicate(text);
        EXPECT_LE(compile(pred).total_size(), 40 * size_bits(pred)) << text;
    }
}

TEST(Synth, SubcomputerStatsMatchStandalone) {
    // Threshold atom at degree 4: reservoir, +-1..+-16, four helpers.
    Compiled c = compile_with_plan(parse_predicate("-2x + y >= 5"), {{0, 4}});
    auto stats = subcomputer_stats(c.computer, plan_from_json(to_json(c.plan)));
    ASSERT_EQ(stats.size(), 1u);
    PopulationComputer alone = threshold_sub(5, 4);
    EXPECT_EQ(stats[0].states, 11u);
    EXPECT_EQ(stats[0].helpers, 4u);
    EXPECT_EQ(stats[0].states, alone.state_count());
    EXPECT_EQ(stats[0].transitions, alone.transitions().size());
    EXPECT_EQ(stats[0].helpers, alone.helpers.size());
}
