#include <gtest/gtest.h>

#include "popc/circuit.hpp"

using namespace popc;

namespace {

std::set<std::string> support_of(unsigned mask, const std::vector<std::int64_t>& values) {
    std::set<std::string> s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (mask >> i & 1) s.insert(std::to_string(values[i]));
    }
    return s;
}

std::vector<std::int64_t> powers(unsigned d, int sign) {
    std::vector<std::int64_t> v;
    for (unsigned i = 0; i <= d; ++i) v.push_back(sign * (std::int64_t(1) << i));
    return v;
}

void expect_nand_only_and_backward(const Circuit& c) {
    EXPECT_TRUE(c.check().empty());
    for (std::size_t g = 0; g < c.gates.size(); ++g) {
        for (Ref r : {c.gates[g].a, c.gates[g].b}) {
            if (r.is_gate()) EXPECT_LT(r.index, g);
        }
    }
}

}  // namespace

TEST(Circuit, SingleNandIsNegation) {
    Circuit c;
    c.inputs = {"x"};
    c.gates = {{Ref::input(0), Ref::input(0)}};
    c.out = Ref::gate(0);
    EXPECT_FALSE(c.eval({"x"}));
    EXPECT_TRUE(c.eval({}));
}

TEST(Circuit, RemainderNamedSupports) {
    Circuit c = build_remainder_output(4, 11, 4);
    EXPECT_TRUE(c.eval({"4"}));
    EXPECT_TRUE(c.eval({"1", "2", "4", "8"}));
    EXPECT_FALSE(c.eval({"2", "4", "8"}));
    expect_nand_only_and_backward(c);
}

TEST(Circuit, RemainderParityCase) {
    Circuit c = build_remainder_output(1, 2, 0);
    EXPECT_TRUE(c.eval({}));
    EXPECT_TRUE(c.eval({"2"}));
    EXPECT_FALSE(c.eval({"1"}));
    EXPECT_FALSE(c.eval({"1", "2"}));
}

TEST(Circuit, RemainderExhaustive) {
    for (std::int64_t theta : {3, 5, 11, 19, 32, 33}) {
        unsigned d = 0;
        while ((std::int64_t(1) << d) < theta) ++d;
        auto values = powers(d, 1);
        for (std::int64_t c = 0; c < theta; ++c) {
            Circuit circuit = build_remainder_output(d, theta, c);
            expect_nand_only_and_backward(circuit);
            for (unsigned mask = 0; mask < (1u << (d + 1)); ++mask) {
                std::int64_t sum = 0;
                for (unsigned i = 0; i <= d; ++i) {
                    if (mask >> i & 1) sum += values[i];
                }
                ASSERT_EQ(circuit.eval(support_of(mask, values)), sum % theta == c)
                    << "theta=" << theta << " c=" << c << " mask=" << mask;
            }
        }
    }
}

TEST(Circuit, ThresholdSupports) {
    Circuit c = build_threshold_output(4, 5);
    EXPECT_TRUE(c.eval({"8", "-4", "2"}));
    EXPECT_TRUE(c.eval({"16"}));
    EXPECT_FALSE(c.eval({"-16"}));
    expect_nand_only_and_backward(c);
}

TEST(Circuit, ThresholdExhaustive) {
    for (unsigned d = 1; d <= 6; ++d) {
        auto values = powers(d, 1);
        auto negs = powers(d, -1);
        values.insert(values.end(), negs.begin(), negs.end());
        for (std::int64_t bound : {-3, 0, 1, 5, 17}) {
            Circuit circuit = build_threshold_output(d, bound);
            for (unsigned mask = 0; mask < (1u << values.size()); ++mask) {
                std::int64_t sum = 0;
                for (std::size_t i = 0; i < values.size(); ++i) {
                    if (mask >> i & 1) sum += values[i];
                }
                ASSERT_EQ(circuit.eval(support_of(mask, values)), sum >= bound)
                    << "d=" << d << " c=" << bound << " mask=" << mask;
            }
        }
    }
}

TEST(Circuit, GateCountGrowsLinearly) {
    // Measured bounds: at most 5 gates per bit for the remainder comparator
    // and 13 per bit for the threshold comparator.
    for (unsigned d = 2; d <= 16; ++d) {
        std::int64_t theta = (std::int64_t(1) << d) - 1;
        EXPECT_LE(build_remainder_output(d, theta, theta / 2).gate_count(), 5u * (d + 1)) << d;
        EXPECT_LE(build_threshold_output(d, (std::int64_t(1) << (d - 1)) - 1).gate_count(), 13u * (d + 1)) << d;
        EXPECT_LE(build_threshold_output(d, -(std::int64_t(1) << (d - 1))).gate_count(), 13u * (d + 1)) << d;
    }
}

TEST(Circuit, CombineDisjunction) {
    Circuit a = rename_inputs(build_remainder_output(2, 3, 1), [](const std::string& s) { return "a" + s; });
    Circuit b = rename_inputs(build_threshold_output(2, 2), [](const std::string& s) { return "b" + s; });
    BoolExpr orr{BoolExpr::Op::disj, 0, false, {{BoolExpr::Op::slot, 0}, {BoolExpr::Op::slot, 1}}};
    Circuit c = combine(orr, {a, b});
    EXPECT_TRUE(c.eval({"b2"}));    // only the second holds
    EXPECT_TRUE(c.eval({"a1"}));    // only the first holds
    EXPECT_FALSE(c.eval({"a2"}));   // neither
    expect_nand_only_and_backward(c);
}

TEST(Circuit, CombineNegationFlipsTruthTable) {
    Circuit a = build_remainder_output(3, 5, 2);
    BoolExpr neg{BoolExpr::Op::neg, 0, false, {{BoolExpr::Op::slot, 0}}};
    Circuit c = combine(neg, {a});
    auto values = powers(3, 1);
    for (unsigned mask = 0; mask < 16; ++mask) {
        auto s = support_of(mask, values);
        EXPECT_NE(c.eval(s), a.eval(s));
    }
}

TEST(Circuit, ConstantsFold) {
    CircuitBuilder b;
    auto x = b.input("x");
    EXPECT_EQ(b.nand(x, b.negate(x)).kind, CircuitBuilder::Wire::Kind::one);
    Circuit c = b.finish(b.conj(x, b.zero()));
    ASSERT_TRUE(c.constant.has_value());
    EXPECT_FALSE(*c.constant);
    EXPECT_TRUE(c.gates.empty());
    BoolExpr t{BoolExpr::Op::constant, 0, true, {}};
    EXPECT_TRUE(combine(t, {}).eval({}));
}

TEST(Circuit, SubstituteInputsBuildsDisjunction) {
    Circuit neg;
    neg.inputs = {"q"};
    neg.gates = {{Ref::input(0), Ref::input(0)}};
    neg.out = Ref::gate(0);
    Circuit s = substitute_inputs(neg, [](const std::string&) { return std::vector<std::string>{"q0", "q1"}; });
    EXPECT_TRUE(s.eval({}));
    EXPECT_FALSE(s.eval({"q0"}));
    EXPECT_FALSE(s.eval({"q1"}));
    Circuit gone = substitute_inputs(neg, [](const std::string&) { return std::vector<std::string>{}; });
    ASSERT_TRUE(gone.constant.has_value());
    EXPECT_TRUE(*gone.constant);
}

TEST(Circuit, JsonRoundTrip) {
    Circuit c = build_threshold_output(3, 2);
    EXPECT_EQ(circuit_from_json(to_json(c)), c);
    Circuit k = Circuit::make_constant(true, {"a"});
    EXPECT_EQ(circuit_from_json(to_json(k)), k);
    auto bad = to_json(c);
    bad["gates"][0]["a"] = {{"g", 5}};
    EXPECT_THROW(circuit_from_json(bad), std::invalid_argument);
}
