#pragma once

#include <optional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace popc {

using Rational = boost::multiprecision::cpp_rational;
using RationalMatrix = std::vector<std::vector<Rational>>;

// Exact phase-one simplex with Bland's rule: some y >= 0 with M y = b, or
// nothing if the system is infeasible.
std::optional<std::vector<Rational>> nonnegative_solution(const RationalMatrix& m, const std::vector<Rational>& b);

// Some x with A x <= b (x free), or nothing if infeasible.
std::optional<std::vector<Rational>> solve_inequalities(const RationalMatrix& a, const std::vector<Rational>& b);

}  // namespace popc
