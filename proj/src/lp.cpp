#include "popc/lp.hpp"

#include <stdexcept>

namespace popc {

std::optional<std::vector<Rational>> nonnegative_solution(const RationalMatrix& m, const std::vector<Rational>& b) {
    const std::size_t rows = m.size();
    if (b.size() != rows) throw std::invalid_argument("right-hand side has the wrong length");
    const std::size_t cols = rows ? m[0].size() : 0;
    // Tableau [M | I | b] with one artificial variable per row.
    const std::size_t width = cols + rows + 1, rhs = width - 1;
    std::vector<std::vector<Rational>> t(rows, std::vector<Rational>(width));
    std::vector<std::size_t> basis(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        if (m[i].size() != cols) throw std::invalid_argument("ragged matrix");
        const bool flip = b[i] < 0;
        for (std::size_t j = 0; j < cols; ++j) t[i][j] = flip ? Rational(-m[i][j]) : m[i][j];
        t[i][cols + i] = 1;
        t[i][rhs] = flip ? Rational(-b[i]) : b[i];
        basis[i] = cols + i;
    }
    // Reduced costs of the phase-one objective (sum of artificials).
    std::vector<Rational> z(width);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) z[j] += t[i][j];
        z[rhs] += t[i][rhs];
    }
    while (true) {
        std::size_t enter = cols;
        for (std::size_t j = 0; j < cols; ++j) {
            if (z[j] > 0) {
                enter = j;  // Bland: lowest index
                break;
            }
        }
        if (enter == cols) break;
        std::size_t leave = rows;
        Rational best;
        for (std::size_t i = 0; i < rows; ++i) {
            if (t[i][enter] <= 0) continue;
            Rational ratio = t[i][rhs] / t[i][enter];
            if (leave == rows || ratio < best || (ratio == best && basis[i] < basis[leave])) {
                leave = i;
                best = ratio;
            }
        }
        if (leave == rows) throw std::logic_error("phase-one objective is unbounded");
        const Rational pivot = t[leave][enter];
        for (auto& v : t[leave]) {
            if (v != 0) v /= pivot;
        }
        auto eliminate = [&](std::vector<Rational>& row) {
            const Rational f = row[enter];
            if (f == 0) return;
            for (std::size_t j = 0; j < width; ++j) {
                if (t[leave][j] != 0) row[j] -= f * t[leave][j];
            }
        };
        for (std::size_t i = 0; i < rows; ++i) {
            if (i != leave) eliminate(t[i]);
        }
        eliminate(z);
        basis[leave] = enter;
    }
    if (z[rhs] != 0) return std::nullopt;
    std::vector<Rational> y(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (basis[i] < cols) y[basis[i]] = t[i][rhs];
    }
    return y;
}

std::optional<std::vector<Rational>> solve_inequalities(const RationalMatrix& a, const std::vector<Rational>& b) {
    const std::size_t rows = a.size();
    const std::size_t n = rows ? a[0].size() : 0;
    // A x+ - A x- + s = b with x+, x-, s >= 0.
    RationalMatrix m(rows, std::vector<Rational>(2 * n + rows));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            m[i][j] = a[i][j];
            m[i][n + j] = -a[i][j];
        }
        m[i][2 * n + i] = 1;
    }
    auto y = nonnegative_solution(m, b);
    if (!y) return std::nullopt;
    std::vector<Rational> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = (*y)[j] - (*y)[n + j];
    return x;
}

}  // namespace popc
