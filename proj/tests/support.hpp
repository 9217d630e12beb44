#pragma once

// Shared helpers for the test suites: seeded random objects and small
// brute-force oracles that do not reuse library code paths.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>

#include "bottdeg/clifford.hpp"
#include "bottdeg/euclid.hpp"

namespace testsupport {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline std::mt19937_64& rng() {
    static std::mt19937_64 gen(20240917);
    return gen;
}

inline double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng());
}

inline int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(rng());
}

inline MatrixXd gaussian_matrix(int rows, int cols) {
    std::normal_distribution<double> d;
    MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = d(rng());
    return m;
}

inline VectorXd gaussian_vector(int n) { return gaussian_matrix(n, 1).col(0); }

inline MatrixXd random_orthogonal(int n) {
    Eigen::HouseholderQR<MatrixXd> qr(gaussian_matrix(n, n));
    return qr.householderQ() * MatrixXd::Identity(n, n);
}

/// Random invertible matrix with singular values in [lo, hi].
inline MatrixXd random_invertible(int n, double lo = 0.2, double hi = 3.0) {
    VectorXd s(n);
    for (int i = 0; i < n; ++i) s(i) = uniform(lo, hi);
    return random_orthogonal(n) * s.asDiagonal() * random_orthogonal(n);
}

inline bottdeg::CliffordElement random_element(int n, int parity = -1) {
    bottdeg::CliffordElement a(n);
    std::normal_distribution<double> d;
    for (std::uint32_t s = 0; s < a.size(); ++s) {
        if (parity >= 0 && std::popcount(s) % 2 != parity) continue;
        a[s] = {d(rng()), d(rng())};
    }
    return a;
}

/// Minimizes f over [lo, hi] by a dense grid followed by golden-section
/// refinement of the best cell.
inline double grid_minimize(const std::function<double(double)>& f, double lo, double hi,
                            int n = 2000) {
    double best = f(lo);
    double best_t = lo;
    const double h = (hi - lo) / n;
    for (int i = 1; i <= n; ++i) {
        const double t = lo + i * h;
        const double v = f(t);
        if (v < best) {
            best = v;
            best_t = t;
        }
    }
    double a = std::max(lo, best_t - h);
    double b = std::min(hi, best_t + h);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100; ++it) {
        const double c = b - g * (b - a);
        const double d = a + g * (b - a);
        if (f(c) < f(d)) b = d;
        else a = c;
    }
    return std::min(best, f(0.5 * (a + b)));
}

/// Unit sphere of a subspace of dimension 1 or 2, parametrized by angle.
/// For dimension 1 the two points +-a are reached at phi = 0 and phi = pi.
inline VectorXd unit_in(const MatrixXd& frame, double phi) {
    if (frame.cols() == 1) return (std::cos(phi) >= 0 ? 1.0 : -1.0) * frame.col(0);
    return std::cos(phi) * frame.col(0) + std::sin(phi) * frame.col(1);
}

/// sup over unit v2 of inf over unit v1 of |v1 - v2|, evaluated directly from
/// the definition for frames of dimension 1 or 2.
inline double brute_one_sided(const MatrixXd& f1, const MatrixXd& f2) {
    const double two_pi = 2.0 * std::numbers::pi;
    auto inner = [&](const VectorXd& v2) {
        if (f1.cols() == 1)
            return std::min((f1.col(0) - v2).norm(), (f1.col(0) + v2).norm());
        return grid_minimize([&](double p) { return (unit_in(f1, p) - v2).norm(); }, 0.0, two_pi);
    };
    if (f2.cols() == 1) return std::max(inner(f2.col(0)), inner(-f2.col(0)));
    return -grid_minimize([&](double p) { return -inner(unit_in(f2, p)); }, 0.0, two_pi, 400);
}

} // namespace testsupport
