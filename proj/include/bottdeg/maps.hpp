#pragma once

// Named finite-dimensional instances: the cubic and square maps on R^2, the
// cyclic cubic maps on R^l, the windowed shift maps, and their homotopies.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>

#include "bottdeg/bott.hpp"
#include "bottdeg/error.hpp"
#include "bottdeg/euclid.hpp"

namespace bottdeg {

using HomotopyFamily = std::function<VectorXd(double, const VectorXd&)>;

/// The cyclic permutation (a_1, ..., a_l) ↦ (a_l, a_1, ..., a_{l-1}).
inline MatrixXd cyclic_permutation(int l) {
    MatrixXd t = MatrixXd::Zero(l, l);
    for (int j = 0; j < l; ++j) t(j, (j + l - 1) % l) = 1.0;
    return t;
}

/// a_j ↦ a_j + a_{j-1}^p with indices mod l (p = 3: the cyclic cubic map).
inline ProperNonlinearMap cyclic_power_map(int l, int p = 3) {
    if (l < 1) throw Error(ErrorKind::InvalidArgument, "cyclic map needs l >= 1");
    ProperNonlinearMap f;
    f.name = l == 2 ? (p == 3 ? "cubic2" : p == 2 ? "square2" : "cyclic") : "cyclic";
    f.params = {{"l", l}, {"power", p}};
    f.dim_source = f.dim_target = l;
    f.eval = [l, p](const VectorXd& a) {
        VectorXd out(l);
        for (int j = 0; j < l; ++j) out(j) = a(j) + std::pow(a((j + l - 1) % l), p);
        return out;
    };
    f.jac = [l, p](const VectorXd& a) {
        MatrixXd m = MatrixXd::Identity(l, l);
        for (int j = 0; j < l; ++j) {
            const int k = (j + l - 1) % l;
            m(j, k) += p * std::pow(a(k), p - 1);
        }
        return m;
    };
    f.linear_part = LinearMap::identity(l);
    return f;
}

/// (a, b) ↦ (a + b^3, b + a^3).
inline ProperNonlinearMap cubic2() { return cyclic_power_map(2, 3); }

/// (a, b) ↦ (a + b^2, b + a^2).
inline ProperNonlinearMap square2() { return cyclic_power_map(2, 2); }

inline ProperNonlinearMap cyclic_map(int l) {
    ProperNonlinearMap f = cyclic_power_map(l, 3);
    f.name = "cyclic";
    return f;
}

inline ProperNonlinearMap swap_map() {
    MatrixXd s(2, 2);
    s << 0, 1, 1, 0;
    return linear_proper_map(LinearMap(s), "swap");
}

/// The window truncation F^l on R^{2l+1}: the cyclic cubic map of length 2l+1,
/// with the last component wrapped to the first.
inline ProperNonlinearMap zwindow_map(int l) {
    ProperNonlinearMap f = cyclic_power_map(2 * l + 1, 3);
    f.name = "zwindow";
    f.params = {{"l", l}, {"dim", 2 * l + 1}};
    return f;
}

/// Two-phase homotopy from the cyclic permutation (t = 0) to the cyclic
/// power map (t = 1), for a_j ↦ a_j + a_{j-1}^p:
///   t >= 1/2, tau = 2t - 1:   tau a_j + a_{j-1}^p
///   t <= 1/2, sigma = 2t:     sigma a_{j-1}^p + (1 - sigma) a_{j-1}
/// For odd p the only zero in the second phase is 0 and the first phase has
/// its nonzero zeros on |a_j| = tau^{1/(p-1)} <= 1.
inline HomotopyFamily cyclic_involution_homotopy(int l, int p = 3) {
    return [l, p](double t, const VectorXd& a) {
        VectorXd out(l);
        for (int j = 0; j < l; ++j) {
            const double prev = a((j + l - 1) % l);
            const double np = std::pow(prev, p);
            if (t >= 0.5) out(j) = (2.0 * t - 1.0) * a(j) + np;
            else out(j) = 2.0 * t * np + (1.0 - 2.0 * t) * prev;
        }
        return out;
    };
}

/// (1 - t) L + t F.
inline HomotopyFamily straight_line_homotopy(const ProperNonlinearMap& f, const LinearMap& l) {
    const MatrixXd m = l.matrix();
    return [f, m](double t, const VectorXd& x) { return VectorXd((1.0 - t) * (m * x) + t * f(x)); };
}

inline HomotopyFamily constant_homotopy(const ProperNonlinearMap& f) {
    return [f](double, const VectorXd& x) { return f(x); };
}

} // namespace bottdeg
