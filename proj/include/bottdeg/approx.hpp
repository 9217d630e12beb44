#pragma once

// Finite-dimensional approximation: Fourier states with a Sobolev norm, the
// pointwise cube by coefficient convolution, the block Sobolev model
// a_j ↦ a_j + pr(a_{j-1}^3) with its truncation stages, the δ-net subspace
// builder and the checkers for the finite-approximation conditions.
//
// Block model coordinates: each block is a real function on a circle of
// period 1 truncated at |k| ≤ kmax, written in the Sobolev-orthonormal basis
//   1, √2 cos(2πks)/√w_k, √2 sin(2πks)/√w_k   (k = 1..kmax),
// with w_k = (1 + (2πk/period)^2)^order. Block b occupies coordinates
// [b(2kmax+1), (b+1)(2kmax+1)) in the order c_0, cos_1, sin_1, ..., so the
// Euclidean norm of a coordinate vector is its Sobolev norm and truncation at
// n is a coordinate subspace.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bottdeg/bott.hpp"
#include "bottdeg/degree.hpp"
#include "bottdeg/error.hpp"
#include "bottdeg/euclid.hpp"
#include "bottdeg/maps.hpp"

namespace bottdeg {

// ---------------------------------------------------------------------------
// Fourier states

class FourierState {
public:
    FourierState(double period, int order, int kmax) : period_(period), order_(order), kmax_(kmax) {
        if (!(period > 0.0) || order < 0 || kmax < 0)
            throw Error(ErrorKind::InvalidArgument, "Fourier state needs period > 0, order >= 0, kmax >= 0");
        coeffs_.assign(static_cast<std::size_t>(2 * kmax + 1), cplx(0.0));
    }

    static FourierState constant(double period, int order, int kmax, double value) {
        FourierState a(period, order, kmax);
        a.set(0, value);
        return a;
    }

    /// amp · cos(2πks/period)
    static FourierState cosine(double period, int order, int kmax, int k, double amp = 1.0) {
        FourierState a(period, order, kmax);
        if (k == 0) a.set(0, amp);
        else a.set(k, 0.5 * amp);
        return a;
    }

    /// amp · sin(2πks/period)
    static FourierState sine(double period, int order, int kmax, int k, double amp = 1.0) {
        FourierState a(period, order, kmax);
        if (k != 0) a.set(k, cplx(0.0, -0.5 * amp));
        return a;
    }

    /// Coefficients from n equispaced samples s_j = j·period/n (n > 2 kmax).
    static FourierState from_samples(std::span<const double> values, double period, int order, int kmax) {
        const int n = static_cast<int>(values.size());
        if (n <= 2 * kmax) throw Error(ErrorKind::InvalidArgument, "too few samples for the requested bandwidth");
        FourierState a(period, order, kmax);
        for (int k = -kmax; k <= kmax; ++k) {
            cplx acc(0.0);
            for (int j = 0; j < n; ++j)
                acc += values[static_cast<std::size_t>(j)] *
                       std::polar(1.0, -2.0 * std::numbers::pi * double((long(k) * j) % n) / n);
            a.coeff_ref(k) = acc / double(n);
        }
        return a;
    }

    double period() const { return period_; }
    int order() const { return order_; }
    int kmax() const { return kmax_; }
    const std::vector<cplx>& coeffs() const { return coeffs_; }

    cplx coeff(int k) const { return std::abs(k) > kmax_ ? cplx(0.0) : coeffs_[idx(k)]; }

    cplx& coeff_ref(int k) {
        if (std::abs(k) > kmax_) throw Error(ErrorKind::BandwidthOverflow, "mode outside the stored band");
        return coeffs_[idx(k)];
    }

    /// Sets a_k and a_{-k} = conj(a_k); a_0 must be real.
    void set(int k, cplx v) {
        if (k == 0) {
            coeff_ref(0) = cplx(v.real(), 0.0);
            return;
        }
        coeff_ref(k) = v;
        coeff_ref(-k) = std::conj(v);
    }

    double weight(int k) const {
        const double w = 2.0 * std::numbers::pi * k / period_;
        return std::pow(1.0 + w * w, order_);
    }

    double sobolev_norm() const {
        double s = 0.0;
        for (int k = -kmax_; k <= kmax_; ++k) s += weight(k) * std::norm(coeff(k));
        return std::sqrt(s);
    }

    double value(double s) const {
        cplx acc(0.0);
        for (int k = -kmax_; k <= kmax_; ++k) acc += coeff(k) * std::polar(1.0, 2.0 * std::numbers::pi * k * s / period_);
        return acc.real();
    }

    bool is_real(double tol = 1e-12) const {
        if (std::abs(coeff(0).imag()) > tol) return false;
        for (int k = 1; k <= kmax_; ++k)
            if (std::abs(coeff(k) - std::conj(coeff(-k))) > tol) return false;
        return true;
    }

    /// Largest |k| with a nonzero coefficient (0 for the zero state).
    int bandwidth() const {
        for (int k = kmax_; k > 0; --k)
            if (coeff(k) != cplx(0.0) || coeff(-k) != cplx(0.0)) return k;
        return 0;
    }

    FourierState resized(int kmax) const {
        FourierState a(period_, order_, kmax);
        for (int k = -std::min(kmax, kmax_); k <= std::min(kmax, kmax_); ++k) a.coeff_ref(k) = coeff(k);
        return a;
    }

    /// Modes with |k| > n.
    FourierState tail(int n) const {
        FourierState a = *this;
        for (int k = -std::min(n, kmax_); k <= std::min(n, kmax_); ++k) a.coeff_ref(k) = 0.0;
        return a;
    }

    FourierState operator+(const FourierState& o) const { return combine(o, 1.0); }
    FourierState operator-(const FourierState& o) const { return combine(o, -1.0); }
    friend FourierState operator*(double s, FourierState a) {
        for (auto& c : a.coeffs_) c *= s;
        return a;
    }

    double max_abs_diff(const FourierState& o) const {
        double m = 0.0;
        for (int k = -std::max(kmax_, o.kmax_); k <= std::max(kmax_, o.kmax_); ++k)
            m = std::max(m, std::abs(coeff(k) - o.coeff(k)));
        return m;
    }

    void check_compatible(const FourierState& o) const {
        if (period_ != o.period_ || order_ != o.order_)
            throw Error(ErrorKind::InvalidArgument, "Fourier states live in different spaces");
    }

private:
    std::size_t idx(int k) const { return static_cast<std::size_t>(k + kmax_); }

    FourierState combine(const FourierState& o, double sign) const {
        check_compatible(o);
        FourierState a(period_, order_, std::max(kmax_, o.kmax_));
        for (int k = -a.kmax_; k <= a.kmax_; ++k) a.coeff_ref(k) = coeff(k) + sign * o.coeff(k);
        return a;
    }

    double period_;
    int order_;
    int kmax_;
    std::vector<cplx> coeffs_;  // a_{-kmax}, ..., a_{kmax}
};

inline nlohmann::json to_json(const FourierState& a) {
    nlohmann::json cs = nlohmann::json::array();
    for (int k = -a.kmax(); k <= a.kmax(); ++k)
        cs.push_back({{"k", k}, {"re", a.coeff(k).real()}, {"im", a.coeff(k).imag()}});
    return {{"period", a.period()}, {"order", a.order()}, {"coeffs", cs}};
}

inline FourierState fourier_from_json(const nlohmann::json& j) {
    int kmax = 0;
    for (const auto& c : j.at("coeffs")) kmax = std::max(kmax, std::abs(c.at("k").get<int>()));
    FourierState a(j.at("period").get<double>(), j.at("order").get<int>(), kmax);
    for (const auto& c : j.at("coeffs"))
        a.coeff_ref(c.at("k").get<int>()) = cplx(c.at("re").get<double>(), c.at("im").get<double>());
    return a;
}

enum class Bandwidth { Exact, Truncate };

/// Coefficients of the pointwise product, kept for |k| ≤ out_kmax. With
/// Bandwidth::Exact the product must fit.
inline FourierState multiply(const FourierState& a, const FourierState& b, int out_kmax,
                             Bandwidth mode = Bandwidth::Truncate) {
    a.check_compatible(b);
    if (mode == Bandwidth::Exact && a.bandwidth() + b.bandwidth() > out_kmax)
        throw Error(ErrorKind::BandwidthOverflow, "product bandwidth exceeds the output band");
    FourierState c(a.period(), a.order(), out_kmax);
    const int ka = a.bandwidth(), kb = b.bandwidth();
    for (int i = -ka; i <= ka; ++i) {
        const cplx ai = a.coeff(i);
        if (ai == cplx(0.0)) continue;
        for (int j = -kb; j <= kb; ++j) {
            const int k = i + j;
            if (std::abs(k) <= out_kmax) c.coeff_ref(k) += ai * b.coeff(j);
        }
    }
    return c;
}

/// a^3 by double convolution; exact on the band 3·kmax(a).
inline FourierState cubic_pointwise(const FourierState& a) {
    const FourierState sq = multiply(a, a, 2 * a.kmax(), Bandwidth::Exact);
    return multiply(sq, a, 3 * a.kmax(), Bandwidth::Exact);
}

/// a^3 kept for |k| ≤ out_kmax; Bandwidth::Exact rejects a lossy result.
inline FourierState cubic_pointwise(const FourierState& a, int out_kmax, Bandwidth mode) {
    if (mode == Bandwidth::Exact && 3 * a.bandwidth() > out_kmax)
        throw Error(ErrorKind::BandwidthOverflow, "cube bandwidth exceeds the output band");
    const FourierState sq = multiply(a, a, std::min(2 * a.kmax(), out_kmax + a.kmax()));
    return multiply(sq, a, out_kmax);
}

/// Translation (T^m a)(s) = a(s + m): a_k ↦ a_k e^{2πikm/period}. For an
/// integral period the phase is reduced mod period first, so a full turn is
/// the identity bit for bit.
inline FourierState shift(const FourierState& a, int steps = 1) {
    FourierState out = a;
    const double p = a.period();
    const bool integral = p == std::round(p);
    for (int k = -a.kmax(); k <= a.kmax(); ++k) {
        cplx phase;
        if (integral) {
            const long per = std::lround(p);
            const long j = ((long(k) * steps) % per + per) % per;
            phase = j == 0 ? cplx(1.0) : std::polar(1.0, 2.0 * std::numbers::pi * double(j) / double(per));
        } else {
            phase = std::polar(1.0, 2.0 * std::numbers::pi * k * steps / p);
        }
        out.coeff_ref(k) = a.coeff(k) * phase;
    }
    return out;
}

/// Sobolev norm of the part of a^3 with |k| ≥ n + 1.
inline double sobolev_tail_bound(const FourierState& a, int n) { return cubic_pointwise(a).tail(n).sobolev_norm(); }

// Real Sobolev-orthonormal coordinates of a single block.
inline VectorXd to_real_coords(const FourierState& a) {
    VectorXd v(2 * a.kmax() + 1);
    v(0) = a.coeff(0).real() * std::sqrt(a.weight(0));
    for (int k = 1; k <= a.kmax(); ++k) {
        const double s = std::sqrt(2.0 * a.weight(k));
        v(2 * k - 1) = s * a.coeff(k).real();
        v(2 * k) = -s * a.coeff(k).imag();
    }
    return v;
}

inline FourierState from_real_coords(const VectorXd& v, double period, int order) {
    if (v.size() % 2 == 0) throw Error(ErrorKind::RankMismatch, "block coordinates have odd length 2kmax+1");
    const int kmax = static_cast<int>(v.size() / 2);
    FourierState a(period, order, kmax);
    a.set(0, v(0) / std::sqrt(a.weight(0)));
    for (int k = 1; k <= kmax; ++k) a.set(k, cplx(v(2 * k - 1), -v(2 * k)) / std::sqrt(2.0 * a.weight(k)));
    return a;
}

// ---------------------------------------------------------------------------
// Sampling balls

struct BallSampler {
    int count = 1000;
    unsigned seed = 1;
    bool on_sphere = false;
};

/// Seeded points uniform in (or on the boundary of) the radius-r ball of w.
inline std::vector<VectorXd> sample_ball(const Subspace& w, double r, const BallSampler& s) {
    std::vector<VectorXd> out;
    const int d = w.dim();
    if (d == 0) {
        out.assign(static_cast<std::size_t>(std::max(s.count, 0)), VectorXd::Zero(w.ambient_dim()));
        return out;
    }
    std::mt19937_64 gen(s.seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    out.reserve(static_cast<std::size_t>(s.count));
    while (static_cast<int>(out.size()) < s.count) {
        VectorXd z(d);
        for (int i = 0; i < d; ++i) z(i) = nd(gen);
        if (z.norm() < 1e-12) continue;
        const double rad = s.on_sphere ? r : r * std::pow(ud(gen), 1.0 / d);
        out.push_back(w.frame() * (rad * z.normalized()));
    }
    return out;
}

struct TailOrder {
    int n = 0;
    double sup_tail = 0.0;         // over the selection samples
    double validation_sup = 0.0;   // over fresh samples
};

/// Smallest n with sampled sup over the Sobolev r-ball (band kmax) of the
/// tail bound below eps, validated on `validation` fresh samples.
inline TailOrder select_tail_order(double r, double eps, int kmax, int order = 1, double period = 1.0,
                                   int count = 200, int validation = 100, unsigned seed = 1) {
    const int d = 2 * kmax + 1;
    const Subspace full = Subspace::leading(d, d);
    const auto tails = [&](const std::vector<VectorXd>& pts, int n) {
        double m = 0.0;
        for (const auto& p : pts) m = std::max(m, sobolev_tail_bound(from_real_coords(p, period, order), n));
        return m;
    };
    const auto pts = sample_ball(full, r, {count, seed, false});
    const auto fresh = sample_ball(full, r, {validation, seed + 7919, false});
    for (int n = 0; n <= 3 * kmax; ++n) {
        const double t = tails(pts, n);
        if (t < eps) return {n, t, tails(fresh, n)};
    }
    return {3 * kmax, 0.0, 0.0};
}

// ---------------------------------------------------------------------------
// The block Sobolev model

struct SobolevModel {
    int blocks = 2;
    int order = 1;
    int kmax = 8;
    double period = 1.0;

    int block_dim() const { return 2 * kmax + 1; }
    int dim() const { return blocks * block_dim(); }

    std::vector<FourierState> split(const VectorXd& v) const {
        if (v.size() != dim()) throw Error(ErrorKind::RankMismatch, "vector does not match the block model");
        std::vector<FourierState> out;
        for (int b = 0; b < blocks; ++b) out.push_back(from_real_coords(v.segment(b * block_dim(), block_dim()), period, order));
        return out;
    }

    VectorXd join(const std::vector<FourierState>& parts) const {
        VectorXd v(dim());
        for (int b = 0; b < blocks; ++b) v.segment(b * block_dim(), block_dim()) = to_real_coords(parts[static_cast<std::size_t>(b)].resized(kmax));
        return v;
    }

    /// (T a)_j = a_{j-1}, cyclically in the block index.
    LinearMap block_shift() const {
        MatrixXd t = MatrixXd::Zero(dim(), dim());
        const int d = block_dim();
        for (int b = 0; b < blocks; ++b)
            t.block(b * d, ((b + blocks - 1) % blocks) * d, d, d) = MatrixXd::Identity(d, d);
        return LinearMap(t);
    }

    /// Coordinates with |k| ≤ n in every block.
    Subspace truncation(int n) const {
        if (n < 0 || n > kmax) throw Error(ErrorKind::InvalidArgument, "truncation order outside the model band");
        std::vector<int> idx;
        for (int b = 0; b < blocks; ++b)
            for (int i = 0; i < 2 * n + 1; ++i) idx.push_back(b * block_dim() + i);
        return Subspace::coordinate(dim(), idx);
    }

    /// pr(a_{j-1}^3) blockwise, cut back to the model band.
    VectorXd cube_shifted(const VectorXd& v) const {
        const auto parts = split(v);
        std::vector<FourierState> out;
        for (int b = 0; b < blocks; ++b)
            out.push_back(cubic_pointwise(parts[static_cast<std::size_t>((b + blocks - 1) % blocks)], kmax, Bandwidth::Truncate));
        return join(out);
    }

    /// a ↦ a + pr(T(a)^3) (or the identity when with_c is false).
    ProperNonlinearMap map(bool with_c = true) const {
        const SobolevModel m = *this;
        ProperNonlinearMap f;
        f.name = "sobolev";
        f.params = {{"blocks", blocks}, {"order", order}, {"kmax", kmax}, {"period", period}, {"with_c", with_c}};
        f.dim_source = f.dim_target = dim();
        f.linear_part = LinearMap::identity(dim());
        if (!with_c) {
            f.eval = [](const VectorXd& v) { return v; };
            f.jac = [n = dim()](const VectorXd&) { return MatrixXd(MatrixXd::Identity(n, n)); };
            return f;
        }
        f.eval = [m](const VectorXd& v) { return VectorXd(v + m.cube_shifted(v)); };
        f.jac = [m](const VectorXd& v) { return MatrixXd(MatrixXd::Identity(m.dim(), m.dim()) + 3.0 * m.square_multiplier(v)); };
        return f;
    }

    /// The block matrix of u ↦ pr(T(a)^2 · T(u)).
    MatrixXd square_multiplier(const VectorXd& v) const {
        const auto parts = split(v);
        const int d = block_dim();
        MatrixXd out = MatrixXd::Zero(dim(), dim());
        for (int b = 0; b < blocks; ++b) {
            const int src = (b + blocks - 1) % blocks;
            const FourierState& a = parts[static_cast<std::size_t>(src)];
            const FourierState sq = multiply(a, a, 2 * kmax);
            for (int i = 0; i < d; ++i) {
                const FourierState e = from_real_coords(VectorXd::Unit(d, i), period, order);
                out.block(b * d, src * d + i, d, 1) = to_real_coords(multiply(sq, e, kmax));
            }
        }
        return out;
    }
};

/// Two-phase homotopy from the block shift T (t = 0) to a ↦ a + pr(T(a)^3)
/// (t = 1), the block analogue of cyclic_involution_homotopy:
///   t >= 1/2, tau = 2t - 1:   tau a_j + pr(a_{j-1}^3)
///   t <= 1/2, sigma = 2t:     sigma pr(a_{j-1}^3) + (1 - sigma) a_{j-1}
inline HomotopyFamily sobolev_involution_homotopy(const SobolevModel& m) {
    const MatrixXd t = m.block_shift().matrix();
    return [m, t](double s, const VectorXd& a) {
        const VectorXd cube = m.cube_shifted(a);
        if (s >= 0.5) return VectorXd((2.0 * s - 1.0) * a + cube);
        return VectorXd(2.0 * s * cube + (1.0 - 2.0 * s) * (t * a));
    };
}

/// Sobolev radius containing every zero of sobolev_involution_homotopy.
/// Pairing tau a_j + pr(a_{j-1}^3) = 0 with a_{j-1} in L^2 and Hölder on
/// the unit circle give |a_j|_{L^4} ≤ 1 for every block; on the band
/// |k| ≤ kmax the Sobolev norm is at most √w_kmax times the L^2 norm.
inline double sobolev_zero_bound(const SobolevModel& m) {
    const double w = FourierState(m.period, m.order, m.kmax).weight(m.kmax);
    return std::sqrt(m.blocks * w);
}

// ---------------------------------------------------------------------------
// Stage construction

struct RadiusSearch {
    double s0 = 1.0;            // s_i = s0 (i + 1)
    int boundary_samples = 256;
    unsigned seed = 1;
    double cap_factor = 1024.0; // r_i ≤ cap_factor · s_i
};

/// min ‖F_i(m)‖ over sampled m on the radius-r sphere of stage.W_source.
inline std::pair<double, VectorXd> ball_condition_margin(const ApproximationStage& stage, double r, int samples,
                                                         unsigned seed) {
    const ProperNonlinearMap fi = stage.restricted();
    const Subspace local = Subspace::leading(stage.dim(), stage.dim());
    double best = std::numeric_limits<double>::infinity();
    VectorXd arg;
    for (const auto& z : sample_ball(local, r, {samples, seed, true})) {
        const double v = fi(z).norm();
        if (v < best) {
            best = v;
            arg = stage.W_source.frame() * z;
        }
    }
    for (const auto& z : sphere_samples(stage.dim(), r, 0, seed)) {
        const double v = fi(z).norm();
        if (v < best) {
            best = v;
            arg = stage.W_source.frame() * z;
        }
    }
    return {best, arg};
}

/// s_i = s0 (i+1); r_i found by doubling from max(s_i, √2 r_{i-1}) until the
/// sampled ball condition holds, so that r_{i+1} > √2 r_i.
inline void assign_radii(std::vector<ApproximationStage>& stages, const RadiusSearch& o = {}) {
    double prev = 0.0;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        auto& st = stages[i];
        st.s = o.s0 * double(i + 1);
        double r = std::max(st.s, std::sqrt(2.0) * prev * (1.0 + 1e-9));
        for (;;) {
            const auto [margin, arg] = ball_condition_margin(st, r, o.boundary_samples, o.seed + unsigned(i));
            if (margin >= st.s) break;
            r *= 2.0;
            if (r > o.cap_factor * st.s)
                throw Error(ErrorKind::BallConditionFail,
                            "stage " + std::to_string(st.index) + ": |F_i(m)| < s_i at a boundary sample of norm " +
                                std::to_string(arg.norm()));
        }
        st.r = r;
        prev = r;
    }
}

struct SobolevStageOptions {
    int kmax = 8;
    bool with_c = true;
    RadiusSearch radii;
};

/// Stages W'_i = truncation(n_i) of the kmax block model with F_i = pr_i ∘ F
/// and l_i = identity.
inline std::vector<ApproximationStage> sobolev_model_stages(int blocks, int order, std::span<const int> n_sequence,
                                                            const SobolevStageOptions& o = {}) {
    for (std::size_t i = 1; i < n_sequence.size(); ++i)
        if (n_sequence[i] <= n_sequence[i - 1])
            throw Error(ErrorKind::InvalidArgument, "truncation orders must increase");
    const SobolevModel model{blocks, order, o.kmax, 1.0};
    const ProperNonlinearMap f = model.map(o.with_c);
    std::vector<ApproximationStage> stages;
    for (std::size_t i = 0; i < n_sequence.size(); ++i) {
        ApproximationStage st;
        st.index = static_cast<int>(i);
        st.W_source = st.W_target = model.truncation(n_sequence[i]);
        st.F = f;
        st.l = LinearMap::identity(model.dim());
        stages.push_back(std::move(st));
    }
    assign_radii(stages, o.radii);
    return stages;
}

/// The cyclic cubic map on the coordinates `window` of R^n (identity elsewhere):
/// out_{w_j} = a_{w_j} + a_{w_{j-1}}^3 with w_{-1} = w_last.
inline ProperNonlinearMap embedded_cyclic_map(int n, std::vector<int> window, std::string name) {
    ProperNonlinearMap f;
    f.name = std::move(name);
    f.params = {{"ambient", n}, {"window", window}};
    f.dim_source = f.dim_target = n;
    f.linear_part = LinearMap::identity(n);
    f.eval = [window](const VectorXd& a) {
        VectorXd out = a;
        const std::size_t w = window.size();
        for (std::size_t j = 0; j < w; ++j) out(window[j]) += std::pow(a(window[(j + w - 1) % w]), 3);
        return out;
    };
    f.jac = [window, n](const VectorXd& a) {
        MatrixXd m = MatrixXd::Identity(n, n);
        const std::size_t w = window.size();
        for (std::size_t j = 0; j < w; ++j) {
            const int k = window[(j + w - 1) % w];
            m(window[j], k) += 3.0 * a(k) * a(k);
        }
        return m;
    };
    return f;
}

/// Window stages on R^{2 lmax + 1} (index j ∈ [-lmax, lmax] at position
/// j + lmax): stage l is the window [-l, l] with the wrapped cubic shift.
inline std::vector<ApproximationStage> window_model_stages(int lmax, std::span<const int> ls,
                                                           const RadiusSearch& radii = {}) {
    const int n = 2 * lmax + 1;
    std::vector<ApproximationStage> stages;
    for (std::size_t i = 0; i < ls.size(); ++i) {
        const int l = ls[i];
        if (l < 0 || l > lmax || (i > 0 && l <= ls[i - 1]))
            throw Error(ErrorKind::InvalidArgument, "window sizes must increase within lmax");
        std::vector<int> idx;
        for (int j = -l; j <= l; ++j) idx.push_back(j + lmax);
        ApproximationStage st;
        st.index = static_cast<int>(i);
        st.W_source = st.W_target = Subspace::coordinate(n, idx);
        st.F = embedded_cyclic_map(n, idx, "zwindow");
        st.l = LinearMap::identity(n);
        stages.push_back(std::move(st));
    }
    assign_radii(stages, radii);
    return stages;
}

/// Stages on R^{lmax}: stage l is the cyclic cubic map on the first l coordinates.
inline std::vector<ApproximationStage> cyclic_model_stages(std::span<const int> ls, const RadiusSearch& radii = {}) {
    const int n = ls.empty() ? 0 : ls.back();
    std::vector<ApproximationStage> stages;
    for (std::size_t i = 0; i < ls.size(); ++i) {
        if (ls[i] < 1 || (i > 0 && ls[i] <= ls[i - 1]))
            throw Error(ErrorKind::InvalidArgument, "cyclic lengths must increase");
        std::vector<int> idx;
        for (int j = 0; j < ls[i]; ++j) idx.push_back(j);
        ApproximationStage st;
        st.index = static_cast<int>(i);
        st.W_source = st.W_target = Subspace::coordinate(n, idx);
        st.F = embedded_cyclic_map(n, idx, "cyclic");
        st.l = LinearMap::identity(n);
        stages.push_back(std::move(st));
    }
    assign_radii(stages, radii);
    return stages;
}

/// Degree settings for sobolev_model_stages: each stage is evaluated in its
/// own band model, on a ball containing every homotopy zero.
inline StabilizationOptions sobolev_stabilization_options(int blocks, int order,
                                                          DegreeMethod method = DegreeMethod::Homotopy) {
    const auto band = [blocks, order](const ApproximationStage& st) {
        return SobolevModel{blocks, order, (st.dim() / blocks - 1) / 2, 1.0};
    };
    StabilizationOptions o;
    o.method = [method](const ApproximationStage&) { return method; };
    o.stage_map = [band](const ApproximationStage& st) { return band(st).map(); };
    o.radius = [band](const ApproximationStage& st) { return 1.25 * sobolev_zero_bound(band(st)) + 1.0; };
    o.homotopy = [band](const ApproximationStage& st) {
        const SobolevModel m = band(st);
        return HomotopyPlan{sobolev_involution_homotopy(m), m.block_shift()};
    };
    return o;
}

/// Degree settings for cyclic and window stages: in stage coordinates each
/// stage is the cyclic cubic map, homotoped to the cyclic permutation. Its
/// zeros have coordinates of modulus at most 1.
inline StabilizationOptions cyclic_stabilization_options(DegreeMethod method = DegreeMethod::Homotopy) {
    StabilizationOptions o;
    o.method = [method](const ApproximationStage&) { return method; };
    o.radius = [](const ApproximationStage& st) { return std::sqrt(double(st.dim())) + 1.0; };
    o.homotopy = [](const ApproximationStage& st) {
        return HomotopyPlan{cyclic_involution_homotopy(st.dim()), LinearMap(cyclic_permutation(st.dim()))};
    };
    return o;
}

inline nlohmann::json to_json(const ApproximationStage& s) {
    return {{"index", s.index},
            {"W_source", to_json(s.W_source)},
            {"W_target", to_json(s.W_target)},
            {"F", s.F.descriptor()},
            {"l", to_json(s.l)},
            {"r", s.r},
            {"s", s.s}};
}

// ---------------------------------------------------------------------------
// δ-net subspaces and projection errors

struct NetSubspace {
    Subspace W;
    std::vector<VectorXd> net;  // net points w_i in the image of c
    double coverage = 0.0;      // max over samples of dist(c(m), net)
    std::size_t samples = 0;
};

/// W'_0 = span(l^{-1}(w_i)) for a greedy farthest-point δ0-net {w_i} of the
/// sampled image c(D_r).
inline NetSubspace build_net_subspace(const ProperNonlinearMap& f, double r, double delta0, const BallSampler& sampler,
                                      std::size_t cap = 10000) {
    if (!(delta0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "net radius must be positive");
    const LinearMap& l = f.linear_part;
    if (!l.invertible()) throw Error(ErrorKind::SingularMap, "linear part is not invertible");
    const auto pts = sample_ball(Subspace::leading(f.dim_source, f.dim_source), r, sampler);
    std::vector<VectorXd> img;
    img.reserve(pts.size());
    for (const auto& m : pts) img.push_back(f.nonlinear_part(m));

    NetSubspace out;
    out.samples = img.size();
    std::vector<double> d(img.size(), std::numeric_limits<double>::infinity());
    std::size_t next = 0;
    while (!img.empty()) {
        out.net.push_back(img[next]);
        if (out.net.size() > cap) throw Error(ErrorKind::NetExplosion, "δ-net exceeded the size cap");
        double far = -1.0;
        for (std::size_t i = 0; i < img.size(); ++i) {
            d[i] = std::min(d[i], (img[i] - out.net.back()).norm());
            if (d[i] > far) {
                far = d[i];
                next = i;
            }
        }
        out.coverage = far;
        if (far <= delta0) break;
    }
    MatrixXd cols(f.dim_source, static_cast<Eigen::Index>(out.net.size()));
    const MatrixXd linv = l.matrix().inverse();
    for (std::size_t i = 0; i < out.net.size(); ++i) cols.col(static_cast<Eigen::Index>(i)) = linv * out.net[i];
    out.W = Subspace::span(cols);
    return out;
}

/// sup over the samples of ‖F(m) − pr_{l(W)} F(m)‖.
inline double projection_error(const ProperNonlinearMap& f, const Subspace& w, std::span<const VectorXd> samples) {
    const Subspace lw = w.image(f.linear_part.matrix());
    double m = 0.0;
    for (const auto& x : samples) {
        const VectorXd y = f(x);
        m = std::max(m, (y - lw.project(y)).norm());
    }
    return m;
}

inline double projection_error(const ProperNonlinearMap& f, const Subspace& w, double r, const BallSampler& s) {
    const auto pts = sample_ball(w, r, s);
    return projection_error(f, w, std::span<const VectorXd>(pts));
}

// ---------------------------------------------------------------------------
// Finite-approximation checks

struct FinApproProbe {
    int samples = 64;
    unsigned seed = 1;
    int boundary_samples = 256;
    double monotone_slack = 1e-12;
    double unitarity_eps = 1e-6;
    double norm_bound = 10.0;  // C in C^{-1}|l| ≤ |l_i| ≤ C|l|
};

struct FinApproReport {
    std::vector<double> density;                  // (1) RMS residual of the ambient basis
    bool density_ok = false;
    std::vector<double> ball_margin;              // (2) min |F_i| − s_i on the r_i sphere
    bool ball_ok = false;
    std::vector<std::vector<double>> convergence; // (3) row i0: sup |F − F_i| on D'_{r_i0} ∩ W'_i0, i ≥ i0
    bool convergence_ok = false;
    std::vector<double> unitarity_tail;           // (4) |(l − l̄)| off W'_i
    std::vector<std::vector<double>> linear_gap;  // (4) row i0: |l − l_i| on W'_i0, i ≥ i0
    double norm_ratio = 1.0;                      // (4) max_i max(|l_i|/|l|, |l|/|l_i|)
    bool unitarity_ok = false;

    bool passed() const { return density_ok && ball_ok && convergence_ok && unitarity_ok; }
};

namespace detail {

inline bool non_increasing(const std::vector<double>& v, double slack) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1] + slack * std::max(1.0, std::abs(v[i - 1]))) return false;
    return true;
}

// F_i(m) = pr_{W_i} F_stage(m) as an ambient vector.
inline VectorXd stage_value(const ApproximationStage& st, const VectorXd& m) {
    return st.W_target.project(st.F(m));
}

}  // namespace detail

inline FinApproReport check_fin_appro(std::span<const ApproximationStage> stages, const ProperNonlinearMap& f,
                                      const FinApproProbe& probe = {}) {
    if (!stages_nested(stages)) throw Error(ErrorKind::NotNested, "stages are not nested");
    FinApproReport rep;
    const std::size_t k = stages.size();
    const int n = f.dim_source;

    for (const auto& st : stages) rep.density.push_back(std::sqrt(std::max(0.0, 1.0 - double(st.dim()) / n)));
    rep.density_ok = k > 0;
    for (std::size_t i = 1; i < k; ++i)
        if (!(rep.density[i] < rep.density[i - 1])) rep.density_ok = false;

    rep.ball_ok = true;
    for (std::size_t i = 0; i < k; ++i) {
        const auto [m, arg] = ball_condition_margin(stages[i], stages[i].r, probe.boundary_samples, probe.seed + unsigned(i));
        rep.ball_margin.push_back(m - stages[i].s);
        if (m < stages[i].s) rep.ball_ok = false;
    }

    rep.convergence_ok = true;
    rep.unitarity_ok = true;
    const LinearMap& l = f.linear_part;
    for (std::size_t i0 = 0; i0 < k; ++i0) {
        const auto pts = sample_ball(stages[i0].W_source, stages[i0].r, {probe.samples, probe.seed + 1000u + unsigned(i0), false});
        std::vector<double> row, gap;
        for (std::size_t i = i0; i < k; ++i) {
            double sup = 0.0;
            for (const auto& m : pts) sup = std::max(sup, (f(m) - detail::stage_value(stages[i], m)).norm());
            row.push_back(sup);
            gap.push_back(operator_norm((l.matrix() - stages[i].l.matrix()) * stages[i0].W_source.frame()));
        }
        if (!detail::non_increasing(row, probe.monotone_slack)) rep.convergence_ok = false;
        if (!detail::non_increasing(gap, probe.monotone_slack)) rep.unitarity_ok = false;
        rep.convergence.push_back(std::move(row));
        rep.linear_gap.push_back(std::move(gap));
    }

    std::vector<Subspace> frames;
    for (const auto& st : stages) frames.push_back(st.W_source);
    const auto prof = asymptotic_unitarity_profile(l, frames, probe.unitarity_eps);
    rep.unitarity_tail = prof.tail_norms;
    if (!prof.index) rep.unitarity_ok = false;
    const double ln = l.norm();
    for (const auto& st : stages) {
        const double li = operator_norm(st.l.matrix() * st.W_source.frame());
        const double ratio = li > 0.0 && ln > 0.0 ? std::max(li / ln, ln / li) : std::numeric_limits<double>::infinity();
        rep.norm_ratio = std::max(rep.norm_ratio, ratio);
    }
    if (rep.norm_ratio > probe.norm_bound) rep.unitarity_ok = false;
    return rep;
}

/// Per stage, sup over sampled m in the ambient ball D'_{r_i} of |(1 − pr_i) c(m)|.
inline std::vector<double> strong_tail_profile(std::span<const ApproximationStage> stages,
                                               const ProperNonlinearMap& f, const BallSampler& s) {
    std::vector<double> out;
    const Subspace all = Subspace::leading(f.dim_source, f.dim_source);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        BallSampler si = s;
        si.seed = s.seed + unsigned(i);
        double sup = 0.0;
        for (const auto& m : sample_ball(all, stages[i].r, si)) {
            const VectorXd c = f.nonlinear_part(m);
            sup = std::max(sup, (c - stages[i].W_target.project(c)).norm());
        }
        out.push_back(sup);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Group actions and equivariance

struct ShiftAction {
    enum class Group { Cyclic, Window };
    Group group = Group::Cyclic;
    int order = 0;  // l for the cyclic group, 0 for the translation window
    LinearMap generator;

    /// The block permutation of a SobolevModel (order = blocks).
    static ShiftAction cyclic_blocks(const SobolevModel& m) { return {Group::Cyclic, m.blocks, m.block_shift()}; }

    /// Cyclic permutation of the coordinates of R^l.
    static ShiftAction cyclic(int l) { return {Group::Cyclic, l, LinearMap(cyclic_permutation(l))}; }

    /// Translation a_j ↦ a_{j-1} on a window R^n (content moves up by one;
    /// the top coordinate leaves the window).
    static ShiftAction translation(int n) {
        MatrixXd t = MatrixXd::Zero(n, n);
        for (int j = 1; j < n; ++j) t(j, j - 1) = 1.0;
        return {Group::Window, 0, LinearMap(t)};
    }
};

/// {m ∈ W : γ m ∈ W}.
inline Subspace shift_overlap(const Subspace& w, const LinearMap& gamma) {
    const MatrixXd f = w.frame();
    if (f.cols() == 0) return w;
    const MatrixXd gf = gamma.matrix() * f;
    const MatrixXd a = gf - f * (f.transpose() * gf);
    Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    while (rank < sv.size() && sv(rank) > 1e-10) ++rank;
    const MatrixXd kernel = svd.matrixV().rightCols(f.cols() - rank);
    return Subspace::span(f * kernel);
}

/// Row entry i − i0: sup over m ∈ D'_{r_{i0}} ∩ W'_{i0} ∩ γ^{-1}(W'_{i0}) of
/// |γ F_i(m) − F_i(γ m)| for stages i ≥ i0.
inline std::vector<double> equivariance_defect(std::span<const ApproximationStage> stages, const ShiftAction& action,
                                               const BallSampler& s, std::size_t i0 = 0) {
    if (i0 >= stages.size()) throw Error(ErrorKind::InvalidArgument, "reference stage out of range");
    const Subspace overlap = shift_overlap(stages[i0].W_source, action.generator);
    if (overlap.dim() == 0) throw Error(ErrorKind::EmptyOverlap, "W' ∩ γ^{-1}(W') is zero");
    const auto pts = sample_ball(overlap, stages[i0].r, s);
    std::vector<double> out;
    for (std::size_t i = i0; i < stages.size(); ++i) {
        double sup = 0.0;
        for (const auto& m : pts) {
            const VectorXd lhs = action.generator(detail::stage_value(stages[i], m));
            const VectorXd rhs = detail::stage_value(stages[i], action.generator(m));
            sup = std::max(sup, (lhs - rhs).norm());
        }
        out.push_back(sup);
    }
    return out;
}

}  // namespace bottdeg
