#pragma once

// Finite-dimensional linear algebra substrate: orthonormal frames, polar
// unitaries, the one-sided/two-sided subspace deviations and the
// asymptotic-unitarity diagnostics built on top of them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bottdeg/error.hpp"

namespace bottdeg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kOrthonormalTol = 1e-10;
inline constexpr double kSingularThreshold = 1e-12;

inline double operator_norm(const MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<MatrixXd> svd(m);
    return svd.singularValues()(0);
}

inline double smallest_singular_value(const MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<MatrixXd> svd(m);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

/// An orthonormal column frame spanning a subspace of R^N. The zero subspace
/// is represented by an N x 0 frame.
class Subspace {
public:
    explicit Subspace(int ambient_dim = 0) : ambient_(ambient_dim), frame_(ambient_dim, 0) {}

    /// Wraps an already orthonormal frame; throws InvalidArgument otherwise.
    static Subspace from_frame(MatrixXd frame, double tol = kOrthonormalTol) {
        const auto k = frame.cols();
        if (k > frame.rows())
            throw Error(ErrorKind::InvalidArgument, "frame has more columns than rows");
        if (k > 0) {
            const double err =
                (frame.transpose() * frame - MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
            if (!(err <= tol))
                throw Error(ErrorKind::InvalidArgument,
                            "frame is not orthonormal (defect " + std::to_string(err) + ")");
        }
        Subspace s(static_cast<int>(frame.rows()));
        s.frame_ = std::move(frame);
        return s;
    }

    /// Span of the given columns. Directions with singular value below
    /// rank_tol * max(1, sigma_max) are dropped.
    static Subspace span(const MatrixXd& vectors, double rank_tol = 1e-10) {
        const int n = static_cast<int>(vectors.rows());
        if (vectors.cols() == 0) return Subspace(n);
        Eigen::JacobiSVD<MatrixXd> svd(vectors, Eigen::ComputeThinU);
        const auto& sv = svd.singularValues();
        const double cut = rank_tol * std::max(1.0, sv.size() ? sv(0) : 0.0);
        int rank = 0;
        while (rank < sv.size() && sv(rank) > cut) ++rank;
        Subspace s(n);
        s.frame_ = svd.matrixU().leftCols(rank);
        return s;
    }

    /// span(e_i : i in indices)
    static Subspace coordinate(int ambient_dim, std::span<const int> indices) {
        MatrixXd f = MatrixXd::Zero(ambient_dim, static_cast<Eigen::Index>(indices.size()));
        for (std::size_t j = 0; j < indices.size(); ++j) {
            if (indices[j] < 0 || indices[j] >= ambient_dim)
                throw Error(ErrorKind::InvalidArgument, "coordinate index out of range");
            f(indices[j], static_cast<Eigen::Index>(j)) = 1.0;
        }
        return from_frame(std::move(f));
    }

    /// span(e_0, ..., e_{k-1})
    static Subspace leading(int ambient_dim, int k) {
        std::vector<int> idx(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
        return coordinate(ambient_dim, idx);
    }

    int ambient_dim() const { return ambient_; }
    int dim() const { return static_cast<int>(frame_.cols()); }
    const MatrixXd& frame() const { return frame_; }

    MatrixXd projector() const { return frame_ * frame_.transpose(); }
    VectorXd project(const VectorXd& v) const { return frame_ * (frame_.transpose() * v); }

    Subspace orthogonal_complement() const {
        if (dim() == 0) return from_frame(MatrixXd::Identity(ambient_, ambient_));
        Eigen::HouseholderQR<MatrixXd> qr(frame_);
        MatrixXd q = qr.householderQ() * MatrixXd::Identity(ambient_, ambient_);
        Subspace s(ambient_);
        s.frame_ = q.rightCols(ambient_ - dim());
        return s;
    }

    /// Every frame vector of `other` lies in this span to `tol`.
    bool contains(const Subspace& other, double tol = 1e-8) const {
        if (other.ambient_ != ambient_) return false;
        if (other.dim() == 0) return true;
        const MatrixXd resid = other.frame_ - frame_ * (frame_.transpose() * other.frame_);
        return resid.colwise().norm().maxCoeff() <= tol;
    }

    /// Image under a linear map of R^N.
    Subspace image(const MatrixXd& m) const { return span(m * frame_); }

private:
    int ambient_;
    MatrixXd frame_;
};

/// The span of `inner` inside `outer`: outer ∩ inner^⊥ (inner ⊂ outer).
inline Subspace relative_complement(const Subspace& outer, const Subspace& inner) {
    if (!outer.contains(inner, 1e-8))
        throw Error(ErrorKind::NotNested, "inner subspace is not contained in outer");
    const MatrixXd resid =
        outer.frame() - inner.frame() * (inner.frame().transpose() * outer.frame());
    Subspace s = Subspace::span(resid, 1e-8);
    if (s.dim() != outer.dim() - inner.dim())
        throw Error(ErrorKind::NotNested, "relative complement has unexpected dimension");
    return s;
}

/// Dense real matrix standing for l, l_i, l̄, projections. rows = target dim.
class LinearMap {
public:
    LinearMap() = default;
    explicit LinearMap(MatrixXd m) : m_(std::move(m)) {
        if (!m_.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite matrix entry");
    }
    static LinearMap identity(int n) { return LinearMap(MatrixXd::Identity(n, n)); }
    static LinearMap diagonal(const VectorXd& d) { return LinearMap(d.asDiagonal().toDenseMatrix()); }

    const MatrixXd& matrix() const { return m_; }
    int rows() const { return static_cast<int>(m_.rows()); }
    int cols() const { return static_cast<int>(m_.cols()); }
    bool square() const { return m_.rows() == m_.cols(); }
    VectorXd operator()(const VectorXd& v) const { return m_ * v; }

    double norm() const { return operator_norm(m_); }
    double min_singular_value() const { return smallest_singular_value(m_); }
    bool invertible() const { return square() && min_singular_value() > kSingularThreshold; }

private:
    MatrixXd m_;
};

/// l̄ = U V^T from L = U Σ V^T, so that L = l̄ · sqrt(L^T L).
inline LinearMap polar_unitary(const LinearMap& l) {
    if (!l.square()) throw Error(ErrorKind::SingularMap, "polar unitary needs a square map");
    if (l.rows() == 0) return l;
    Eigen::JacobiSVD<MatrixXd> svd(l.matrix(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(smin > kSingularThreshold))
        throw Error(ErrorKind::SingularMap,
                    "smallest singular value " + std::to_string(smin) + " below threshold");
    return LinearMap(svd.matrixU() * svd.matrixV().transpose());
}

namespace detail {
inline void check_pair(const Subspace& a, const Subspace& b) {
    if (a.ambient_dim() != b.ambient_dim())
        throw Error(ErrorKind::AmbientMismatch, "subspaces live in different ambient spaces");
    if (a.dim() == 0 || b.dim() == 0)
        throw Error(ErrorKind::ZeroSubspace, "distance between subspaces needs nonzero subspaces");
}
} // namespace detail

/// sup over unit v2 in V2 of inf over unit v1 in V1 of |v1 - v2|.
///
/// With θ the largest principal angle of V2 against V1 this is
/// sqrt(2 - 2 cos θ). It is evaluated through sin θ (the largest singular
/// value of the part of V2 orthogonal to V1) so that near-containment gives
/// a value at rounding level rather than sqrt(rounding level). Containment at
/// the `contains` tolerance returns exactly 0, so 0 ⇔ V2 ⊂ V1.
inline double dist_one_sided(const Subspace& v1, const Subspace& v2) {
    detail::check_pair(v1, v2);
    if (v1.contains(v2)) return 0.0;
    const MatrixXd resid = v2.frame() - v1.frame() * (v1.frame().transpose() * v2.frame());
    const double s = std::min(1.0, operator_norm(resid));
    const double c = std::sqrt(std::max(0.0, 1.0 - s * s));
    return std::sqrt(2.0 * s * s / (1.0 + c));
}

inline double dist(const Subspace& v1, const Subspace& v2) {
    return std::min(dist_one_sided(v1, v2), dist_one_sided(v2, v1));
}

struct UnitarityProfile {
    std::optional<std::size_t> index; // empty: no stage reached eps
    std::vector<double> tail_norms;   // |(L - l̄)|_{E_i^⊥}| per stage
    double eps = 0.0;
};

/// Smallest i with |(L - l̄) restricted to exhaustion[i]^⊥| < eps.
inline UnitarityProfile asymptotic_unitarity_profile(const LinearMap& l,
                                                     std::span<const Subspace> exhaustion,
                                                     double eps) {
    const LinearMap bar = polar_unitary(l);
    const MatrixXd defect = l.matrix() - bar.matrix();
    UnitarityProfile out;
    out.eps = eps;
    for (std::size_t i = 0; i < exhaustion.size(); ++i) {
        const Subspace& e = exhaustion[i];
        if (e.ambient_dim() != l.cols())
            throw Error(ErrorKind::AmbientMismatch, "exhaustion subspace has wrong ambient dim");
        if (i > 0 && !e.contains(exhaustion[i - 1]))
            throw Error(ErrorKind::NotNested, "exhaustion is not increasing");
        const Subspace perp = e.orthogonal_complement();
        const double n = perp.dim() == 0 ? 0.0 : operator_norm(defect * perp.frame());
        out.tail_norms.push_back(n);
        if (!out.index && n < eps) out.index = i;
    }
    return out;
}

/// d(V, (l̄^T l)(V)).
inline double lemma_dist_check(const LinearMap& l, const Subspace& v) {
    const LinearMap bar = polar_unitary(l);
    const MatrixXd p = bar.matrix().transpose() * l.matrix();
    return dist(v, v.image(p));
}

// JSON: {"rows": n, "cols": m, "data": [row-major]}
inline nlohmann::json matrix_to_json(const MatrixXd& m) {
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
        throw Error(ErrorKind::InvalidArgument, "matrix JSON has inconsistent shape");
    MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    return m;
}

inline nlohmann::json to_json(const LinearMap& l) { return matrix_to_json(l.matrix()); }
inline nlohmann::json to_json(const Subspace& s) { return matrix_to_json(s.frame()); }
inline Subspace subspace_from_json(const nlohmann::json& j) {
    return Subspace::from_frame(matrix_from_json(j));
}

} // namespace bottdeg
