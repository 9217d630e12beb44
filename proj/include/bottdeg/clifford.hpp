#pragma once

// Complex Clifford algebras Cl(R^n) with e_i^2 = +1.
//
// Basis blades are indexed by bitmasks: bit i set <=> generator e_i occurs.
// Generators are numbered 0..n-1 and a blade e_S is the product of its
// generators in ascending order. When a spectral coordinate is adjoined for
// the functional calculus it is always generator 0.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bottdeg/error.hpp"
#include "bottdeg/euclid.hpp"

namespace bottdeg {

using cplx = std::complex<double>;
using Eigen::MatrixXcd;

inline constexpr int kMaxDenseGenerators = 16;
inline constexpr int kMaxMatrixRepGenerators = 14;

class CliffordElement {
public:
    explicit CliffordElement(int n = 0) : n_(n) {
        if (n < 0 || n > kMaxDenseGenerators)
            throw Error(ErrorKind::RankTooLarge,
                        "dense storage supports at most 16 generators, got " + std::to_string(n));
        c_.assign(std::size_t{1} << n, cplx{0.0, 0.0});
    }

    static CliffordElement scalar(int n, cplx z) {
        CliffordElement a(n);
        a.c_[0] = z;
        return a;
    }
    static CliffordElement blade(int n, std::uint32_t mask, cplx z = 1.0) {
        CliffordElement a(n);
        a.at(mask) = z;
        return a;
    }
    static CliffordElement generator(int n, int i) {
        if (i < 0 || i >= n) throw Error(ErrorKind::InvalidArgument, "generator index out of range");
        return blade(n, std::uint32_t{1} << i);
    }
    /// Degree-one element sum_j v_j e_{offset+j}.
    static CliffordElement vector(int n, const VectorXd& v, int offset = 0) {
        if (offset < 0 || offset + v.size() > n)
            throw Error(ErrorKind::RankMismatch, "vector does not fit the generator range");
        CliffordElement a(n);
        for (Eigen::Index j = 0; j < v.size(); ++j)
            a.c_[std::size_t{1} << (offset + j)] = v(j);
        return a;
    }

    int n() const { return n_; }
    std::size_t size() const { return c_.size(); }
    const std::vector<cplx>& coeffs() const { return c_; }

    cplx coeff(std::uint32_t mask) const {
        if (mask >= c_.size()) throw Error(ErrorKind::InvalidArgument, "blade mask out of range");
        return c_[mask];
    }
    cplx& at(std::uint32_t mask) {
        if (mask >= c_.size()) throw Error(ErrorKind::InvalidArgument, "blade mask out of range");
        return c_[mask];
    }
    cplx operator[](std::uint32_t mask) const { return c_[mask]; }
    cplx& operator[](std::uint32_t mask) { return c_[mask]; }

    CliffordElement even_part() const { return graded_part(0); }
    CliffordElement odd_part() const { return graded_part(1); }

    /// (z e_S)^* = conj(z) e_S^rev, and e_S^rev = (-1)^{k(k-1)/2} e_S.
    CliffordElement adjoint() const {
        CliffordElement out(n_);
        for (std::uint32_t m = 0; m < c_.size(); ++m) {
            const int k = std::popcount(m);
            const double s = ((k * (k - 1) / 2) % 2 == 0) ? 1.0 : -1.0;
            out.c_[m] = s * std::conj(c_[m]);
        }
        return out;
    }

    CliffordElement& operator+=(const CliffordElement& b) {
        check_rank(b);
        for (std::size_t m = 0; m < c_.size(); ++m) c_[m] += b.c_[m];
        return *this;
    }
    CliffordElement& operator-=(const CliffordElement& b) {
        check_rank(b);
        for (std::size_t m = 0; m < c_.size(); ++m) c_[m] -= b.c_[m];
        return *this;
    }
    CliffordElement& operator*=(cplx z) {
        for (auto& v : c_) v *= z;
        return *this;
    }
    friend CliffordElement operator+(CliffordElement a, const CliffordElement& b) { return a += b; }
    friend CliffordElement operator-(CliffordElement a, const CliffordElement& b) { return a -= b; }
    friend CliffordElement operator*(cplx z, CliffordElement a) { return a *= z; }
    friend CliffordElement operator*(CliffordElement a, cplx z) { return a *= z; }

    /// Largest coefficient modulus; a basis-dependent norm used for exact comparisons.
    double max_abs() const {
        double m = 0.0;
        for (const auto& v : c_) m = std::max(m, std::abs(v));
        return m;
    }

    void check_rank(const CliffordElement& b) const {
        if (b.n_ != n_)
            throw Error(ErrorKind::RankMismatch, "Clifford elements have " + std::to_string(n_) +
                                                     " and " + std::to_string(b.n_) + " generators");
    }

private:
    CliffordElement graded_part(int parity) const {
        CliffordElement out(n_);
        for (std::uint32_t m = 0; m < c_.size(); ++m)
            if (std::popcount(m) % 2 == parity) out.c_[m] = c_[m];
        return out;
    }

    int n_;
    std::vector<cplx> c_;
};

/// e_S e_T = blade_sign(S, T) e_{S xor T}.
inline double blade_sign(std::uint32_t s, std::uint32_t t) {
    int swaps = 0;
    for (std::uint32_t rest = t; rest != 0; rest &= rest - 1) {
        const int j = std::countr_zero(rest);
        swaps += std::popcount(s >> (j + 1));
    }
    return (swaps % 2 == 0) ? 1.0 : -1.0;
}

inline CliffordElement cl_mul(const CliffordElement& a, const CliffordElement& b) {
    a.check_rank(b);
    CliffordElement out(a.n());
    const auto sz = static_cast<std::uint32_t>(a.size());
    for (std::uint32_t s = 0; s < sz; ++s) {
        const cplx as = a[s];
        if (as == cplx{}) continue;
        for (std::uint32_t t = 0; t < sz; ++t) {
            const cplx bt = b[t];
            if (bt == cplx{}) continue;
            out[s ^ t] += blade_sign(s, t) * as * bt;
        }
    }
    return out;
}

inline CliffordElement operator*(const CliffordElement& a, const CliffordElement& b) {
    return cl_mul(a, b);
}

namespace detail {

// A matrix with exactly one nonzero entry per column: column b maps to row
// perm[b] with factor phase[b].
struct Monomial {
    std::vector<std::uint32_t> perm;
    std::vector<cplx> phase;
};

inline Monomial monomial_identity(std::uint32_t dim) {
    Monomial m{std::vector<std::uint32_t>(dim), std::vector<cplx>(dim, 1.0)};
    for (std::uint32_t b = 0; b < dim; ++b) m.perm[b] = b;
    return m;
}

// Jordan-Wigner: gamma_{2q} = Z^{(q)} X_q, gamma_{2q+1} = Z^{(q)} Y_q where
// Z^{(q)} is Z on every qubit below q. All are hermitian involutions that
// pairwise anticommute.
inline void apply_generator(int g, Monomial& m) {
    const int q = g / 2;
    const bool is_y = (g % 2) == 1;
    for (std::size_t b = 0; b < m.perm.size(); ++b) {
        const std::uint32_t state = m.perm[b];
        const std::uint32_t low = state & ((std::uint32_t{1} << q) - 1);
        double z = (std::popcount(low) % 2 == 0) ? 1.0 : -1.0;
        cplx f = z;
        if (is_y) f *= ((state >> q) & 1U) ? cplx{0.0, -1.0} : cplx{0.0, 1.0};
        m.perm[b] = state ^ (std::uint32_t{1} << q);
        m.phase[b] *= f;
    }
}

} // namespace detail

/// Faithful representation on (C^2)^{ceil(n/2)}; generators map to hermitian
/// involutions, so the adjoint maps to the conjugate transpose.
inline MatrixXcd matrix_rep(const CliffordElement& a) {
    const int n = a.n();
    if (n > kMaxMatrixRepGenerators)
        throw Error(ErrorKind::RankTooLarge,
                    "matrix representation supports at most 14 generators, got " + std::to_string(n));
    const int m = (n + 1) / 2;
    const auto dim = std::uint32_t{1} << m;
    MatrixXcd out = MatrixXcd::Zero(dim, dim);
    for (std::uint32_t s = 0; s < a.size(); ++s) {
        if (a[s] == cplx{}) continue;
        detail::Monomial mon = detail::monomial_identity(dim);
        // e_{s1} ... e_{sk} acts by applying the highest generator first.
        for (int g = n - 1; g >= 0; --g)
            if ((s >> g) & 1U) detail::apply_generator(g, mon);
        for (std::uint32_t b = 0; b < dim; ++b) out(mon.perm[b], b) += a[s] * mon.phase[b];
    }
    return out;
}

inline double scalar_vector_norm(cplx alpha, const VectorXd& p, const VectorXd& q);

/// The C*-norm: operator norm of the (faithful) matrix representation.
/// Elements of grade <= 1 are normed exactly in a Cl(R^2) subalgebra.
inline double cl_norm(const CliffordElement& a) {
    bool low_grade = true;
    for (std::uint32_t s = 0; s < a.size() && low_grade; ++s)
        if (std::popcount(s) > 1 && a[s] != cplx{}) low_grade = false;
    if (low_grade) {
        VectorXd p(a.n()), q(a.n());
        for (int g = 0; g < a.n(); ++g) {
            p(g) = a[std::uint32_t{1} << g].real();
            q(g) = a[std::uint32_t{1} << g].imag();
        }
        return scalar_vector_norm(a[0], p, q);
    }
    const MatrixXcd m = matrix_rep(a);
    Eigen::JacobiSVD<MatrixXcd> svd(m);
    return svd.singularValues()(0);
}

/// The algebra morphism Cl(R^source) -> Cl(R^target) extending an isometry.
class CliffordMorphism {
public:
    CliffordMorphism(const MatrixXd& u, int source_n, int target_n)
        : source_n_(source_n), target_n_(target_n) {
        if (u.rows() != target_n || u.cols() != source_n)
            throw Error(ErrorKind::RankMismatch, "isometry shape does not match generator counts");
        if (source_n > 0) {
            const double err =
                (u.transpose() * u - MatrixXd::Identity(source_n, source_n)).cwiseAbs().maxCoeff();
            if (!(err <= kOrthonormalTol))
                throw Error(ErrorKind::NotIsometry,
                            "U^T U deviates from identity by " + std::to_string(err));
        }
        const std::size_t count = std::size_t{1} << source_n;
        images_.reserve(count);
        images_.push_back(CliffordElement::scalar(target_n, 1.0));
        for (std::uint32_t s = 1; s < count; ++s) {
            const int top = 31 - std::countl_zero(s);
            const std::uint32_t rest = s & ~(std::uint32_t{1} << top);
            images_.push_back(cl_mul(images_[rest], CliffordElement::vector(target_n, u.col(top))));
        }
    }

    int source_n() const { return source_n_; }
    int target_n() const { return target_n_; }

    CliffordElement operator()(const CliffordElement& a) const {
        if (a.n() != source_n_) throw Error(ErrorKind::RankMismatch, "morphism source rank mismatch");
        CliffordElement out(target_n_);
        for (std::uint32_t s = 0; s < a.size(); ++s) {
            const cplx z = a[s];
            if (z == cplx{}) continue;
            const auto& img = images_[s];
            for (std::uint32_t t = 0; t < img.size(); ++t) out[t] += z * img[t];
        }
        return out;
    }

private:
    int source_n_;
    int target_n_;
    std::vector<CliffordElement> images_;
};

inline CliffordMorphism extend_isometry(const LinearMap& u, int source_n, int target_n) {
    return CliffordMorphism(u.matrix(), source_n, target_n);
}

/// A point (x, v) of R x R^n, standing for x e_0 + C(v) in Cl(R^{n+1}).
struct SpectralPoint {
    double x = 0.0;
    VectorXd v;

    double radius() const { return std::sqrt(x * x + v.squaredNorm()); }
};

using ScalarFunction = std::function<cplx(double)>;

/// x e_0 + sum_j v_j e_{j+1}.
inline CliffordElement spectral_element(const SpectralPoint& p) {
    const int n = static_cast<int>(p.v.size()) + 1;
    CliffordElement a = CliffordElement::vector(n, p.v, 1);
    a[1] = p.x;
    return a;
}

/// f(s) for s = x e_0 + C(v). Since s^2 = rho^2, f(s) = f_e(rho) + f_o(rho) s / rho.
inline CliffordElement functional_calculus(const ScalarFunction& f, const SpectralPoint& p) {
    const int n = static_cast<int>(p.v.size()) + 1;
    const double rho = p.radius();
    if (rho == 0.0) return CliffordElement::scalar(n, f(0.0));
    const cplx fp = f(rho);
    const cplx fm = f(-rho);
    CliffordElement out = spectral_element(p);
    out *= (fp - fm) / (2.0 * rho);
    out[0] += (fp + fm) / 2.0;
    return out;
}

/// f(s) = alpha + beta s for s = x e_0 + C(v); (alpha, beta) = (f_e(rho), f_o(rho)/rho).
inline std::pair<cplx, cplx> fc_coefficients(const ScalarFunction& f, double rho) {
    if (rho == 0.0) return {f(0.0), cplx{}};
    const cplx fp = f(rho);
    const cplx fm = f(-rho);
    return {(fp + fm) / 2.0, (fp - fm) / (2.0 * rho)};
}

/// C*-norm of alpha + C(p) + i C(q) for real vectors p, q. The element lies in
/// the copy of Cl(R^2) = M_2(C) spanned by p and q, whose norm it inherits.
inline double scalar_vector_norm(cplx alpha, const VectorXd& p, const VectorXd& q) {
    const double np = p.norm();
    VectorXd e1, e2;
    cplx c1{}, c2{};
    if (np > 0.0) {
        e1 = p / np;
        const VectorXd rest = q - e1 * e1.dot(q);
        c1 = {np, e1.dot(q)};
        const double nr = rest.norm();
        if (nr > 1e-300 * std::max(1.0, q.norm())) c2 = {0.0, nr};
    } else {
        c1 = {0.0, q.norm()};
    }
    Eigen::Matrix2cd m;
    m << alpha, c1 - cplx{0.0, 1.0} * c2, c1 + cplx{0.0, 1.0} * c2, alpha;
    Eigen::JacobiSVD<Eigen::Matrix2cd> svd(m);
    return svd.singularValues()(0);
}

// JSON: {"n": n, "terms": [{"subset": [generator indices], "re": x, "im": y}]}
inline nlohmann::json to_json(const CliffordElement& a) {
    nlohmann::json terms = nlohmann::json::array();
    for (std::uint32_t s = 0; s < a.size(); ++s) {
        if (a[s] == cplx{}) continue;
        nlohmann::json subset = nlohmann::json::array();
        for (int g = 0; g < a.n(); ++g)
            if ((s >> g) & 1U) subset.push_back(g);
        terms.push_back({{"subset", subset}, {"re", a[s].real()}, {"im", a[s].imag()}});
    }
    return {{"n", a.n()}, {"terms", terms}};
}

inline CliffordElement clifford_from_json(const nlohmann::json& j) {
    CliffordElement a(j.at("n").get<int>());
    for (const auto& t : j.at("terms")) {
        std::uint32_t mask = 0;
        int prev = -1;
        for (const auto& g : t.at("subset")) {
            const int i = g.get<int>();
            if (i <= prev || i >= a.n())
                throw Error(ErrorKind::InvalidArgument, "subset must be ascending generator indices");
            mask |= std::uint32_t{1} << i;
            prev = i;
        }
        a[mask] += cplx{t.at("re").get<double>(), t.value("im", 0.0)};
    }
    return a;
}

} // namespace bottdeg
