#pragma once

// Sampled Bott elements, the induced Clifford operator, pullbacks along
// proper maps, window truncation and the finite-stage defect estimators.
//
// A section is a Clifford-valued function on R x R^m sampled on a tensor
// grid; axis 0 is the spectral variable x and axes 1..m are the coordinates
// of v. Values live in Cl(R^{1+m}) with e_0 the spectral generator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bottdeg/clifford.hpp"
#include "bottdeg/error.hpp"
#include "bottdeg/euclid.hpp"

namespace bottdeg {

using VectorField = std::function<VectorXd(const VectorXd&)>;
using JacobianField = std::function<MatrixXd(const VectorXd&)>;

/// F = l + c between model spaces of finite dimension.
struct ProperNonlinearMap {
    std::string name = "unnamed";
    nlohmann::json params = nlohmann::json::object();
    int dim_source = 0;
    int dim_target = 0;
    VectorField eval;
    JacobianField jac;                    // empty: central differences
    LinearMap linear_part;
    std::function<double(double)> gauge;  // empty: properness only checked on samples

    VectorXd operator()(const VectorXd& v) const {
        if (v.size() != dim_source)
            throw Error(ErrorKind::RankMismatch, "map '" + name + "' expects dimension " +
                                                     std::to_string(dim_source));
        return eval(v);
    }

    VectorXd nonlinear_part(const VectorXd& v) const { return (*this)(v) - linear_part(v); }

    bool has_jacobian() const { return static_cast<bool>(jac); }

    MatrixXd jacobian(const VectorXd& v) const {
        if (jac) return jac(v);
        MatrixXd j(dim_target, dim_source);
        const double h = 1e-6 * std::max(1.0, v.norm());
        for (int k = 0; k < dim_source; ++k) {
            VectorXd p = v, m = v;
            p(k) += h;
            m(k) -= h;
            j.col(k) = (eval(p) - eval(m)) / (2.0 * h);
        }
        return j;
    }

    nlohmann::json descriptor() const {
        return {{"name", name}, {"params", params}, {"dim_source", dim_source}, {"dim_target", dim_target}};
    }
};

inline ProperNonlinearMap linear_proper_map(const LinearMap& l, std::string name = "linear") {
    ProperNonlinearMap f;
    f.name = std::move(name);
    f.params = {{"matrix", to_json(l)}};
    f.dim_source = l.cols();
    f.dim_target = l.rows();
    const MatrixXd m = l.matrix();
    f.eval = [m](const VectorXd& v) { return VectorXd(m * v); };
    f.jac = [m](const VectorXd&) { return m; };
    f.linear_part = l;
    return f;
}

inline ProperNonlinearMap identity_map(int n) {
    return linear_proper_map(LinearMap::identity(n), "identity");
}

/// F ∘ L.
inline ProperNonlinearMap compose_linear(const ProperNonlinearMap& f, const LinearMap& l) {
    if (l.rows() != f.dim_source) throw Error(ErrorKind::RankMismatch, "composition shape mismatch");
    ProperNonlinearMap g;
    g.name = f.name + "*linear";
    g.params = {{"outer", f.descriptor()}, {"inner", to_json(l)}};
    g.dim_source = l.cols();
    g.dim_target = f.dim_target;
    const MatrixXd m = l.matrix();
    g.eval = [f, m](const VectorXd& v) { return f.eval(m * v); };
    g.jac = [f, m](const VectorXd& v) { return MatrixXd(f.jacobian(m * v) * m); };
    g.linear_part = LinearMap(f.linear_part.matrix() * m);
    return g;
}

/// (w, u) ↦ (F(w), L u) on R^{k} ⊕ R^{m}.
inline ProperNonlinearMap direct_sum(const ProperNonlinearMap& f, const LinearMap& l) {
    ProperNonlinearMap g;
    g.name = f.name + "+linear";
    g.params = {{"first", f.descriptor()}, {"second", to_json(l)}};
    const int k = f.dim_source, m = l.cols();
    g.dim_source = k + m;
    g.dim_target = f.dim_target + l.rows();
    const MatrixXd lm = l.matrix();
    const int kt = f.dim_target;
    g.eval = [f, lm, k, m, kt](const VectorXd& v) {
        VectorXd out(kt + lm.rows());
        out.head(kt) = f.eval(v.head(k));
        out.tail(lm.rows()) = lm * v.tail(m);
        return out;
    };
    g.jac = [f, lm, k, m, kt](const VectorXd& v) {
        MatrixXd j = MatrixXd::Zero(kt + lm.rows(), k + m);
        j.topLeftCorner(kt, k) = f.jacobian(v.head(k));
        j.bottomRightCorner(lm.rows(), m) = lm;
        return j;
    };
    MatrixXd lin = MatrixXd::Zero(g.dim_target, g.dim_source);
    lin.topLeftCorner(kt, k) = f.linear_part.matrix();
    lin.bottomRightCorner(lm.rows(), m) = lm;
    g.linear_part = LinearMap(lin);
    return g;
}

/// Smallest g(|F(m)|) - |m| over the given samples; >= 0 means the gauge holds there.
inline double gauge_margin(const ProperNonlinearMap& f, std::span<const VectorXd> samples) {
    if (!f.gauge) throw Error(ErrorKind::InvalidArgument, "map has no gauge");
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& m : samples) worst = std::min(worst, f.gauge(f(m).norm()) - m.norm());
    return worst;
}

/// Caches l̄^T so that C_F(v) = l̄^{-1} F(v) is cheap per node.
class InducedCliffordOperator {
public:
    explicit InducedCliffordOperator(const ProperNonlinearMap& f)
        : f_(f), bar_t_(polar_unitary(f.linear_part).matrix().transpose()) {
        if (f.dim_source != f.dim_target)
            throw Error(ErrorKind::RankMismatch, "induced Clifford operator needs equal dimensions");
    }
    VectorXd operator()(const VectorXd& v) const { return bar_t_ * f_(v); }
    const MatrixXd& unitary_inverse() const { return bar_t_; }

private:
    ProperNonlinearMap f_;
    MatrixXd bar_t_;
};

inline VectorXd induced_clifford_operator(const ProperNonlinearMap& f, const VectorXd& v) {
    return InducedCliffordOperator(f)(v);
}

// ---------------------------------------------------------------------------
// Grids and sampled sections

struct GridAxis {
    double lo = -1.0;
    double hi = 1.0;
    int count = 2;

    double step() const { return count > 1 ? (hi - lo) / (count - 1) : 0.0; }
    double node(int i) const { return count > 1 ? lo + (hi - lo) * i / (count - 1) : lo; }
};

class TensorGrid {
public:
    TensorGrid() = default;
    explicit TensorGrid(std::vector<GridAxis> axes) : axes_(std::move(axes)) {
        if (axes_.empty()) throw Error(ErrorKind::InvalidArgument, "grid needs at least one axis");
        strides_.resize(axes_.size());
        std::size_t s = 1;
        for (std::size_t d = axes_.size(); d-- > 0;) {
            if (axes_[d].count < 1 || !(axes_[d].hi >= axes_[d].lo))
                throw Error(ErrorKind::InvalidArgument, "malformed grid axis");
            strides_[d] = s;
            s *= static_cast<std::size_t>(axes_[d].count);
        }
        size_ = s;
    }

    /// x in [-xr, xr] with nx nodes, each of the m spatial axes [-vr, vr] with nv nodes.
    static TensorGrid spectral(double xr, int nx, int m, double vr, int nv) {
        std::vector<GridAxis> axes{{-xr, xr, nx}};
        for (int i = 0; i < m; ++i) axes.push_back({-vr, vr, nv});
        return TensorGrid(std::move(axes));
    }

    int dims() const { return static_cast<int>(axes_.size()); }
    int spatial_dims() const { return dims() - 1; }
    std::size_t size() const { return size_; }
    const std::vector<GridAxis>& axes() const { return axes_; }
    const GridAxis& axis(int d) const { return axes_[static_cast<std::size_t>(d)]; }
    std::size_t stride(int d) const { return strides_[static_cast<std::size_t>(d)]; }

    int index_along(std::size_t flat, int d) const {
        return static_cast<int>((flat / strides_[static_cast<std::size_t>(d)]) %
                                static_cast<std::size_t>(axes_[static_cast<std::size_t>(d)].count));
    }

    VectorXd coords(std::size_t flat) const {
        VectorXd c(dims());
        for (int d = 0; d < dims(); ++d) c(d) = axis(d).node(index_along(flat, d));
        return c;
    }

    SpectralPoint point(std::size_t flat) const {
        const VectorXd c = coords(flat);
        return {c(0), c.tail(dims() - 1)};
    }

    bool contains(const VectorXd& c, double slack = 1e-12) const {
        for (int d = 0; d < dims(); ++d) {
            const double tol = slack * std::max(1.0, std::abs(axis(d).hi - axis(d).lo));
            if (c(d) < axis(d).lo - tol || c(d) > axis(d).hi + tol) return false;
        }
        return true;
    }

    /// Multilinear interpolation stencil: up to 2^dims (flat index, weight) pairs.
    std::vector<std::pair<std::size_t, double>> stencil(const VectorXd& c) const {
        if (c.size() != dims()) throw Error(ErrorKind::RankMismatch, "point has wrong dimension");
        if (!contains(c)) {
            std::ostringstream os;
            os << "point (" << c.transpose() << ") lies outside the sampled grid";
            throw Error(ErrorKind::GridCoverage, os.str());
        }
        std::vector<std::pair<std::size_t, double>> out{{0, 1.0}};
        for (int d = 0; d < dims(); ++d) {
            const GridAxis& a = axis(d);
            int i0 = 0;
            double t = 0.0;
            if (a.count > 1) {
                const double u = std::clamp((c(d) - a.lo) / a.step(), 0.0, double(a.count - 1));
                i0 = std::min(static_cast<int>(std::floor(u)), a.count - 2);
                t = u - i0;
            }
            std::vector<std::pair<std::size_t, double>> next;
            next.reserve(out.size() * 2);
            for (const auto& [idx, w] : out) {
                const std::size_t base = idx + static_cast<std::size_t>(i0) * stride(d);
                if (t < 1.0) next.emplace_back(base, w * (1.0 - t));
                if (t > 0.0) next.emplace_back(base + stride(d), w * t);
            }
            out = std::move(next);
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json axes = nlohmann::json::array();
        for (const auto& a : axes_) axes.push_back({{"lo", a.lo}, {"hi", a.hi}, {"count", a.count}});
        return {{"axes", axes}};
    }

    static TensorGrid from_json(const nlohmann::json& j) {
        std::vector<GridAxis> axes;
        for (const auto& a : j.at("axes"))
            axes.push_back({a.at("lo").get<double>(), a.at("hi").get<double>(), a.at("count").get<int>()});
        return TensorGrid(std::move(axes));
    }

private:
    std::vector<GridAxis> axes_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

inline double l1_coeff_norm(const CliffordElement& a) {
    double s = 0.0;
    for (const auto& c : a.coeffs()) s += std::abs(c);
    return s;
}

/// A Clifford-valued function sampled on a tensor grid, supported in (-r, r)
/// in the spectral variable up to the decay tolerance.
class SampledSection {
public:
    SampledSection(double r, TensorGrid grid, std::vector<CliffordElement> values, Subspace frame)
        : r_(r), grid_(std::move(grid)), values_(std::move(values)), frame_(std::move(frame)) {
        if (values_.size() != grid_.size())
            throw Error(ErrorKind::InvalidArgument, "section needs one value per grid node");
        const int n = grid_.dims();
        for (const auto& v : values_)
            if (v.n() != n) throw Error(ErrorKind::RankMismatch, "section values have inconsistent rank");
        if (frame_.dim() != grid_.spatial_dims())
            throw Error(ErrorKind::RankMismatch, "frame dimension does not match spatial grid axes");
    }

    double r() const { return r_; }
    const TensorGrid& grid() const { return grid_; }
    const std::vector<CliffordElement>& values() const { return values_; }
    const CliffordElement& value(std::size_t i) const { return values_[i]; }
    const Subspace& frame() const { return frame_; }
    int generators() const { return grid_.dims(); }

    CliffordElement interpolate(const VectorXd& coords) const {
        CliffordElement out(generators());
        for (const auto& [idx, w] : grid_.stencil(coords)) {
            const auto& v = values_[idx];
            for (std::uint32_t s = 0; s < v.size(); ++s) out[s] += w * v[s];
        }
        return out;
    }
    CliffordElement interpolate(double x, const VectorXd& v) const {
        VectorXd c(v.size() + 1);
        c(0) = x;
        c.tail(v.size()) = v;
        return interpolate(c);
    }

    double sup_norm() const {
        double m = 0.0;
        for (const auto& v : values_) m = std::max(m, cl_norm(v));
        return m;
    }

    /// Bound for the multilinear interpolation error in the C*-norm:
    /// sum over axes of the largest second difference (l1 over blades) / 8.
    double interpolation_tolerance() const {
        double tol = 0.0;
        for (int d = 0; d < grid_.dims(); ++d) {
            if (grid_.axis(d).count < 3) continue;
            double worst = 0.0;
            const std::size_t st = grid_.stride(d);
            for (std::size_t i = 0; i < grid_.size(); ++i) {
                const int k = grid_.index_along(i, d);
                if (k == 0 || k == grid_.axis(d).count - 1) continue;
                const auto& a = values_[i - st];
                const auto& b = values_[i];
                const auto& c = values_[i + st];
                double s = 0.0;
                for (std::uint32_t m = 0; m < a.size(); ++m) s += std::abs(a[m] - 2.0 * b[m] + c[m]);
                worst = std::max(worst, s);
            }
            tol += worst / 8.0;
        }
        return tol;
    }

    /// Largest C*-norm at nodes with |(x, v)| >= radius.
    double decay_residual(double radius) const {
        double m = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (grid_.coords(i).norm() >= radius) m = std::max(m, cl_norm(values_[i]));
        return m;
    }

    SampledSection adjoint() const {
        std::vector<CliffordElement> out;
        out.reserve(values_.size());
        for (const auto& v : values_) out.push_back(v.adjoint());
        return {r_, grid_, std::move(out), frame_};
    }

    friend SampledSection operator*(const SampledSection& a, const SampledSection& b) {
        a.check_compatible(b);
        std::vector<CliffordElement> out;
        out.reserve(a.values_.size());
        for (std::size_t i = 0; i < a.values_.size(); ++i) out.push_back(cl_mul(a.values_[i], b.values_[i]));
        return {a.r_, a.grid_, std::move(out), a.frame_};
    }

    friend SampledSection operator-(const SampledSection& a, const SampledSection& b) {
        a.check_compatible(b);
        std::vector<CliffordElement> out;
        out.reserve(a.values_.size());
        for (std::size_t i = 0; i < a.values_.size(); ++i) out.push_back(a.values_[i] - b.values_[i]);
        return {a.r_, a.grid_, std::move(out), a.frame_};
    }

    nlohmann::json to_json() const {
        nlohmann::json vals = nlohmann::json::array();
        for (const auto& v : values_) vals.push_back(bottdeg::to_json(v));
        return {{"r", r_}, {"grid", grid_.to_json()}, {"frame", bottdeg::to_json(frame_)}, {"values", vals}};
    }

    static SampledSection from_json(const nlohmann::json& j) {
        std::vector<CliffordElement> vals;
        for (const auto& v : j.at("values")) vals.push_back(clifford_from_json(v));
        return {j.at("r").get<double>(), TensorGrid::from_json(j.at("grid")), std::move(vals),
                subspace_from_json(j.at("frame"))};
    }

private:
    void check_compatible(const SampledSection& b) const {
        if (b.values_.size() != values_.size() || b.grid_.dims() != grid_.dims())
            throw Error(ErrorKind::RankMismatch, "sections live on different grids");
    }

    double r_;
    TensorGrid grid_;
    std::vector<CliffordElement> values_;
    Subspace frame_;
};

/// Largest node-wise C*-norm of a - b.
inline double sup_distance(const SampledSection& a, const SampledSection& b) {
    return (a - b).sup_norm();
}

// ---------------------------------------------------------------------------
// Test functions on R

struct TestFunction {
    std::string name;
    ScalarFunction f;
};

/// exp(1 - 1/(1 - (t/s)^2)) on |t| < s, 0 elsewhere; equals 1 at t = 0.
inline ScalarFunction bump(double s) {
    return [s](double t) {
        const double u = t / s;
        if (std::abs(u) >= 1.0) return cplx(0.0);
        return cplx(std::exp(1.0 - 1.0 / (1.0 - u * u)));
    };
}

inline std::vector<TestFunction> gaussian_test_functions() {
    return {
        {"gauss", [](double t) { return cplx(std::exp(-t * t)); }},
        {"t_gauss", [](double t) { return cplx(t * std::exp(-t * t)); }},
        {"t2_gauss", [](double t) { return cplx(t * t * std::exp(-t * t)); }},
        {"wide_gauss", [](double t) { return cplx(std::exp(-0.5 * t * t)); }},
    };
}

inline std::vector<TestFunction> default_test_functions() {
    auto fns = gaussian_test_functions();
    fns.push_back({"bump1", bump(1.0)});
    fns.push_back({"bump2", bump(2.0)});
    return fns;
}

// ---------------------------------------------------------------------------
// Bott elements and pullbacks

/// x ↦ f(x e_0 + C_F(v)) sampled on `grid` (axes: x, then dim_source spatial).
inline SampledSection bott_element(const ScalarFunction& f, const ProperNonlinearMap& fmap,
                                   const TensorGrid& grid) {
    if (grid.spatial_dims() != fmap.dim_source)
        throw Error(ErrorKind::RankMismatch, "grid does not match the source dimension of the map");
    const InducedCliffordOperator cf(fmap);
    std::vector<CliffordElement> vals;
    vals.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const SpectralPoint p = grid.point(i);
        vals.push_back(functional_calculus(f, {p.x, cf(p.v)}));
    }
    const double r = std::max(std::abs(grid.axis(0).lo), std::abs(grid.axis(0).hi));
    return {r, grid, std::move(vals), Subspace::leading(fmap.dim_source, fmap.dim_source)};
}

/// The plain Bott element f(x e_0 + C(v)).
inline SampledSection bott_element(const ScalarFunction& f, const TensorGrid& grid) {
    return bott_element(f, identity_map(grid.spatial_dims()), grid);
}

using ExactSection = std::function<CliffordElement(const SpectralPoint&)>;

namespace detail {
inline MatrixXd spectral_block_unitary(const MatrixXd& bar_t) {
    const Eigen::Index m = bar_t.rows();
    MatrixXd u = MatrixXd::Zero(m + 1, m + 1);
    u(0, 0) = 1.0;
    u.bottomRightCorner(m, m) = bar_t;
    return u;
}
} // namespace detail

/// (F^* u)(x, v') = l̄^{-1}(u(x, F(v'))), with u interpolated on its grid.
inline SampledSection pullback(const ProperNonlinearMap& fmap, const SampledSection& u,
                               const TensorGrid& source_grid) {
    if (u.grid().spatial_dims() != fmap.dim_target)
        throw Error(ErrorKind::RankMismatch, "section does not live on the target of the map");
    if (source_grid.spatial_dims() != fmap.dim_source)
        throw Error(ErrorKind::RankMismatch, "source grid does not match the map");
    const InducedCliffordOperator cf(fmap);
    const CliffordMorphism iso(detail::spectral_block_unitary(cf.unitary_inverse()), fmap.dim_target + 1,
                               fmap.dim_source + 1);
    std::vector<CliffordElement> vals;
    vals.reserve(source_grid.size());
    for (std::size_t i = 0; i < source_grid.size(); ++i) {
        const SpectralPoint p = source_grid.point(i);
        vals.push_back(iso(u.interpolate(p.x, fmap(p.v))));
    }
    return {u.r(), source_grid, std::move(vals), Subspace::leading(fmap.dim_source, fmap.dim_source)};
}

/// Pullback of a section given in closed form; no interpolation error.
inline SampledSection pullback(const ProperNonlinearMap& fmap, const ExactSection& u, double r,
                               const TensorGrid& source_grid) {
    const InducedCliffordOperator cf(fmap);
    const CliffordMorphism iso(detail::spectral_block_unitary(cf.unitary_inverse()), fmap.dim_target + 1,
                               fmap.dim_source + 1);
    std::vector<CliffordElement> vals;
    vals.reserve(source_grid.size());
    for (std::size_t i = 0; i < source_grid.size(); ++i) {
        const SpectralPoint p = source_grid.point(i);
        vals.push_back(iso(u({p.x, fmap(p.v)})));
    }
    return {r, source_grid, std::move(vals), Subspace::leading(fmap.dim_source, fmap.dim_source)};
}

/// Multiplies by a radial cutoff in |(x, v)|: 1 up to r_inner, 0 from r_outer, linear between.
inline SampledSection window_truncate(const SampledSection& u, double r_inner, double r_outer) {
    if (!(r_inner < r_outer) || r_inner < 0.0)
        throw Error(ErrorKind::BadWindow, "window needs 0 <= r_inner < r_outer");
    std::vector<CliffordElement> vals;
    vals.reserve(u.values().size());
    for (std::size_t i = 0; i < u.values().size(); ++i) {
        const double rho = u.grid().coords(i).norm();
        const double psi = std::clamp((r_outer - rho) / (r_outer - r_inner), 0.0, 1.0);
        vals.push_back(psi * u.value(i));
    }
    return {u.r(), u.grid(), std::move(vals), u.frame()};
}

// ---------------------------------------------------------------------------
// Finite stages and defect estimators

/// One stage (W'_i, F_i, l_i, r_i, s_i). F and l act on the ambient source
/// model; only their values on W_source are meaningful.
struct ApproximationStage {
    int index = 0;
    Subspace W_source;
    Subspace W_target;
    ProperNonlinearMap F;
    LinearMap l;
    double r = 1.0;
    double s = 1.0;

    int dim() const { return W_source.dim(); }

    /// F_i in the coordinates of the frames: z ↦ W_target^T F(W_source z).
    ProperNonlinearMap restricted() const {
        if (W_source.dim() != W_target.dim())
            throw Error(ErrorKind::RankMismatch, "stage source and target dimensions differ");
        ProperNonlinearMap g;
        g.name = F.name + "|stage" + std::to_string(index);
        g.params = {{"stage", index}, {"map", F.descriptor()}};
        g.dim_source = g.dim_target = dim();
        const MatrixXd ws = W_source.frame();
        const MatrixXd wt = W_target.frame();
        const ProperNonlinearMap f = F;
        g.eval = [f, ws, wt](const VectorXd& z) { return VectorXd(wt.transpose() * f.eval(ws * z)); };
        g.jac = [f, ws, wt](const VectorXd& z) { return MatrixXd(wt.transpose() * f.jacobian(ws * z) * ws); };
        g.linear_part = LinearMap(wt.transpose() * l.matrix() * ws);
        return g;
    }
};

inline bool stages_nested(std::span<const ApproximationStage> stages, double tol = 1e-10) {
    for (std::size_t i = 1; i < stages.size(); ++i)
        if (!stages[i].W_source.contains(stages[i - 1].W_source, tol)) return false;
    return true;
}

/// The stage-i member u_i = F_i^*(β(f)) of a compatible sequence, generated on demand.
inline SampledSection compatible_element(const ScalarFunction& f, const ApproximationStage& stage,
                                         const TensorGrid& grid) {
    return bott_element(f, stage.restricted(), grid);
}

/// The twisted Clifford operator of a block E'_ba in its own coordinates:
/// C_l = l̄^T l maps E'_ba onto Ē'_ba, and the polar unitary of the
/// orthogonal projection Ē'_ba → E'_ba carries it back.
inline MatrixXd induced_block_operator(const LinearMap& l, const Subspace& block) {
    if (block.ambient_dim() != l.cols())
        throw Error(ErrorKind::AmbientMismatch, "block does not live in the source of l");
    const int k = block.dim();
    if (k == 0) return MatrixXd(0, 0);
    const MatrixXd p = polar_unitary(l).matrix().transpose() * l.matrix();
    const MatrixXd py = p * block.frame();
    const Subspace bar = Subspace::span(py);
    if (bar.dim() != k) throw Error(ErrorKind::SingularMap, "induced operator collapses the block");
    const MatrixXd proj = block.frame().transpose() * bar.frame();
    const MatrixXd u = polar_unitary(LinearMap(proj)).matrix();
    return u * (bar.frame().transpose() * py);
}

struct DefectSampling {
    double radius = 3.0;   // x and |z| range
    int x_count = 31;
    int radial_count = 61;
    int directions = 2;    // leading right singular vectors of T - I
    int random_samples = 0;
    std::uint64_t seed = 1;
};

/// sup over test functions and samples of |f(x e_0 + C(T z)) - f(x e_0 + C(S z))|.
inline double block_operator_defect(const MatrixXd& t, const MatrixXd& s,
                                    std::span<const TestFunction> fns, const DefectSampling& cfg) {
    const Eigen::Index k = t.rows();
    if (k == 0 || fns.empty()) return 0.0;
    std::vector<VectorXd> dirs;
    const MatrixXd diff = t - s;
    Eigen::JacobiSVD<MatrixXd> svd(diff, Eigen::ComputeFullV);
    for (int j = 0; j < std::min<int>(cfg.directions, static_cast<int>(k)); ++j)
        dirs.push_back(svd.matrixV().col(j));
    std::vector<VectorXd> zs;
    for (const auto& d : dirs)
        for (int i = 0; i < cfg.radial_count; ++i) {
            const double rho = cfg.radial_count > 1
                                   ? -cfg.radius + 2.0 * cfg.radius * i / (cfg.radial_count - 1)
                                   : 0.0;
            zs.push_back(rho * d);
        }
    std::mt19937_64 gen(cfg.seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int i = 0; i < cfg.random_samples; ++i) {
        VectorXd z(k);
        for (Eigen::Index j = 0; j < k; ++j) z(j) = nd(gen);
        z *= cfg.radius * std::pow(ud(gen), 1.0 / static_cast<double>(k)) / std::max(z.norm(), 1e-300);
        zs.push_back(z);
    }
    // Both values are alpha + beta (x e_0 + C(w)); the difference is a scalar
    // plus a complex vector, normed exactly through scalar_vector_norm.
    double worst = 0.0;
    VectorXd p(k + 1), q(k + 1);
    for (int ix = 0; ix < cfg.x_count; ++ix) {
        const double x = cfg.x_count > 1 ? -cfg.radius + 2.0 * cfg.radius * ix / (cfg.x_count - 1) : 0.0;
        for (const auto& z : zs) {
            VectorXd st(k + 1), ss(k + 1);
            st << x, t * z;
            ss << x, s * z;
            for (const auto& tf : fns) {
                const auto [at, bt] = fc_coefficients(tf.f, st.norm());
                const auto [as, bs] = fc_coefficients(tf.f, ss.norm());
                p = bt.real() * st - bs.real() * ss;
                q = bt.imag() * st - bs.imag() * ss;
                worst = std::max(worst, scalar_vector_norm(at - as, p, q));
            }
        }
    }
    return worst;
}

/// Deviation of the transported twisted Bott map on E'_ba from the standard one.
inline double projection_diagram_defect(const LinearMap& l, const Subspace& e_a, const Subspace& e_b,
                                        std::span<const TestFunction> fns,
                                        const DefectSampling& cfg = {}) {
    const Subspace block = relative_complement(e_b, e_a);
    const MatrixXd t = induced_block_operator(l, block);
    return block_operator_defect(t, MatrixXd::Identity(t.rows(), t.cols()), fns, cfg);
}

struct CommutativityDefect {
    int a = 0, b = 0, c = 0;
    double twisted = 0.0;       // β_ca against β_cb ∘ β_ba, both twisted
    double against_standard = 0.0; // β_cb ∘ β_ba against the untwisted β_ca
};

/// Defect of the triple (a, b, c) of nested stages; l is taken from stage c.
inline CommutativityDefect asymptotic_commutativity_defect(std::span<const ApproximationStage> stages,
                                                           std::span<const TestFunction> fns, int a,
                                                           int b, int c, const DefectSampling& cfg = {}) {
    const auto n = static_cast<int>(stages.size());
    if (!(0 <= a && a <= b && b <= c && c < n))
        throw Error(ErrorKind::InvalidArgument, "triple must satisfy a <= b <= c within the stage list");
    const auto& sa = stages[static_cast<std::size_t>(a)].W_source;
    const auto& sb = stages[static_cast<std::size_t>(b)].W_source;
    const auto& sc = stages[static_cast<std::size_t>(c)].W_source;
    if (!sb.contains(sa, 1e-10) || !sc.contains(sb, 1e-10))
        throw Error(ErrorKind::NotNested, "stages of the triple are not nested");
    const LinearMap& l = stages[static_cast<std::size_t>(c)].l;
    const Subspace ba = relative_complement(sb, sa);
    const Subspace cb = relative_complement(sc, sb);
    MatrixXd frame(sa.ambient_dim(), ba.dim() + cb.dim());
    frame << ba.frame(), cb.frame();
    const Subspace ca = Subspace::from_frame(frame, 1e-8);

    const MatrixXd t_ca = induced_block_operator(l, ca);
    MatrixXd t_comp = MatrixXd::Zero(ca.dim(), ca.dim());
    t_comp.topLeftCorner(ba.dim(), ba.dim()) = induced_block_operator(l, ba);
    t_comp.bottomRightCorner(cb.dim(), cb.dim()) = induced_block_operator(l, cb);

    CommutativityDefect out{a, b, c, 0.0, 0.0};
    out.twisted = block_operator_defect(t_ca, t_comp, fns, cfg);
    out.against_standard =
        block_operator_defect(t_comp, MatrixXd::Identity(ca.dim(), ca.dim()), fns, cfg);
    return out;
}

inline std::string defect_csv_header() { return "a,b,c,twisted,against_standard,grid_tolerance"; }

inline std::string defect_csv_row(const CommutativityDefect& d, double grid_tol = 0.0) {
    std::ostringstream os;
    os.precision(17);
    os << d.a << ',' << d.b << ',' << d.c << ',' << d.twisted << ',' << d.against_standard << ','
       << grid_tol;
    return os.str();
}

} // namespace bottdeg
