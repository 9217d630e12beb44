#pragma once

// Brouwer degree of proper maps on a ball, computed three ways (signed root
// count, planar winding number, certified linear homotopy) with certificates
// that record the evidence.
//
// Orientation convention: the degree of an invertible linear map is the sign
// of its determinant in the standard coordinates of the source and target.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
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
#include "bottdeg/error.hpp"
#include "bottdeg/euclid.hpp"
#include "bottdeg/maps.hpp"

namespace bottdeg {

struct RootRecord {
    VectorXd x;
    int sign = 0;
    double residual = 0.0;
    double det = 0.0;
};

struct DegreeCertificate {
    int degree = 0;
    std::string method;
    nlohmann::json evidence = nlohmann::json::object();
    double ball_radius = 0.0;
    VectorXd target;
    VectorXd target_used;  // differs from `target` only after a regularity perturbation
};

inline nlohmann::json vector_to_json(const VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline VectorXd vector_from_json(const nlohmann::json& j) {
    const auto vals = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline nlohmann::json to_json(const DegreeCertificate& c) {
    return {{"degree", c.degree},
            {"method", c.method},
            {"ball_radius", c.ball_radius},
            {"target", vector_to_json(c.target)},
            {"target_used", vector_to_json(c.target_used)},
            {"orientation", "degree of an invertible linear map = sign det"},
            {"evidence", c.evidence}};
}

/// A BoundaryHit that carries where the boundary value came closest to y.
class BoundaryHitError : public Error {
public:
    BoundaryHitError(const std::string& msg, double t, VectorXd x, double value)
        : Error(ErrorKind::BoundaryHit, msg), t_(t), x_(std::move(x)), value_(value) {}

    double t() const { return t_; }
    const VectorXd& x() const { return x_; }
    double value() const { return value_; }

    nlohmann::json to_json() const {
        return {{"error", "BoundaryHit"}, {"t", t_}, {"x", vector_to_json(x_)}, {"value", value_},
                {"message", what()}};
    }

private:
    double t_;
    VectorXd x_;
    double value_;
};

// ---------------------------------------------------------------------------
// Boundary sampling

/// Deterministic points on the sphere of the given radius: for dim 1 the two
/// endpoints, for dim 2 `count` equally spaced angles; otherwise ±axes, the
/// normalized sign vectors (dim ≤ 10) and seeded Gaussian directions up to
/// `count`.
inline std::vector<VectorXd> sphere_samples(int dim, double radius, int count, unsigned seed = 1) {
    std::vector<VectorXd> out;
    if (dim == 1) {
        out.push_back(VectorXd::Constant(1, radius));
        out.push_back(VectorXd::Constant(1, -radius));
        return out;
    }
    if (dim == 2) {
        for (int k = 0; k < count; ++k) {
            const double th = 2.0 * std::numbers::pi * k / count;
            out.push_back(radius * Eigen::Vector2d(std::cos(th), std::sin(th)));
        }
        return out;
    }
    for (int i = 0; i < dim; ++i) {
        out.push_back(radius * VectorXd::Unit(dim, i));
        out.push_back(-radius * VectorXd::Unit(dim, i));
    }
    if (dim <= 10) {
        for (long mask = 0; mask < (1L << dim); ++mask) {
            VectorXd v(dim);
            for (int i = 0; i < dim; ++i) v(i) = (mask >> i) & 1 ? -1.0 : 1.0;
            out.push_back(radius * v / std::sqrt(double(dim)));
        }
    }
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    while (static_cast<int>(out.size()) < count) {
        VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v(i) = nd(gen);
        if (v.norm() > 1e-12) out.push_back(radius * v.normalized());
    }
    return out;
}

struct BoundaryMargin {
    double value = std::numeric_limits<double>::infinity();
    VectorXd argmin;
    std::size_t samples = 0;
};

inline BoundaryMargin boundary_margin(const VectorField& f, const VectorXd& y,
                                      std::span<const VectorXd> boundary) {
    BoundaryMargin m;
    m.samples = boundary.size();
    for (const auto& x : boundary) {
        const double v = (f(x) - y).norm();
        if (v < m.value) {
            m.value = v;
            m.argmin = x;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Signed root counting

struct RootCountOptions {
    int seeds_per_axis = 9;
    int max_iterations = 60;
    double step_tol = 1e-12;
    double residual_tol = 1e-9;
    double dedup_tol = 1e-6;
    double det_threshold = 1e-8;
    double perturbation = 1e-3;  // radius of the Sard-style re-randomization of y
    int max_perturbations = 8;
    double shell = 1e-3;         // relative width of the boundary shell
    int boundary_samples = 720;
    int extra_random_seeds = 0;
    unsigned seed = 1;
    int max_dim = 8;
};

namespace detail {

inline std::optional<VectorXd> newton_solve(const ProperNonlinearMap& f, const VectorXd& y, VectorXd x,
                                            double escape, const RootCountOptions& o) {
    VectorXd r = f(x) - y;
    for (int it = 0; it < o.max_iterations; ++it) {
        const MatrixXd j = f.jacobian(x);
        Eigen::FullPivLU<MatrixXd> lu(j);
        if (!lu.isInvertible()) return std::nullopt;
        const VectorXd dx = lu.solve(-r);
        double lambda = 1.0;
        VectorXd xn = x + dx;
        VectorXd rn = f(xn) - y;
        while (rn.norm() > r.norm() && lambda > 1e-6) {
            lambda *= 0.5;
            xn = x + lambda * dx;
            rn = f(xn) - y;
        }
        const double step = (xn - x).norm();
        x = std::move(xn);
        r = std::move(rn);
        if (!x.allFinite() || x.norm() > escape) return std::nullopt;
        if (step < o.step_tol || r.norm() == 0.0) break;
    }
    if (r.norm() < o.residual_tol) return x;
    return std::nullopt;
}

inline std::vector<VectorXd> seed_lattice(int dim, double radius, const RootCountOptions& o) {
    std::vector<VectorXd> seeds;
    const int m = o.seeds_per_axis;
    long total = 1;
    for (int i = 0; i < dim; ++i) total *= m;
    for (long idx = 0; idx < total; ++idx) {
        VectorXd x(dim);
        long rem = idx;
        for (int i = 0; i < dim; ++i) {
            const int k = static_cast<int>(rem % m);
            rem /= m;
            x(i) = m == 1 ? 0.0 : -radius + 2.0 * radius * k / (m - 1);
        }
        if (x.norm() <= radius * (1.0 + 1e-12)) seeds.push_back(std::move(x));
    }
    std::mt19937_64 gen(o.seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int s = 0; s < o.extra_random_seeds; ++s) {
        VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v(i) = nd(gen);
        seeds.push_back(radius * std::pow(ud(gen), 1.0 / dim) * v.normalized());
    }
    return seeds;
}

inline VectorXd perturb_target(const VectorXd& y, double scale, std::mt19937_64& gen) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    VectorXd v(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) v(i) = nd(gen);
    return y + scale * ud(gen) * v.normalized();
}

inline void check_square(const ProperNonlinearMap& f, const VectorXd& y) {
    if (f.dim_source != f.dim_target)
        throw Error(ErrorKind::RankMismatch, "degree needs equal source and target dimensions");
    if (y.size() != f.dim_target)
        throw Error(ErrorKind::RankMismatch, "target point has the wrong dimension");
}

}  // namespace detail

inline DegreeCertificate degree_root_count(const ProperNonlinearMap& f, double radius, const VectorXd& y,
                                           const RootCountOptions& o = {}) {
    detail::check_square(f, y);
    const int dim = f.dim_source;
    if (dim > o.max_dim) throw Error(ErrorKind::RankTooLarge, "root counting is limited to small dimensions");
    if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "ball radius must be positive");

    const auto boundary = sphere_samples(dim, radius, o.boundary_samples, o.seed);
    const auto seeds = detail::seed_lattice(dim, radius, o);
    std::mt19937_64 gen(o.seed ^ 0x9e3779b97f4a7c15ULL);

    VectorXd y_used = y;
    for (int attempt = 0; attempt <= o.max_perturbations; ++attempt) {
        const BoundaryMargin margin = boundary_margin(f.eval, y_used, boundary);
        if (!(margin.value > 0.0))
            throw BoundaryHitError("F - y vanishes on the sampled boundary sphere", 1.0, margin.argmin,
                                   margin.value);

        std::vector<RootRecord> roots;
        bool irregular = false;
        for (const auto& s : seeds) {
            auto x = detail::newton_solve(f, y_used, s, 10.0 * radius + 10.0, o);
            if (!x) continue;
            const double nx = x->norm();
            if (std::abs(nx - radius) <= o.shell * radius)
                throw Error(ErrorKind::SeedExhaustion,
                            "Newton converged to a root on the boundary shell; enlarge or shrink the ball");
            if (nx > radius) continue;
            const bool seen = std::any_of(roots.begin(), roots.end(), [&](const RootRecord& r) {
                return (r.x - *x).norm() <= o.dedup_tol;
            });
            if (seen) continue;
            const double det = f.jacobian(*x).determinant();
            if (std::abs(det) <= o.det_threshold) {
                irregular = true;
                break;
            }
            roots.push_back({*x, det > 0 ? 1 : -1, (f(*x) - y_used).norm(), det});
        }
        if (irregular) {
            y_used = detail::perturb_target(y, o.perturbation, gen);
            continue;
        }

        std::sort(roots.begin(), roots.end(), [](const RootRecord& a, const RootRecord& b) {
            return std::lexicographical_compare(a.x.data(), a.x.data() + a.x.size(), b.x.data(),
                                                b.x.data() + b.x.size());
        });
        DegreeCertificate c;
        c.method = "root_count";
        c.ball_radius = radius;
        c.target = y;
        c.target_used = y_used;
        nlohmann::json rj = nlohmann::json::array();
        for (const auto& r : roots) {
            c.degree += r.sign;
            rj.push_back({{"x", vector_to_json(r.x)}, {"sign", r.sign}, {"residual", r.residual}, {"det", r.det}});
        }
        c.evidence = {{"roots", rj},
                      {"margin", margin.value},
                      {"perturbations", attempt},
                      {"coverage", {{"seeds_per_axis", o.seeds_per_axis},
                                    {"seeds", seeds.size()},
                                    {"random_seeds", o.extra_random_seeds},
                                    {"boundary_samples", boundary.size()}}}};
        return c;
    }
    throw Error(ErrorKind::IrregularRoot,
                "a root with |det Jac| below the regularity threshold persisted after re-randomizing y");
}

// ---------------------------------------------------------------------------
// Winding number in the plane

struct WindingOptions {
    int initial_samples = 64;
    double max_angle_step = std::numbers::pi / 4.0;  // refinement target, below the pi/2 contract
    int max_samples = 1 << 20;
    double boundary_floor = 1e-12;
};

inline DegreeCertificate degree_winding_2d(const ProperNonlinearMap& f, double radius, const VectorXd& y,
                                           const WindingOptions& o = {}) {
    detail::check_square(f, y);
    if (f.dim_source != 2) throw Error(ErrorKind::RankMismatch, "winding number needs a planar map");
    if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "ball radius must be positive");

    struct Sample {
        double theta;
        Eigen::Vector2d w;
    };
    const auto at = [&](double th) {
        const VectorXd x = radius * Eigen::Vector2d(std::cos(th), std::sin(th));
        const Eigen::Vector2d w = f(x) - y;
        if (!(w.norm() > o.boundary_floor))
            throw BoundaryHitError("F - y vanishes on the boundary circle", 1.0, x, w.norm());
        return Sample{th, w};
    };
    const auto step = [](const Sample& a, const Sample& b) {
        return std::atan2(a.w.x() * b.w.y() - a.w.y() * b.w.x(), a.w.dot(b.w));
    };

    std::vector<Sample> cur;
    for (int k = 0; k <= o.initial_samples; ++k)
        cur.push_back(at(2.0 * std::numbers::pi * k / o.initial_samples));
    for (;;) {
        std::vector<Sample> next{cur.front()};
        bool refined = false;
        for (std::size_t k = 1; k < cur.size(); ++k) {
            if (std::abs(step(cur[k - 1], cur[k])) >= o.max_angle_step) {
                next.push_back(at(0.5 * (cur[k - 1].theta + cur[k].theta)));
                refined = true;
            }
            next.push_back(cur[k]);
        }
        cur = std::move(next);
        if (!refined) break;
        if (static_cast<int>(cur.size()) > o.max_samples)
            throw Error(ErrorKind::RefinementLimit, "boundary sampling did not resolve the winding");
    }

    double total = 0.0, max_step = 0.0, min_norm = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < cur.size(); ++k) {
        const double s = step(cur[k - 1], cur[k]);
        total += s;
        max_step = std::max(max_step, std::abs(s));
    }
    for (const auto& s : cur) min_norm = std::min(min_norm, s.w.norm());

    DegreeCertificate c;
    c.method = "winding";
    c.degree = static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
    c.ball_radius = radius;
    c.target = c.target_used = y;
    c.evidence = {{"samples", cur.size()},
                  {"total_angle", total},
                  {"max_angle_step", max_step},
                  {"margin", min_norm}};
    return c;
}

// ---------------------------------------------------------------------------
// Linear homotopy certificates

struct HomotopyOptions {
    int t_grid = 201;
    int boundary_samples = 720;
    double hit_tol = 1e-8;   // refined minimum below this is a boundary zero
    int refine_starts = 8;
    unsigned seed = 1;
};

namespace detail {

// Local minimization of |H(t, x) - y| over t in [0, 1] and x on the sphere,
// by projected gradient descent with finite differences.
inline std::pair<double, VectorXd> refine_boundary_min(const HomotopyFamily& h, const VectorXd& y,
                                                       double radius, double t, VectorXd x, double& value) {
    const auto phi = [&](double tt, const VectorXd& xx) { return (h(tt, xx) - y).squaredNorm(); };
    const auto project = [&](VectorXd v) { return VectorXd(radius * v.normalized()); };
    double f0 = phi(t, x);
    const double hstep = 1e-7;
    for (int it = 0; it < 500 && f0 > 0.0; ++it) {
        const double tp = std::min(1.0, t + hstep), tm = std::max(0.0, t - hstep);
        const double gt = (phi(tp, x) - phi(tm, x)) / (tp - tm);
        VectorXd gx(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            VectorXd p = x, m = x;
            p(i) += hstep * radius;
            m(i) -= hstep * radius;
            gx(i) = (phi(t, p) - phi(t, m)) / (2.0 * hstep * radius);
        }
        gx -= gx.dot(x) / (radius * radius) * x;  // tangent to the sphere
        double lambda = 1.0;
        const double gnorm2 = gt * gt + gx.squaredNorm();
        if (gnorm2 == 0.0) break;
        bool moved = false;
        while (lambda > 1e-14) {
            const double tn = std::clamp(t - lambda * gt, 0.0, 1.0);
            const VectorXd xn = project(x - lambda * gx);
            const double fn = phi(tn, xn);
            if (fn < f0) {
                t = tn;
                x = xn;
                f0 = fn;
                moved = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!moved) break;
    }
    value = std::sqrt(f0);
    return {t, x};
}

}  // namespace detail

/// Certifies (on samples) that H(t, ·) − y has no zero on the sphere for all
/// t in [0, 1]; the degree is then sign det(reference) with H(0, ·) = reference.
inline DegreeCertificate degree_homotopy_linear(const HomotopyFamily& family, const LinearMap& reference,
                                                double radius, const VectorXd& y, const HomotopyOptions& o = {}) {
    const int dim = reference.cols();
    if (reference.rows() != dim) throw Error(ErrorKind::RankMismatch, "reference map must be square");
    if (y.size() != dim) throw Error(ErrorKind::RankMismatch, "target point has the wrong dimension");
    const double det = reference.matrix().determinant();
    if (!reference.invertible()) throw Error(ErrorKind::SingularMap, "reference map is not invertible");
    if (!(radius > 0.0) || o.t_grid < 2) throw Error(ErrorKind::InvalidArgument, "bad homotopy grid");

    const auto boundary = sphere_samples(dim, radius, o.boundary_samples, o.seed);
    for (const auto& x : boundary) {
        const VectorXd lx = reference(x);
        if ((family(0.0, x) - lx).norm() > 1e-9 * (1.0 + lx.norm()))
            throw Error(ErrorKind::InvalidArgument, "homotopy does not start at the reference map");
    }

    struct Candidate {
        double value;
        double t;
        std::size_t b;
    };
    std::vector<Candidate> best;
    for (int k = 0; k < o.t_grid; ++k) {
        const double t = double(k) / (o.t_grid - 1);
        for (std::size_t b = 0; b < boundary.size(); ++b)
            best.push_back({(family(t, boundary[b]) - y).norm(), t, b});
    }
    const std::size_t keep = std::min<std::size_t>(best.size(), static_cast<std::size_t>(o.refine_starts));
    std::partial_sort(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(keep), best.end(),
                      [](const Candidate& a, const Candidate& b) { return a.value < b.value; });
    const double sampled = best.front().value;

    double margin = sampled, t_min = best.front().t;
    VectorXd x_min = boundary[best.front().b];
    for (std::size_t s = 0; s < keep; ++s) {
        double v = 0.0;
        auto [t, x] = detail::refine_boundary_min(family, y, radius, best[s].t, boundary[best[s].b], v);
        if (v < margin) {
            margin = v;
            t_min = t;
            x_min = x;
        }
    }
    if (!(margin > o.hit_tol))
        throw BoundaryHitError("homotopy is not admissible: F_t - y vanishes on the boundary sphere", t_min,
                               x_min, margin);

    DegreeCertificate c;
    c.method = "homotopy_linear";
    c.degree = det > 0 ? 1 : -1;
    c.ball_radius = radius;
    c.target = c.target_used = y;
    c.evidence = {{"margin", margin},
                  {"sampled_margin", sampled},
                  {"margin_at", {{"t", t_min}, {"x", vector_to_json(x_min)}}},
                  {"reference_det", det},
                  {"grids", {{"t_grid", o.t_grid}, {"boundary_samples", boundary.size()}}}};
    return c;
}

// ---------------------------------------------------------------------------
// Stabilization across approximation stages

enum class DegreeMethod { RootCount, Winding, Homotopy };

inline std::string to_string(DegreeMethod m) {
    switch (m) {
    case DegreeMethod::RootCount: return "root_count";
    case DegreeMethod::Winding: return "winding";
    case DegreeMethod::Homotopy: return "homotopy_linear";
    }
    return "unknown";
}

struct HomotopyPlan {
    HomotopyFamily family;
    LinearMap reference;
};

struct StabilizationOptions {
    std::function<DegreeMethod(const ApproximationStage&)> method;      // empty: root count
    std::function<HomotopyPlan(const ApproximationStage&)> homotopy;    // required for Homotopy
    std::function<double(const ApproximationStage&)> radius;           // empty: stage.r
    std::function<ProperNonlinearMap(const ApproximationStage&)> stage_map;  // empty: stage.restricted()
    RootCountOptions root;
    WindingOptions winding;
    HomotopyOptions homotopy_options;
};

struct StageDegree {
    int index = 0;
    std::optional<DegreeCertificate> certificate;
    std::string failure;
};

struct StabilizationReport {
    std::vector<StageDegree> stages;
    bool eventually_constant = false;  // constant over the final half of the stages
    std::optional<int> stable_degree;
};

inline StabilizationReport degree_stabilization(std::span<const ApproximationStage> stages, const VectorXd& y,
                                                const StabilizationOptions& o = {}) {
    StabilizationReport rep;
    for (const auto& st : stages) {
        StageDegree sd;
        sd.index = st.index;
        try {
            const ProperNonlinearMap fi = o.stage_map ? o.stage_map(st) : st.restricted();
            const VectorXd yi = y.size() == fi.dim_target ? y : VectorXd::Zero(fi.dim_target);
            const double r = o.radius ? o.radius(st) : st.r;
            const DegreeMethod m = o.method ? o.method(st) : DegreeMethod::RootCount;
            switch (m) {
            case DegreeMethod::RootCount: sd.certificate = degree_root_count(fi, r, yi, o.root); break;
            case DegreeMethod::Winding: sd.certificate = degree_winding_2d(fi, r, yi, o.winding); break;
            case DegreeMethod::Homotopy: {
                if (!o.homotopy) throw Error(ErrorKind::InvalidArgument, "no homotopy supplied for the stage");
                const HomotopyPlan plan = o.homotopy(st);
                sd.certificate = degree_homotopy_linear(plan.family, plan.reference, r, yi, o.homotopy_options);
                break;
            }
            }
        } catch (const Error& e) {
            sd.failure = e.what();
        }
        rep.stages.push_back(std::move(sd));
    }
    if (!rep.stages.empty()) {
        const std::size_t from = rep.stages.size() / 2;
        const auto& last = rep.stages.back();
        bool ok = last.certificate.has_value();
        for (std::size_t i = from; ok && i < rep.stages.size(); ++i)
            ok = rep.stages[i].certificate && rep.stages[i].certificate->degree == last.certificate->degree;
        rep.eventually_constant = ok;
        if (ok) rep.stable_degree = last.certificate->degree;
    }
    return rep;
}

inline nlohmann::json to_json(const StabilizationReport& r) {
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : r.stages) {
        nlohmann::json j = {{"index", s.index}};
        if (s.certificate) j["certificate"] = to_json(*s.certificate);
        else j["failure"] = s.failure;
        st.push_back(j);
    }
    nlohmann::json out = {{"stages", st}, {"eventually_constant", r.eventually_constant}};
    out["stable_degree"] = r.stable_degree ? nlohmann::json(*r.stable_degree) : nlohmann::json(nullptr);
    return out;
}

}  // namespace bottdeg
