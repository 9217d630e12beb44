// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "bottdeg/bottdeg.hpp"
#include "support.hpp"

using namespace bottdeg;
namespace ts = testsupport;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class F>
double timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return seconds_since(t0);
}

// 1. cubic2 and square2 degrees by root counting and winding.
void planar_degrees(Outcome& o) {
    const VectorXd y = VectorXd::Zero(2);
    for (const auto& [f, expected] : {std::pair{cubic2(), -1}, std::pair{square2(), 0}}) {
        int root = 99, wind = 99;
        const double tr = timed([&] { root = degree_root_count(f, 3.0, y).degree; });
        const double tw = timed([&] { wind = degree_winding_2d(f, 3.0, y).degree; });
        o.detail << f.name << ": root " << root << " (" << tr << " s), winding " << wind << " (" << tw << " s); ";
        o.require(root == expected && wind == expected, f.name + " degree");
        o.require(tr < 1.0 && tw < 1.0, f.name + " runtime");
    }
}

// 2. Cyclic cubic maps on R^l: degree (−1)^{l−1}.
void cyclic_parity(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int l = 2; l <= 5; ++l) {
        const int expected = l % 2 ? 1 : -1;
        const double radius = std::sqrt(double(l)) + 1.0;
        const auto cert = degree_homotopy_linear(cyclic_involution_homotopy(l), LinearMap(cyclic_permutation(l)),
                                                 radius, VectorXd::Zero(l));
        const double margin = cert.evidence.at("margin").get<double>();
        o.detail << "l=" << l << ": " << cert.degree << " (margin " << margin << ")";
        o.require(cert.degree == expected && margin > 0.0, "homotopy l=" + std::to_string(l));
        if (l <= 4) {
            const int rc = degree_root_count(cyclic_map(l), radius, VectorXd::Zero(l)).degree;
            o.detail << " root " << rc;
            o.require(rc == expected, "root count l=" + std::to_string(l));
        }
        o.detail << "; ";
    }
    const double total = seconds_since(t0);
    o.detail << total << " s";
    o.require(total < 30.0, "runtime");
}

// 3. Straight-line homotopy rejected, involution homotopy accepted.
void homotopy_forensics(Outcome& o) {
    const VectorXd y = VectorXd::Zero(2);
    try {
        degree_homotopy_linear(straight_line_homotopy(cubic2(), LinearMap::identity(2)), LinearMap::identity(2), 10.0,
                               y);
        o.require(false, "straight-line homotopy was accepted");
    } catch (const BoundaryHitError& e) {
        const double s = 1.0 / std::sqrt(e.t());
        const double off = std::max(std::abs(std::abs(e.x()(0)) - s), std::abs(std::abs(e.x()(1)) - s));
        o.detail << "straight line: BoundaryHit at t=" << e.t() << ", x=(" << e.x()(0) << ", " << e.x()(1)
                 << "), t^{-1/2}=" << s << "; ";
        o.require(off < 0.05 * s && e.x()(0) * e.x()(1) < 0.0, "crossing location");
    }
    const auto cert = degree_homotopy_linear(cyclic_involution_homotopy(2), LinearMap(cyclic_permutation(2)), 3.0, y);
    const double margin = cert.evidence.at("margin").get<double>();
    o.detail << "involution: degree " << cert.degree << ", margin " << margin;
    o.require(cert.degree == -1 && margin > 0.0, "involution homotopy");
}

// 4. Pullback of the Bott element against the induced Bott element.
void pullback_identity(Outcome& o) {
    const auto f = cubic2();
    const TensorGrid source = TensorGrid::spectral(3.0, 121, 2, 1.0, 161);
    const TensorGrid coarse = TensorGrid::spectral(3.0, 24, 2, 2.5, 40);
    const TensorGrid fine = TensorGrid::spectral(3.0, 48, 2, 2.5, 80);
    const auto fns = gaussian_test_functions();
    for (const auto& tf : fns) {
        const SampledSection rhs = bott_element(tf.f, f, source);
        double res[2], tol[2];
        for (int k = 0; k < 2; ++k) {
            const SampledSection beta = bott_element(tf.f, k == 0 ? coarse : fine);
            res[k] = sup_distance(pullback(f, beta, source), rhs);
            tol[k] = beta.interpolation_tolerance();
        }
        const double ratio = res[0] / res[1];
        o.detail << tf.name << ": " << res[0] << " -> " << res[1] << " (x" << ratio << "); ";
        o.require(res[0] <= 10.0 * tol[0] && res[1] <= 10.0 * tol[1], tf.name + " tolerance");
        o.require(ratio >= 4.0, tf.name + " decay");
    }
    o.detail << fns.size() << " functions";
}

// 5. Clifford products and functional calculus against matrices.
void clifford_oracle(Outcome& o) {
    double worst_mul = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = ts::uniform_int(1, 6);
        const auto a = ts::random_element(n);
        const auto b = ts::random_element(n);
        worst_mul = std::max(worst_mul, (matrix_rep(a * b) - matrix_rep(a) * matrix_rep(b)).cwiseAbs().maxCoeff());
    }
    const std::vector<ScalarFunction> fns{
        [](double t) { return cplx(std::exp(-t * t)); },
        [](double t) { return cplx(t * std::exp(-t * t)); },
        [](double t) { return cplx(std::atan(t), std::sin(3 * t)); },
        [](double t) { return cplx(1.0 / (1.0 + t * t), t / (1.0 + t * t)); },
    };
    double worst_fc = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = ts::uniform_int(0, 5);
        const SpectralPoint p{ts::uniform(-3, 3), ts::gaussian_vector(n)};
        const auto& f = fns[std::size_t(trial) % fns.size()];
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(matrix_rep(spectral_element(p)));
        Eigen::VectorXcd fv(es.eigenvalues().size());
        for (Eigen::Index i = 0; i < fv.size(); ++i) fv(i) = f(es.eigenvalues()(i));
        const MatrixXcd oracle = es.eigenvectors() * fv.asDiagonal() * es.eigenvectors().adjoint();
        worst_fc = std::max(worst_fc, (matrix_rep(functional_calculus(f, p)) - oracle).cwiseAbs().maxCoeff());
    }
    o.detail << "product error " << worst_mul << " over 1000 pairs; functional calculus error " << worst_fc
             << " over 100 pairs";
    o.require(worst_mul <= 1e-10, "product");
    o.require(worst_fc <= 1e-8, "functional calculus");
}

// 6. Polar unitaries, containment and the distance mechanism.
void polar_distance(Outcome& o) {
    double worst_polar = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const MatrixXd l = ts::random_invertible(6);
        const MatrixXd u = polar_unitary(LinearMap(l)).matrix();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(l.transpose() * l);
        const double e1 = (u.transpose() * u - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff();
        const double e2 = (u * es.operatorSqrt() - l).cwiseAbs().maxCoeff() / std::max(1.0, l.norm());
        const double e3 = (polar_unitary(LinearMap(u)).matrix() - u).cwiseAbs().maxCoeff();
        worst_polar = std::max({worst_polar, e1, e2, e3});
        o.require(std::signbit(u.determinant()) == std::signbit(l.determinant()), "polar orientation");
    }
    int contain_ok = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = ts::uniform_int(3, 8);
        const int k1 = ts::uniform_int(1, n - 1);
        const int k2 = ts::uniform_int(1, k1);
        const MatrixXd big = ts::gaussian_matrix(n, k1);
        const Subspace v1 = Subspace::span(big);
        const Subspace v2 = Subspace::span(big * ts::gaussian_matrix(k1, k2));
        const Subspace w = Subspace::span(ts::gaussian_matrix(n, k2));
        contain_ok += dist_one_sided(v1, v2) == 0.0 && v1.contains(v2) && dist_one_sided(v1, w) > 1e-8 &&
                      !v1.contains(w);
    }
    // diag(1 + 1/k^2): subspaces V ⊃ E_i whose remaining directions lie in
    // E_i^⊥, where |l − l̄| = ε_i.
    const int n = 40;
    VectorXd d(n);
    for (int k = 1; k <= n; ++k) d(k - 1) = 1.0 + 1.0 / (k * k);
    const LinearMap l = LinearMap::diagonal(d);
    std::vector<Subspace> ex;
    for (int i = 0; i <= n; ++i) ex.push_back(Subspace::leading(n, i));
    const auto prof = asymptotic_unitarity_profile(l, ex, 0.1);
    double worst_ratio = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double eps = prof.tail_norms[std::size_t(i)];
        for (int trial = 0; trial < 10; ++trial) {
            const int extra = ts::uniform_int(1, 3);
            MatrixXd gen = MatrixXd::Zero(n, i + extra);
            gen.leftCols(i) = MatrixXd::Identity(n, i);
            gen.bottomRightCorner(n - i, extra) = ts::gaussian_matrix(n - i, extra);
            const double got = lemma_dist_check(l, Subspace::span(gen));
            worst_ratio = std::max(worst_ratio, got / eps);
        }
    }
    o.detail << "polar identity error " << worst_polar << "; containment " << contain_ok
             << "/100; max d(V, l̄ᵀl V)/ε " << worst_ratio;
    o.require(worst_polar <= 1e-10, "polar identities");
    o.require(contain_ok == 100, "containment");
    o.require(worst_ratio <= 4.0, "distance mechanism");
}

// 7. Net subspace on the Sobolev cubic; finite-approximation profiles.
void finite_approximation(Outcome& o) {
    const auto f = SobolevModel{2, 1, 8, 1.0}.map();
    const auto net = build_net_subspace(f, 1.0, 0.05, {2000, 1, false});
    const double err = projection_error(f, net.W, 1.0, {200, 1001, false});
    o.detail << "net " << net.net.size() << " points, dim W " << net.W.dim() << ", held-out projection error "
             << err << "; ";
    o.require(err <= 0.05 + 0.01, "projection error");
    const std::vector<int> ns{1, 2, 3, 4};
    const auto stages = sobolev_model_stages(2, 1, ns);
    const auto rep = check_fin_appro(stages, f);
    o.detail << "conditions density " << rep.density_ok << " ball " << rep.ball_ok << " convergence "
             << rep.convergence_ok << " unitarity " << rep.unitarity_ok;
    o.require(rep.passed(), "finite-approximation conditions");
}

// 8. Fourier cube and shift.
void fourier_exactness(Outcome& o) {
    const auto c = cubic_pointwise(FourierState::cosine(1.0, 1, 1, 1));
    const auto s = cubic_pointwise(FourierState::sine(1.0, 1, 1, 1));
    const double trig = std::max(
        c.max_abs_diff(0.75 * FourierState::cosine(1.0, 1, 3, 1) + 0.25 * FourierState::cosine(1.0, 1, 3, 3)),
        s.max_abs_diff(0.75 * FourierState::sine(1.0, 1, 3, 1) - 0.25 * FourierState::sine(1.0, 1, 3, 3)));
    double sampled = 0.0, iso = 0.0, cycle = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int l = 2 + trial % 4;
        FourierState a(double(l), 1, 5);
        a.set(0, ts::uniform(-1, 1));
        for (int k = 1; k <= 5; ++k) a.set(k, {ts::uniform(-1, 1), ts::uniform(-1, 1)});
        std::vector<double> vals;
        for (int j = 0; j < 64; ++j) vals.push_back(std::pow(a.value(a.period() * j / 64.0), 3));
        sampled = std::max(sampled, FourierState::from_samples(vals, a.period(), 1, 15).max_abs_diff(cubic_pointwise(a)));
        iso = std::max(iso, std::abs(shift(a, 1).sobolev_norm() - a.sobolev_norm()));
        FourierState it = a;
        for (int k = 0; k < l; ++k) it = shift(it, 1);
        cycle = std::max({cycle, it.max_abs_diff(a), shift(a, l).max_abs_diff(a)});
    }
    o.detail << "triple angle " << trig << ", sampled " << sampled << ", isometry " << iso << ", T^l " << cycle;
    o.require(trig <= 1e-12, "triple angle");
    o.require(sampled <= 1e-9, "sampled cube");
    o.require(iso <= 1e-12 && cycle <= 1e-12, "shift");
}

// 9. Degree stabilization on the Sobolev involution model.
void stabilization(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> ns{1, 2};
    const auto stages = sobolev_model_stages(2, 1, ns);
    const auto rep = degree_stabilization(stages, VectorXd::Zero(0), sobolev_stabilization_options(2, 1));
    for (std::size_t i = 0; i < rep.stages.size(); ++i) {
        const auto& st = rep.stages[i];
        o.detail << "n=" << ns[i] << " dim " << stages[i].dim() << ": "
                 << (st.certificate ? std::to_string(st.certificate->degree) : st.failure) << "; ";
        o.require(st.certificate && st.certificate->degree == -1, "stage " + std::to_string(i));
    }
    o.require(rep.eventually_constant && rep.stable_degree == -1, "constant degree");
    const auto spot = degree_stabilization(std::span(stages).first(1), VectorXd::Zero(0),
                                           sobolev_stabilization_options(2, 1, DegreeMethod::RootCount));
    const bool spot_ok = spot.stages[0].certificate && spot.stages[0].certificate->degree == -1;
    o.detail << "root-count spot check n=1: " << (spot_ok ? "-1" : "failed") << "; ";
    o.require(spot_ok, "root-count spot check");
    const double total = seconds_since(t0);
    o.detail << total << " s";
    o.require(total < 300.0, "runtime");
}

// 10. Commutativity defect on diag(1 + 1/k^2) and the diag(2) control.
void commutativity_decay(Outcome& o) {
    const int n = 20;
    const auto stages_for = [n](const VectorXd& d, int count) {
        std::vector<ApproximationStage> out;
        for (int i = 0; i < count; ++i) {
            ApproximationStage s;
            s.index = i;
            s.W_source = Subspace::leading(n, i + 1);
            s.W_target = s.W_source;
            s.l = LinearMap::diagonal(d);
            s.F = linear_proper_map(s.l);
            out.push_back(std::move(s));
        }
        return out;
    };
    const auto fns = default_test_functions();
    VectorXd d(n);
    for (int k = 1; k <= n; ++k) d(k - 1) = 1.0 + 1.0 / (k * k);
    const auto stages = stages_for(d, 12);
    std::vector<double> seq;
    for (int a = 0; a + 2 < 12; ++a) seq.push_back(asymptotic_commutativity_defect(stages, fns, a, a + 1, a + 2).against_standard);
    bool monotone = true;
    int first_below = -1;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0 && seq[i] > seq[i - 1]) monotone = false;
        if (first_below < 0 && seq[i] < 0.05) first_below = int(i);
    }
    const auto control = stages_for(VectorXd::Constant(n, 2.0), 6);
    double control_min = std::numeric_limits<double>::infinity();
    for (int a = 0; a + 2 < 6; ++a)
        control_min = std::min(control_min, asymptotic_commutativity_defect(control, fns, a, a + 1, a + 2).against_standard);
    o.detail << "defects";
    for (double v : seq) o.detail << " " << v;
    o.detail << "; first below 0.05 at triple (" << first_below << "," << first_below + 1 << "," << first_below + 2
             << "); diag(2) minimum " << control_min;
    o.require(monotone, "monotone");
    o.require(first_below >= 0 && first_below + 2 < 10, "below 0.05 within 10 stages");
    o.require(control_min > 0.5, "control");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"AC1 planar degrees by root count and winding", planar_degrees},
        {"AC2 cyclic parity", cyclic_parity},
        {"AC3 homotopy admissibility", homotopy_forensics},
        {"AC4 pullback identity", pullback_identity},
        {"AC5 Clifford oracle", clifford_oracle},
        {"AC6 polar and distance suite", polar_distance},
        {"AC7 finite approximation", finite_approximation},
        {"AC8 Fourier exactness", fourier_exactness},
        {"AC9 degree stabilization", stabilization},
        {"AC10 commutativity decay", commutativity_decay},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
