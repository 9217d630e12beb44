#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bottdeg/bott.hpp"
#include "bottdeg/maps.hpp"
#include "support.hpp"

using namespace bottdeg;
using Catch::Approx;
namespace ts = testsupport;

namespace {

MatrixXd rotation(double t) {
    MatrixXd r(2, 2);
    r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    return r;
}

// Pullback residual for one function: F^*(β(f)) against β_F(f).
struct Residual {
    double residual;
    double tolerance;
};

Residual pullback_residual(const ProperNonlinearMap& f, const ScalarFunction& fn, const TensorGrid& source,
                  const TensorGrid& target) {
    const SampledSection beta = bott_element(fn, target);
    const SampledSection lhs = pullback(f, beta, source);
    const SampledSection rhs = bott_element(fn, f, source);
    return {sup_distance(lhs, rhs), beta.interpolation_tolerance()};
}

std::vector<ApproximationStage> diagonal_stages(const VectorXd& d, int count) {
    const int n = static_cast<int>(d.size());
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
}

} // namespace

TEST_CASE("induced Clifford operator examples", "[bott][induced]") {
    const VectorXd v = Eigen::Vector2d(0.3, -1.7);
    CHECK((induced_clifford_operator(identity_map(2), v) - v).norm() == 0.0);
    const auto f = cubic2();
    CHECK((induced_clifford_operator(f, v) - f(v)).norm() < 1e-15);
    // l̄ = I for a positive diagonal l, so C_F = l itself.
    const auto d = linear_proper_map(LinearMap::diagonal(Eigen::Vector2d(2.0, 1.0)));
    CHECK((induced_clifford_operator(d, v) - Eigen::Vector2d(2.0 * v(0), v(1))).norm() < 1e-15);
    const auto r = linear_proper_map(LinearMap(rotation(0.4) * Eigen::Vector2d(3.0, 0.5).asDiagonal()));
    CHECK((induced_clifford_operator(r, v) - Eigen::Vector2d(3.0 * v(0), 0.5 * v(1))).norm() < 1e-12);
}

TEST_CASE("Bott element examples", "[bott][element]") {
    const TensorGrid g = TensorGrid::spectral(2.0, 5, 2, 1.0, 3);
    const auto odd = bott_element([](double t) { return cplx(t * std::exp(-t * t)); }, g);
    std::size_t origin = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.coords(i).norm() == 0.0) origin = i;
    CHECK(odd.value(origin).max_abs() == 0.0);

    const ScalarFunction gauss = [](double t) { return cplx(std::exp(-t * t)); };
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK((bott_element(gauss, identity_map(2), g).value(i) - functional_calculus(gauss, g.point(i)))
                  .max_abs() == 0.0);

    // F(1, -1) = 0 for the cubic map, so the value at (0, (1, -1)) is exp(0) = 1.
    const TensorGrid g2 = TensorGrid::spectral(1.0, 3, 2, 1.0, 3);
    const auto b = bott_element(gauss, cubic2(), g2);
    bool seen = false;
    for (std::size_t i = 0; i < g2.size(); ++i) {
        const SpectralPoint p = g2.point(i);
        if (p.x == 0.0 && p.v(0) == 1.0 && p.v(1) == -1.0) {
            CHECK((b.value(i) - CliffordElement::scalar(3, 1.0)).max_abs() < 1e-15);
            seen = true;
        }
    }
    CHECK(seen);
}

TEST_CASE("Bott elements are multiplicative in f", "[bott][element][property]") {
    const TensorGrid g = TensorGrid::spectral(2.0, 7, 2, 1.5, 7);
    const ScalarFunction f = [](double t) { return cplx(std::exp(-t * t)); };
    const ScalarFunction h = [](double t) { return cplx(t / (1 + t * t), 0.5 * t * t); };
    const ScalarFunction fh = [&](double t) { return f(t) * h(t); };
    const auto fmap = cubic2();
    const auto lhs = bott_element(fh, fmap, g);
    const auto rhs = bott_element(f, fmap, g) * bott_element(h, fmap, g);
    CHECK((lhs - rhs).sup_norm() < 1e-9);
}

TEST_CASE("pullback along the identity is re-interpolation", "[bott][pullback]") {
    const ScalarFunction f = [](double t) { return cplx(std::exp(-t * t)); };
    const TensorGrid target = TensorGrid::spectral(3.0, 13, 2, 2.0, 21);
    const TensorGrid source = TensorGrid::spectral(3.0, 13, 2, 1.3, 9);
    const auto u = bott_element(f, target);
    const auto w = pullback(identity_map(2), u, source);
    CHECK(sup_distance(w, bott_element(f, source)) <= u.interpolation_tolerance());
}

TEST_CASE("pullback along a rotation fixes the coordinate section", "[bott][pullback]") {
    const auto rot = linear_proper_map(LinearMap(rotation(0.7)), "rotation");
    const ExactSection coord = [](const SpectralPoint& p) { return CliffordElement::vector(3, p.v, 1); };
    const TensorGrid source = TensorGrid::spectral(1.0, 3, 2, 1.0, 5);
    const auto w = pullback(rot, coord, 1.0, source);
    for (std::size_t i = 0; i < source.size(); ++i)
        CHECK((w.value(i) - coord(source.point(i))).max_abs() < 1e-14);

    // The coordinate section is linear in v, so the sampled form is exact too.
    const TensorGrid target = TensorGrid::spectral(1.0, 3, 2, 1.5, 7);
    std::vector<CliffordElement> vals;
    for (std::size_t i = 0; i < target.size(); ++i) vals.push_back(coord(target.point(i)));
    const SampledSection u(1.0, target, vals, Subspace::leading(2, 2));
    const auto ws = pullback(rot, u, source);
    CHECK(sup_distance(ws, w) < 1e-14);
}

TEST_CASE("pullback is a *-homomorphism node-wise", "[bott][pullback][property]") {
    const ScalarFunction f = [](double t) { return cplx(std::exp(-t * t), 0.2 * t); };
    const ScalarFunction h = [](double t) { return cplx(t * std::exp(-t * t)); };
    SECTION("node-aligned map, sampled sections") {
        const TensorGrid g = TensorGrid::spectral(2.0, 9, 2, 1.5, 9);
        const auto u = bott_element(f, g);
        const auto v = bott_element(h, g);
        const auto sw = swap_map();
        const auto lhs = pullback(sw, u * v, g);
        const auto rhs = pullback(sw, u, g) * pullback(sw, v, g);
        CHECK((lhs - rhs).sup_norm() < 1e-9);
        CHECK((pullback(sw, u.adjoint(), g) - pullback(sw, u, g).adjoint()).sup_norm() < 1e-12);
        CHECK(pullback(sw, u, g).sup_norm() <= u.sup_norm() + u.interpolation_tolerance());
    }
    SECTION("nonlinear map, exact sections") {
        const auto fm = cubic2();
        const TensorGrid g = TensorGrid::spectral(2.0, 7, 2, 1.0, 7);
        const ExactSection u = [&](const SpectralPoint& p) { return functional_calculus(f, p); };
        const ExactSection v = [&](const SpectralPoint& p) { return functional_calculus(h, p); };
        const ExactSection uv = [&](const SpectralPoint& p) { return u(p) * v(p); };
        const auto lhs = pullback(fm, uv, 2.0, g);
        const auto rhs = pullback(fm, u, 2.0, g) * pullback(fm, v, 2.0, g);
        CHECK((lhs - rhs).sup_norm() < 1e-9);
    }
    SECTION("non-unitary linear part") {
        const auto lm = linear_proper_map(LinearMap(rotation(0.3) * Eigen::Vector2d(2.0, 0.7).asDiagonal()));
        const TensorGrid g = TensorGrid::spectral(2.0, 5, 2, 1.0, 5);
        const ExactSection u = [&](const SpectralPoint& p) { return functional_calculus(f, p); };
        const ExactSection v = [&](const SpectralPoint& p) { return functional_calculus(h, p); };
        const ExactSection uv = [&](const SpectralPoint& p) { return u(p) * v(p); };
        CHECK((pullback(lm, uv, 2.0, g) - pullback(lm, u, 2.0, g) * pullback(lm, v, 2.0, g)).sup_norm() < 1e-9);
        // F^*(β(f)) = β_F(f) holds exactly for closed-form sections.
        CHECK(sup_distance(pullback(lm, u, 2.0, g), bott_element(f, lm, g)) < 1e-12);
    }
}

TEST_CASE("pullback reports grids that do not cover the image", "[bott][pullback][errors]") {
    const TensorGrid target = TensorGrid::spectral(1.0, 3, 2, 1.0, 5);
    const TensorGrid source = TensorGrid::spectral(1.0, 3, 2, 1.0, 5);
    const auto u = bott_element([](double t) { return cplx(std::exp(-t * t)); }, target);
    try {
        pullback(cubic2(), u, source);
        FAIL("expected GridCoverage");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GridCoverage);
    }
}

TEST_CASE("pullback of the Bott element equals the induced Bott element for the cubic map", "[bott][pullback]") {
    const auto f = cubic2();
    // Even node counts put a cell midpoint at the origin on every target
    // grid, and the source grid contains the origin and F(0) = 0.
    const TensorGrid source = TensorGrid::spectral(3.0, 121, 2, 1.0, 161);
    for (const auto& tf : gaussian_test_functions()) {
        const auto coarse = pullback_residual(f, tf.f, source, TensorGrid::spectral(3.0, 24, 2, 2.5, 40));
        const auto fine = pullback_residual(f, tf.f, source, TensorGrid::spectral(3.0, 48, 2, 2.5, 80));
        INFO(tf.name << " coarse " << coarse.residual << " tol " << coarse.tolerance << " fine "
                     << fine.residual << " tol " << fine.tolerance);
        CHECK(coarse.residual <= 10.0 * coarse.tolerance);
        CHECK(fine.residual <= 10.0 * fine.tolerance);
        CHECK(fine.residual * 4.0 <= coarse.residual);
    }
}

TEST_CASE("split-map compatibility at a finite stage", "[bott][sublemma]") {
    // F^0(w', u') = F_i(w') + u' with l = I: pulling back the Bott element of
    // the larger space equals the Bott extension of the pulled-back element.
    const auto fi = cubic2();
    const auto f0 = direct_sum(fi, LinearMap::identity(1));
    const ScalarFunction f = [](double t) { return cplx(std::exp(-t * t)); };
    const TensorGrid source = TensorGrid::spectral(2.0, 5, 3, 1.0, 9);
    const TensorGrid target = TensorGrid::spectral(2.0, 5, 3, 2.0, 33);
    const auto beta = bott_element(f, target);
    const auto rhs = pullback(f0, beta, source);
    std::vector<CliffordElement> lhs_vals;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const SpectralPoint p = source.point(i);
        VectorXd w(3);
        w << induced_clifford_operator(fi, p.v.head(2)), p.v(2);
        lhs_vals.push_back(functional_calculus(f, {p.x, w}));
    }
    const SampledSection lhs(2.0, source, lhs_vals, Subspace::leading(3, 3));
    CHECK(sup_distance(lhs, rhs) <= beta.interpolation_tolerance());
}

TEST_CASE("window truncation", "[bott][window]") {
    const TensorGrid g = TensorGrid::spectral(3.0, 13, 2, 3.0, 13);
    const auto one = bott_element([](double) { return cplx(1.0); }, g);
    const auto cut = window_truncate(one, 1.0, 2.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double rho = g.coords(i).norm();
        if (rho >= 2.0) CHECK(cut.value(i).max_abs() == 0.0);
        if (rho <= 1.0) CHECK((cut.value(i) - one.value(i)).max_abs() == 0.0);
    }
    CHECK(cut.sup_norm() <= one.sup_norm());

    const auto narrow = bott_element(bump(0.5), g);
    CHECK(sup_distance(window_truncate(narrow, 0.6, 1.0), narrow) == 0.0);

    const ScalarFunction gauss = [](double t) { return cplx(std::exp(-t * t)); };
    const auto u = bott_element(gauss, g);
    const double r_in = 1.5;
    const double bound = u.decay_residual(r_in);
    CHECK(sup_distance(window_truncate(u, r_in, 2.5), u) <= bound + 1e-15);
    CHECK(bound == Approx(std::exp(-r_in * r_in)).epsilon(1e-12));

    try {
        window_truncate(u, 2.0, 2.0);
        FAIL("expected BadWindow");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::BadWindow);
    }
}

TEST_CASE("section JSON round trip and tolerance", "[bott][json]") {
    const TensorGrid g = TensorGrid::spectral(2.0, 4, 1, 1.0, 3);
    const auto u = bott_element([](double t) { return cplx(std::exp(-t * t), t); }, g);
    const auto back = SampledSection::from_json(u.to_json());
    CHECK(sup_distance(u, back) == 0.0);
    CHECK(back.r() == u.r());

    // Second differences of a linear section vanish.
    std::vector<CliffordElement> vals;
    for (std::size_t i = 0; i < g.size(); ++i) vals.push_back(spectral_element(g.point(i)));
    CHECK(SampledSection(2.0, g, vals, Subspace::leading(1, 1)).interpolation_tolerance() < 1e-15);
}

TEST_CASE("block operator of the induced Clifford operator", "[bott][defect]") {
    const int n = 4;
    const Subspace block = Subspace::span(ts::gaussian_matrix(n, 2));
    const MatrixXd t = induced_block_operator(LinearMap(ts::random_orthogonal(n)), block);
    CHECK((t - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    const MatrixXd d = induced_block_operator(LinearMap::diagonal(Eigen::Vector4d(1.1, 1.05, 1, 3)),
                                              Subspace::coordinate(n, std::vector<int>{1, 3}));
    CHECK((d - Eigen::Vector2d(1.05, 3.0).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projection diagram defect", "[bott][defect]") {
    const auto fns = default_test_functions();
    const Subspace ea = Subspace::leading(4, 1);
    const Subspace eb = Subspace::leading(4, 3);
    CHECK(projection_diagram_defect(LinearMap(ts::random_orthogonal(4)), ea, eb, fns) < 1e-8);

    const LinearMap l = LinearMap::diagonal(Eigen::Vector4d(1.1, 1.05, 1.0, 1.0));
    std::vector<Subspace> ex;
    for (int i = 0; i <= 4; ++i) ex.push_back(Subspace::leading(4, i));
    const auto prof = asymptotic_unitarity_profile(l, ex, 0.5);
    const double eps = prof.tail_norms[1];
    const double d = projection_diagram_defect(l, ea, eb, fns);
    CHECK(d > 0.0);
    CHECK(d <= 4.0 * eps);

    const LinearMap two = LinearMap::diagonal(VectorXd::Constant(4, 2.0));
    CHECK(projection_diagram_defect(two, ea, eb, fns) > 0.5);
    CHECK_THROWS_AS(projection_diagram_defect(l, eb, ea, fns), Error);
}

TEST_CASE("asymptotic commutativity defect", "[bott][defect]") {
    const auto fns = default_test_functions();
    const int n = 20;
    VectorXd d(n);
    for (int k = 1; k <= n; ++k) d(k - 1) = 1.0 + 1.0 / (k * k);
    const auto stages = diagonal_stages(d, 12);
    double prev = std::numeric_limits<double>::infinity();
    for (int a = 0; a + 2 < 12; ++a) {
        const auto def = asymptotic_commutativity_defect(stages, fns, a, a + 1, a + 2);
        CHECK(def.twisted < 1e-12);
        CHECK(def.against_standard <= prev);
        prev = def.against_standard;
    }
    CHECK(prev < 0.05);

    const auto control = diagonal_stages(VectorXd::Constant(n, 2.0), 6);
    for (int a = 0; a + 2 < 6; ++a)
        CHECK(asymptotic_commutativity_defect(control, fns, a, a + 1, a + 2).against_standard > 0.5);

    std::vector<ApproximationStage> unitary = diagonal_stages(VectorXd::Ones(n), 4);
    const MatrixXd q = ts::random_orthogonal(n);
    for (auto& s : unitary) s.l = LinearMap(q);
    const auto u = asymptotic_commutativity_defect(unitary, fns, 0, 1, 3);
    CHECK(u.twisted < 1e-10);
    CHECK(u.against_standard < 1e-10);

    std::vector<ApproximationStage> broken = diagonal_stages(d, 3);
    broken[2].W_source = Subspace::coordinate(n, std::vector<int>{5, 6, 7});
    try {
        asymptotic_commutativity_defect(broken, fns, 0, 1, 2);
        FAIL("expected NotNested");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotNested);
    }
}

TEST_CASE("scalar plus vector norm matches the matrix representation", "[bott][norm]") {
    for (int trial = 0; trial < 50; ++trial) {
        const int n = ts::uniform_int(1, 6);
        const cplx alpha{ts::uniform(-2, 2), ts::uniform(-2, 2)};
        const VectorXd p = ts::gaussian_vector(n);
        const VectorXd q = trial % 5 == 0 ? VectorXd(2.0 * p) : ts::gaussian_vector(n);
        CliffordElement a = CliffordElement::vector(n, p) + cplx{0, 1} * CliffordElement::vector(n, q);
        a[0] += alpha;
        CHECK(scalar_vector_norm(alpha, p, q) == Approx(cl_norm(a)).epsilon(1e-12));
    }
}
