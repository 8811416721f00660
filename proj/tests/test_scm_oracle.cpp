#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cfb/data.hpp"
#include "cfb/level_oracle.hpp"
#include "cfb/scm.hpp"

using namespace cfb;

namespace {

double phi(double y) { return std::exp(-0.5 * y * y) / std::sqrt(2.0 * M_PI); }
double Phi(double y) { return 0.5 * std::erfc(-y / std::sqrt(2.0)); }

// circular level sets with known curvature and arc length
Scm2D make_circle_scm(Vec2 center) {
    Scm2D scm;
    scm.name = "circle";
    scm.f = [center](Arm, Vec2 u) {
        double dx = u.x - center.x;
        double dy = u.y - center.y;
        return dx * dx + dy * dy;
    };
    scm.support = {Interval{0.0, 1.0}, Interval{0.0, 1.0}};
    return scm;
}

}  // namespace

TEST_CASE("piecewise-linear fixture evaluates and differentiates") {
    Scm2D m1 = make_m1();
    CHECK(eval_f(m1, Arm::a0, {0.25, 0.5}) == doctest::Approx(-0.25));
    CHECK(eval_f(m1, Arm::a1, {0.25, 0.5}) == doctest::Approx(0.75));
    CHECK(eval_f(m1, Arm::a0, {0.0, 0.0}) == -1.0);
    CHECK(eval_f(m1, Arm::a1, {1.0, 0.0}) == 2.0);

    Vec2 g0 = grad_f(m1, Arm::a0, {0.3, 0.7});
    Vec2 g1 = grad_f(m1, Arm::a1, {0.3, 0.7});
    CHECK(g0.x == 1.0);
    CHECK(g0.y == 1.0);
    CHECK(g1.x == 1.0);
    CHECK(g1.y == -1.0);

    CHECK(m1.support_of(Arm::a0).lo == -1.0);
    CHECK(m1.support_of(Arm::a1).hi == 2.0);
}

TEST_CASE("finite-difference gradients agree with analytic ones") {
    Scm2D m1 = make_m1();
    Scm2D no_grad = m1;
    no_grad.grad = {};
    for (Arm a : {Arm::a0, Arm::a1}) {
        Vec2 ga = grad_f(m1, a, {0.4, 0.6});
        Vec2 gn = grad_f(no_grad, a, {0.4, 0.6});
        CHECK(std::fabs(ga.x - gn.x) < 1e-6);
        CHECK(std::fabs(ga.y - gn.y) < 1e-6);
    }
}

TEST_CASE("curved fixture matches the linear one except below the diagonal") {
    Scm2D m1 = make_m1();
    Scm2D m2 = make_m2();
    // untreated arms are the same function
    for (double x : {0.1, 0.5, 0.9}) {
        for (double y : {0.2, 0.6}) {
            CHECK(eval_f(m2, Arm::a0, {x, y}) == eval_f(m1, Arm::a0, {x, y}));
        }
    }
    // treated arm agrees on and above the diagonal
    CHECK(eval_f(m2, Arm::a1, {0.3, 0.3}) == eval_f(m1, Arm::a1, {0.3, 0.3}));
    CHECK(eval_f(m2, Arm::a1, {0.2, 0.7}) == eval_f(m1, Arm::a1, {0.2, 0.7}));
    // continuous across the diagonal from below
    double above = eval_f(m2, Arm::a1, {0.4, 0.4});
    double below = eval_f(m2, Arm::a1, {0.4 + 1e-7, 0.4});
    CHECK(std::fabs(above - below) < 1e-4);
    // strictly curved in the interior below the diagonal
    double v = eval_f(m2, Arm::a1, {0.8, 0.2});
    CHECK(v > 1.0);
    CHECK(v < 2.0);
    CHECK(v != eval_f(m1, Arm::a1, {0.8, 0.2}));
}

TEST_CASE("one-latent fixture is the pair of triangular quantile maps") {
    Scm1D tri = make_m_tri();
    // treated arm: increasing quantile map of the triangle on [0, 2]
    CHECK(tri.f(Arm::a1, 0.125) == doctest::Approx(0.5));
    CHECK(tri.f(Arm::a1, 0.5) == doctest::Approx(1.0));
    CHECK(tri.f(Arm::a1, 0.875) == doctest::Approx(1.5));
    // untreated arm: decreasing, covering [-1, 1]
    CHECK(tri.f(Arm::a0, 0.0) == doctest::Approx(1.0));
    CHECK(tri.f(Arm::a0, 0.5) == doctest::Approx(0.0));
    CHECK(tri.f(Arm::a0, 1.0) == doctest::Approx(-1.0));
    CHECK(tri.f(Arm::a0, 0.125) == doctest::Approx(0.5));
    // each map pushes uniforms onto the triangular laws: check two quantiles
    CHECK(tri.f(Arm::a1, 0.02) == doctest::Approx(0.2));
    CHECK(tri.f(Arm::a0, 0.98) == doctest::Approx(-0.8));
}

TEST_CASE("gaussian fixture pushes uniforms onto a standard normal") {
    Scm2D bm = make_box_muller();
    std::vector<double> sample = sample_observational(bm, Arm::a0, 100000, 17);
    EmpiricalDist d = make_empirical(sample);
    double sup = 0.0;
    for (double y = -3.0; y <= 3.0; y += 0.05) {
        sup = std::max(sup, std::fabs(ecdf(d, y) - Phi(y)));
    }
    CHECK(sup < 0.01);
    // the map is identical in both arms
    CHECK(eval_f(bm, Arm::a0, {0.3, 0.8}) == eval_f(bm, Arm::a1, {0.3, 0.8}));
}

TEST_CASE("level tracing recovers circle circumference") {
    Scm2D circle = make_circle_scm({0.5, 0.5});
    OracleConfig cfg;
    for (double r : {0.2, 0.35}) {
        LevelSetPolyline ls = trace_level_set(circle, Arm::a0, r * r, cfg);
        CHECK(ls.components.size() == 1);
        CHECK(ls.total_length() == doctest::Approx(2.0 * M_PI * r).epsilon(1e-4));
    }
}

TEST_CASE("unreachable levels raise the dedicated errors") {
    Scm2D m1 = make_m1();
    // outside the declared support: rejected up front
    CHECK_THROWS_AS(trace_level_set(m1, Arm::a0, 5.0), DomainError);
    CHECK_THROWS_AS(observational_density(m1, Arm::a0, 5.0), NumericalError);

    // inside the declared support but invisible to a coarse grid: a bump much
    // narrower than the cell spacing leaves every node near zero
    Scm2D bump;
    bump.name = "bump";
    bump.f = [](Arm, Vec2 u) {
        double dx = u.x - 0.37, dy = u.y - 0.41;
        return std::exp(-(dx * dx + dy * dy) / 1e-4);
    };
    bump.support = {Interval{0.0, 1.0}, Interval{0.0, 1.0}};
    OracleConfig coarse;
    coarse.grid_resolution = 16;
    CHECK_THROWS_AS(trace_level_set(bump, Arm::a0, 0.9, coarse), EmptyLevelSetError);
}

TEST_CASE("shared node grid gives the same density as direct evaluation") {
    Scm2D m1 = make_m1();
    OracleConfig cfg;
    cfg.grid_resolution = 128;
    LevelGrid grid(m1, Arm::a0, cfg.grid_resolution);
    for (double y : {-0.5, 0.0, 0.25}) {
        CHECK(observational_density(grid, y, cfg) ==
              doctest::Approx(observational_density(m1, Arm::a0, y, cfg)).epsilon(1e-12));
    }
}

TEST_CASE("triangular observational densities") {
    Scm2D m1 = make_m1();
    OracleConfig cfg;
    cfg.grid_resolution = 256;
    for (double y : {-0.75, -0.25, 0.125, 0.5}) {
        CHECK(observational_density(m1, Arm::a0, y, cfg) ==
              doctest::Approx(1.0 - std::fabs(y)).epsilon(5e-3));
        CHECK(observational_density(m1, Arm::a1, y + 1.0, cfg) ==
              doctest::Approx(1.0 - std::fabs(y)).epsilon(5e-3));
    }
    std::vector<double> ys = {-0.5, 0.0, 0.5};
    std::vector<double> curve = observational_density_curve(m1, Arm::a0, ys, cfg);
    REQUIRE(curve.size() == 3);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        CHECK(curve[i] == doctest::Approx(1.0 - std::fabs(ys[i])).epsilon(5e-3));
    }
}

TEST_CASE("gaussian observational density matches the normal pdf") {
    Scm2D bm = make_box_muller();
    OracleConfig cfg;
    cfg.grid_resolution = 512;
    for (double y : {-2.0, -1.0, 0.5, 1.5}) {
        CHECK(std::fabs(observational_density(bm, Arm::a0, y, cfg) - phi(y)) < 0.005);
    }
}

TEST_CASE("counterfactual mean golden values") {
    OracleConfig cfg;
    cfg.grid_resolution = 257;
    CHECK(ecou_oracle(make_m1(), Arm::a0, 0.0, Arm::a1, cfg) ==
          doctest::Approx(1.0).epsilon(1e-3));
    CHECK(ecou_oracle(make_m2(), Arm::a0, 0.0, Arm::a1, cfg) ==
          doctest::Approx(1.114).epsilon(0.01));
    CHECK_THROWS_AS(ecou_oracle(make_m1(), Arm::a0, 0.0, Arm::a0, cfg), DomainError);
}

TEST_CASE("cross-independent fixture reduces to the observational mean") {
    Scm2D mp = make_m_perp();
    OracleConfig cfg;
    cfg.grid_resolution = 257;
    // treated outcome reads only the first latent, so conditioning on the
    // untreated outcome is vacuous and the query equals E[g1(U)]
    double expected = 0.5 + 0.2 / M_PI;
    CHECK(ecou_oracle(mp, Arm::a0, -1.5, Arm::a1, cfg) ==
          doctest::Approx(expected).epsilon(2e-3));
    // the reverse query equals E[-g2(U)] = -(e - 1)
    CHECK(ecou_oracle(mp, Arm::a1, 0.7, Arm::a0, cfg) ==
          doctest::Approx(-(std::exp(1.0) - 1.0)).epsilon(2e-3));
}

TEST_CASE("counterfactual density integrates to one") {
    Scm2D m1 = make_m1();
    OracleConfig cfg;
    cfg.grid_resolution = 257;
    DensityCurve dc = counterfactual_density(m1, Arm::a0, 0.0, Arm::a1, cfg);
    REQUIRE(dc.y.size() == dc.p.size());
    REQUIRE(dc.y.size() >= 2);
    double mass = 0.0;
    for (std::size_t i = 1; i < dc.y.size(); ++i) {
        mass += 0.5 * (dc.p[i] + dc.p[i - 1]) * (dc.y[i] - dc.y[i - 1]);
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("monte carlo cdf oracle") {
    Scm2D m1 = make_m1();
    CHECK(cdf_oracle(m1, Arm::a0, 0.0, 200000, 21) == doctest::Approx(0.5).epsilon(0.01));
    CHECK(cdf_oracle(m1, Arm::a0, -1.0, 10000, 21) == doctest::Approx(0.0).epsilon(1e-9));
    Scm2D bm = make_box_muller();
    CHECK(cdf_oracle(bm, Arm::a1, 1.0, 200000, 22) ==
          doctest::Approx(Phi(1.0)).epsilon(0.01));
}
