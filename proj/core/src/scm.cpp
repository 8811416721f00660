#include "cfb/scm.hpp"

#include <algorithm>
#include <cmath>

namespace cfb {

namespace {

// treated mechanism of the curved fixture in the region below the diagonal:
// the outcome is the root in y of an implicit equation, bracketed on [1, 2].
// The slope 8(y-1)^2 of the bent-line family is tied to the bias term under
// the square root by the area law that makes the observational law triangular.
double m2_implicit(double y, double u1, double u2) {
    double t = y - 2.0;
    double s = y - 1.0;
    return u1 - u2 - 8.0 * s * s * std::fabs(1.0 - u1 - u2) - 1.0 +
           std::sqrt(t * t * (8.0 * s * s + 1.0));
}

double m2_treated_below_diagonal(double u1, double u2) {
    double lo = 1.0, hi = 2.0;
    double flo = m2_implicit(lo, u1, u2);
    if (flo <= 0.0) return lo;  // on the diagonal the root sits at the bracket edge
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = m2_implicit(mid, u1, u2);
        if (fm > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-10) break;
    }
    return 0.5 * (lo + hi);
}

constexpr double kBoxMullerFloor = 1e-300;

}  // namespace

Scm2D make_m1() {
    Scm2D scm;
    scm.name = "m1";
    scm.f = [](Arm a, Vec2 u) {
        return a == Arm::a1 ? u.x - u.y + 1.0 : u.x + u.y - 1.0;
    };
    scm.grad = [](Arm a, Vec2) {
        return a == Arm::a1 ? Vec2{1.0, -1.0} : Vec2{1.0, 1.0};
    };
    scm.support = {Interval{-1.0, 1.0}, Interval{0.0, 2.0}};
    return scm;
}

Scm2D make_m2() {
    Scm2D scm;
    scm.name = "m2";
    scm.f = [](Arm a, Vec2 u) {
        if (a == Arm::a0) return u.x + u.y - 1.0;
        if (u.y >= u.x) return u.x - u.y + 1.0;
        return m2_treated_below_diagonal(u.x, u.y);
    };
    scm.support = {Interval{-1.0, 1.0}, Interval{0.0, 2.0}};
    return scm;
}

Scm2D make_box_muller() {
    Scm2D scm;
    scm.name = "boxmuller";
    scm.f = [](Arm, Vec2 u) {
        // clamping keeps finite-difference probes just outside [0,1] well defined
        double u1 = std::clamp(u.x, kBoxMullerFloor, 1.0);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(M_PI * u.y);
    };
    // outcome is standard normal; bounds wide enough that the truncated mass
    // is below double-precision noise
    scm.support = {Interval{-8.0, 8.0}, Interval{-8.0, 8.0}};
    return scm;
}

Scm2D make_m_perp() {
    // smooth strictly increasing components with bounded, nonvanishing slopes
    MonotoneFn g1{[](double u) { return u + 0.1 * std::sin(M_PI * u); },
                  [](double u) { return 1.0 + 0.1 * M_PI * std::cos(M_PI * u); }};
    MonotoneFn g2{[](double u) { return std::exp(u); },
                  [](double u) { return std::exp(u); }};
    return make_m_perp(g1, g2);
}

Scm2D make_m_perp(MonotoneFn g1, MonotoneFn g2) {
    Scm2D scm;
    scm.name = "mperp";
    auto f1 = g1.fn;
    auto f2 = g2.fn;
    scm.f = [f1, f2](Arm a, Vec2 u) {
        return a == Arm::a1 ? f1(u.x) : -f2(u.y);
    };
    auto d1 = g1.deriv;
    auto d2 = g2.deriv;
    scm.grad = [d1, d2](Arm a, Vec2 u) {
        return a == Arm::a1 ? Vec2{d1(u.x), 0.0} : Vec2{0.0, -d2(u.y)};
    };
    scm.support = {Interval{-f2(1.0), -f2(0.0)}, Interval{f1(0.0), f1(1.0)}};
    return scm;
}

Scm1D make_m_tri() {
    Scm1D scm;
    scm.name = "mtri";
    scm.f = [](Arm a, double u) {
        double inc = u <= 0.5 ? std::sqrt(2.0 * u) : 2.0 - std::sqrt(2.0 * (1.0 - u));
        if (a == Arm::a1) return inc;
        // untreated arm mirrors the quantile map downward: strictly decreasing
        // from 1 at u=0 to -1 at u=1, inducing the triangular law on [-1, 1]
        return u <= 0.5 ? 1.0 - std::sqrt(2.0 * u) : std::sqrt(2.0 * (1.0 - u)) - 1.0;
    };
    scm.support = {Interval{-1.0, 1.0}, Interval{0.0, 2.0}};
    return scm;
}

double eval_f(const Scm2D& scm, Arm a, Vec2 u) { return scm.f(a, u); }

Vec2 grad_f(const Scm2D& scm, Arm a, Vec2 u, double fd_step) {
    if (scm.grad) return scm.grad(a, u);
    double h = fd_step;
    double fx1 = scm.f(a, {u.x + h, u.y});
    double fx0 = scm.f(a, {u.x - h, u.y});
    double fy1 = scm.f(a, {u.x, u.y + h});
    double fy0 = scm.f(a, {u.x, u.y - h});
    return {(fx1 - fx0) / (2.0 * h), (fy1 - fy0) / (2.0 * h)};
}

std::vector<double> sample_observational(const Scm2D& scm, Arm a, std::size_t n,
                                         std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 u{rng.uniform01(), rng.uniform01()};
        out.push_back(scm.f(a, u));
    }
    return out;
}

}  // namespace cfb
