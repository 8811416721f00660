#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfb/errors.hpp"
#include "cfb/rng.hpp"

namespace cfb {

// binary treatment indicator
enum class Arm : int { a0 = 0, a1 = 1 };

inline int arm_index(Arm a) { return static_cast<int>(a); }
inline Arm other_arm(Arm a) { return a == Arm::a0 ? Arm::a1 : Arm::a0; }
inline Arm arm_from_int(int v) {
    if (v != 0 && v != 1) throw DomainError("arm must be 0 or 1, got " + std::to_string(v));
    return static_cast<Arm>(v);
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm2(Vec2 a) { return std::sqrt(dot(a, a)); }

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
    bool contains_open(double v) const { return v > lo && v < hi; }
};

// Structural model with a scalar outcome driven by two independent uniform
// latents on the unit square. `grad` is optional; when absent, gradients fall
// back to central finite differences of `f`.
struct Scm2D {
    std::string name;
    std::function<double(Arm, Vec2)> f;
    std::function<Vec2(Arm, Vec2)> grad;  // may be empty
    std::array<Interval, 2> support{};    // indexed by arm

    const Interval& support_of(Arm a) const { return support[static_cast<std::size_t>(arm_index(a))]; }
};

// One-latent analogue used by the monotone-quantile baseline tests.
struct Scm1D {
    std::string name;
    std::function<double(Arm, double)> f;
    std::array<Interval, 2> support{};
};

// descriptors for the invertible components of the two-mechanism fixture
struct MonotoneFn {
    std::function<double(double)> fn;
    std::function<double(double)> deriv;
};

// analytic fixture catalogue -------------------------------------------------

// piecewise-linear mechanism pair with triangular observational laws
Scm2D make_m1();

// observationally equivalent to make_m1 but with a curved treated mechanism;
// the treated outcome solves an implicit equation by bisection on [1, 2]
Scm2D make_m2();

// Gaussian outcome via the Box-Muller map, identical in both arms
Scm2D make_box_muller();

// each arm reads a different latent coordinate, so cross-arm outcomes are
// independent and the counterfactual mean reduces to the observational mean
Scm2D make_m_perp();
Scm2D make_m_perp(MonotoneFn g1, MonotoneFn g2);

// one-latent mechanism pair inducing triangular laws; treated arm is the
// increasing quantile map, untreated arm the decreasing one
Scm1D make_m_tri();

// evaluation -----------------------------------------------------------------

double eval_f(const Scm2D& scm, Arm a, Vec2 u);

// analytic gradient when registered, otherwise central differences with the
// given step
Vec2 grad_f(const Scm2D& scm, Arm a, Vec2 u, double fd_step = 1e-6);

// n outcome draws of arm a, pushing forward uniform latents; deterministic in seed
std::vector<double> sample_observational(const Scm2D& scm, Arm a, std::size_t n,
                                         std::uint64_t seed);

}  // namespace cfb
