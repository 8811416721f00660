#pragma once

#include <vector>

#include "cfb/data.hpp"

namespace cfb {

enum class MonotoneSign { increasing, decreasing };

// quantile mechanism consistent with the sign: u -> F_a^{-1}(u) increasing,
// u -> F_a^{-1}(1-u) decreasing
double bgm_function(const EmpiricalDist& d_a, double u, MonotoneSign sign);

// counterfactual point prediction under a monotone one-latent model:
// increasing composes F_a^{-1}(F_{a'}(y')), decreasing flips the quantile level
double bgm_ecou(const EmpiricalDist& d_a, const EmpiricalDist& d_a_prime,
                double y_prime, MonotoneSign sign);

struct BgmCurve {
    std::vector<double> y_prime;
    std::vector<double> q_increasing;
    std::vector<double> q_decreasing;
};

// both sign conventions over a grid of evidence values
BgmCurve bgm_curve(const EmpiricalDist& d_a, const EmpiricalDist& d_a_prime,
                   const std::vector<double>& y_grid);

}  // namespace cfb
