#include "cfb/bgm.hpp"

namespace cfb {

double bgm_function(const EmpiricalDist& d_a, double u, MonotoneSign sign) {
    return sign == MonotoneSign::increasing ? quantile(d_a, u) : quantile(d_a, 1.0 - u);
}

double bgm_ecou(const EmpiricalDist& d_a, const EmpiricalDist& d_a_prime,
                double y_prime, MonotoneSign sign) {
    double q = ecdf(d_a_prime, y_prime);
    // quantile() already sends level 0 to the sample minimum and 1 to the
    // maximum, which is the intended clamping at the ECDF extremes
    return sign == MonotoneSign::increasing ? quantile(d_a, q) : quantile(d_a, 1.0 - q);
}

BgmCurve bgm_curve(const EmpiricalDist& d_a, const EmpiricalDist& d_a_prime,
                   const std::vector<double>& y_grid) {
    BgmCurve curve;
    curve.y_prime = y_grid;
    curve.q_increasing.reserve(y_grid.size());
    curve.q_decreasing.reserve(y_grid.size());
    for (double y : y_grid) {
        curve.q_increasing.push_back(bgm_ecou(d_a, d_a_prime, y, MonotoneSign::increasing));
        curve.q_decreasing.push_back(bgm_ecou(d_a, d_a_prime, y, MonotoneSign::decreasing));
    }
    return curve;
}

}  // namespace cfb
