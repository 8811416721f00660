#pragma once

#include <cstdint>
#include <vector>

#include "cfb/scm.hpp"

namespace cfb {

struct OracleConfig {
    int grid_resolution = 512;
    double refine_tol = 1e-8;
    double min_component_length = 1e-6;
    double fd_step = 1e-6;  // for finite-difference gradients along the level set
};

// Piecewise-linear approximation of one level set {u : f(a,u) = level} inside
// the closed unit square. Components touching the boundary are clipped there.
struct LevelSetPolyline {
    Arm arm = Arm::a0;
    double level = 0.0;
    std::vector<std::vector<Vec2>> components;

    double total_length() const;
    std::size_t vertex_count() const;
};

// Node values of f(a, .) sampled on a (resolution+1)^2 grid. Sharing one grid
// across many levels is what makes density curves cheap.
class LevelGrid {
  public:
    LevelGrid(const Scm2D& scm, Arm arm, int resolution);

    const Scm2D& scm() const { return *scm_; }
    Arm arm() const { return arm_; }
    int resolution() const { return res_; }
    double node(int i, int j) const { return values_[idx(i, j)]; }
    double coord(int i) const { return static_cast<double>(i) / res_; }

  private:
    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(i) * (res_ + 1) + j;
    }
    const Scm2D* scm_;
    Arm arm_;
    int res_;
    std::vector<double> values_;
};

// marching squares with per-edge bisection refinement; throws
// EmptyLevelSetError when no grid edge brackets the level
LevelSetPolyline trace_level_set(const Scm2D& scm, Arm a, double level,
                                 const OracleConfig& cfg = {});
LevelSetPolyline trace_level_set(const LevelGrid& grid, double level,
                                 const OracleConfig& cfg = {});

// observational outcome density: line integral of 1/|grad f| along the level set
double observational_density(const Scm2D& scm, Arm a, double y,
                             const OracleConfig& cfg = {});
double observational_density(const LevelGrid& grid, double y,
                             const OracleConfig& cfg = {});

// density at many levels off one shared node grid
std::vector<double> observational_density_curve(const Scm2D& scm, Arm a,
                                                const std::vector<double>& ys,
                                                const OracleConfig& cfg = {});

// counterfactual mean outcome of arm a given evidence Y = y_prime under arm
// a_prime: ratio of the f(a,.)-weighted to the unweighted level-set integral
double ecou_oracle(const Scm2D& scm, Arm a_prime, double y_prime, Arm a,
                   const OracleConfig& cfg = {});

struct DensityCurve {
    std::vector<double> y;
    std::vector<double> p;
};

// counterfactual outcome density as a binned pushforward of the level-set
// measure, normalized to unit trapezoid integral over the grid
DensityCurve counterfactual_density(const Scm2D& scm, Arm a_prime, double y_prime,
                                    Arm a, const std::vector<double>& y_grid,
                                    const OracleConfig& cfg = {});
// same, on a 201-point grid spanning the arm-a support
DensityCurve counterfactual_density(const Scm2D& scm, Arm a_prime, double y_prime,
                                    Arm a, const OracleConfig& cfg = {});

// Monte Carlo observational CDF
double cdf_oracle(const Scm2D& scm, Arm a, double y, std::size_t n_mc,
                  std::uint64_t seed);

}  // namespace cfb
