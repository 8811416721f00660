#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfb/apid.hpp"
#include "cfb/data.hpp"

namespace cfb {

// Hyperparameters of the three-stage bound optimization. Defaults are the
// full-scale configuration; desk_preset() shrinks the batch and the last
// stage for quick runs.
struct TrainConfig {
    double lr = 0.01;
    int batch = 32;
    int n_burnin = 500;
    int n_query = 100;
    int n_curv_query = 500;
    double eps2 = 0.25;          // augmentation variance
    double sigma2_noise = 1e-6;  // outcome noise regularization
    double ema_gamma = 0.99;
    double lambda_q = 1.0;
    double lambda_kappa = 0.0;
    std::uint64_t seed = 0;
    double tol = 1e-4;   // fixed-point tolerance
    int max_iter = 200;  // fixed-point iteration cap
    bool curvature_absolute = true;
    int n_blocks = 15;
    int hidden_flow = 5;
    int hidden_aug = 5;
    double lipschitz_target = 0.97;
    int eval_batch = 256;  // draws for the final bound evaluation
};

TrainConfig full_preset();
TrainConfig desk_preset();

enum class BoundSide { Upper, Lower };
enum class TrainStage { BurnIn, Query, CurvatureQuery };

const char* stage_name(TrainStage s);

// One logged optimization step of one trained entity ("arm0"/"arm1" during
// burn-in, "upper"/"lower" afterwards). Inactive losses are NaN.
struct IterationRecord {
    int iteration = 0;  // index within its stage
    TrainStage stage = TrainStage::BurnIn;
    std::string entity;
    double loss_nll = 0.0;
    double loss_w = 0.0;
    double loss_q = 0.0;
    double loss_kappa = 0.0;
    double loss_total = 0.0;
    double q_hat = 0.0;
    int inversion_attempts = 0;
    int inversion_failures = 0;
};

struct BoundsResult {
    double lower = 0.0;
    double upper = 0.0;
    Interval support_estimate{0.0, 0.0};  // counterfactual-arm sample min/max
    ApidModel upper_model;                // smoothed parameters, frozen factual arm
    ApidModel lower_model;
    ApidModel burnin_model;  // both arms as fitted before the copies split
    std::vector<IterationRecord> trajectory;
};

// losses (plain evaluation at fixed parameters) ------------------------------

// mean negative marginal log likelihood of a noised batch, one augmentation
// draw per record
double loss_nll(const ApidModel& m, Arm a, std::span<const double> batch, double sigma2,
                std::uint64_t seed, double tol = 1e-4, int max_iter = 200);

// first Wasserstein distance between b model outcome samples and the batch
double loss_w(const ApidModel& m, Arm a, std::span<const double> batch, int b,
              std::uint64_t seed);

// Softplus(-Q) for Upper, Softplus(+Q) for Lower
double loss_q(const ApidModel& m, Arm a_prime, double y_prime, Arm a, BoundSide side,
              int b, std::uint64_t seed, double tol = 1e-4, int max_iter = 200);

// mean (absolute) level-set curvature at the counterfactual anchor
double loss_kappa(const ApidModel& m, Arm a, double q_hat, int b, std::uint64_t seed,
                  bool absolute = true, double tol = 1e-4, int max_iter = 200);

// optimizer ------------------------------------------------------------------

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state, double lr);

// e <- gamma * e + (1 - gamma) * p; sizes must match
void ema_update(std::vector<double>& ema, std::span<const double> params, double gamma);

// trainer ---------------------------------------------------------------------

using IterationCallback = std::function<void(const IterationRecord&)>;

// Three-stage optimization of an upper and a lower model for the
// counterfactual query a' -> a at evidence y'. Burn-in fits both arms to the
// data; the counterfactual arm is then copied into an upper and a lower
// entity which are pushed apart by the query loss and flattened by the
// curvature loss, while the factual arm stays frozen. Bounds are read from
// smoothed parameters.
BoundsResult train_bounds(const Dataset& data, Arm a_prime, double y_prime, Arm a,
                          const TrainConfig& cfg,
                          const IterationCallback& on_iteration = {});

}  // namespace cfb
