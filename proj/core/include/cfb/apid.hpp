#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfb/resflow.hpp"

namespace cfb {

// Pseudo-invertible decoder pair: one flow per arm plus the augmentation nets
// that lift a scalar outcome to a point in the flow's two-dimensional output
// space. Points are ordered (augmentation, outcome): the outcome is always the
// second flow coordinate.
struct ApidModel {
    Flow flow0;
    Flow flow1;
    ad::MlpParams g0;  // 1 -> hidden -> 1
    ad::MlpParams g1;
    double eps2 = 0.25;  // augmentation variance
};

ApidModel make_apid_model(int n_blocks, int hidden_flow, int hidden_aug, double eps2,
                          double lipschitz_target, std::uint64_t seed);

const Flow& flow_of(const ApidModel& m, Arm a);
Flow& flow_of(ApidModel& m, Arm a);
const ad::MlpParams& gnet_of(const ApidModel& m, Arm a);
ad::MlpParams& gnet_of(ApidModel& m, Arm a);

double gnet_eval(const ad::MlpParams& g, double y);

struct AugmentedPair {
    double y_aug;
    double y;
};

// b reparametrized augmentation draws around g_a(y)
std::vector<AugmentedPair> augment(const ApidModel& m, Arm a, double y, int b,
                                   std::uint64_t seed);

// marginal outcome log likelihood, averaged over b augmentation draws: the
// flow's joint density minus the augmentation proposal density
double log_likelihood(const ApidModel& m, Arm a, double y, int b, std::uint64_t seed,
                      double tol = 1e-4, int max_iter = 200);

struct QueryResult {
    double q_hat = 0.0;
    std::vector<Vec2> latents;      // abducted posterior points in the unit square
    std::vector<double> outcomes;   // counterfactual pushforward outcomes
    int failed_inversions = 0;
};

// abduction: latents of the factual flow at the augmented evidence
QueryResult abduct(const ApidModel& m, Arm a_prime, double y_prime, int b,
                   std::uint64_t seed, double tol = 1e-4, int max_iter = 200);

// abduction-action-prediction estimate of the counterfactual mean outcome
QueryResult ecou_estimate(const ApidModel& m, Arm a_prime, double y_prime, Arm a,
                          int b, std::uint64_t seed, double tol = 1e-4,
                          int max_iter = 200);

// principal curvature of the outcome level set through u, from the exact
// gradient and Hessian of the outcome coordinate
double curvature_at(const ApidModel& m, Arm a, Vec2 u);

// curvature from a precomputed outcome jet (value, gradient, Hessian)
double curvature_from_jet(const ad::Jet2<double>& jet);

struct CurvaturePenalty {
    double value = 0.0;
    int skipped_degenerate = 0;
    int failed_inversions = 0;
};

// mean (absolute, by default) level-set curvature across abduction points of
// the arm-a flow anchored at outcome y_hat
CurvaturePenalty curvature_penalty(const ApidModel& m, Arm a, double y_hat, int b,
                                   std::uint64_t seed, bool absolute = true,
                                   double tol = 1e-4, int max_iter = 200);

// versioned checkpoint, bit-exact round trip; a nonempty manifest path is
// recorded in the file and ignored on load
void save_model(const ApidModel& m, const std::string& path,
                const std::string& manifest = "");
ApidModel load_model(const std::string& path);

}  // namespace cfb
