#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cfb/autodiff.hpp"
#include "cfb/scm.hpp"

namespace cfb {

// One invertible stage x -> x + g(x) on R^2. Invertibility is maintained by
// keeping the Lipschitz constant of g strictly below one via per-layer
// spectral normalization; warm vectors make repeated power iterations cheap.
struct ResidualBlock {
    ad::MlpParams g;  // 2 -> hidden -> 2, tanh hidden layer
    std::vector<double> warm1, warm2;
    double sn1 = -1.0;  // last measured layer spectral norms
    double sn2 = -1.0;
};

// Invertible map from the open unit square to R^2: elementwise logit head,
// then residual blocks, then a diagonal affine output stage. The generative
// direction runs square -> data; densities are evaluated through the inverse.
// The second output coordinate is the outcome; the first carries the
// augmentation channel.
struct Flow {
    std::vector<ResidualBlock> blocks;
    std::array<double, 2> out_scale{1.0, 1.0};
    std::array<double, 2> out_shift{0.0, 0.0};
    double lipschitz_target = 0.97;
};

Flow make_flow(int n_blocks, int hidden, double lipschitz_target, std::uint64_t seed);

// rescales any layer whose spectral norm exceeds the per-layer budget
// sqrt(lipschitz_target); layers already inside the budget are left untouched
void normalize_lipschitz(Flow& flow, int power_iters = 50);
void normalize_lipschitz(ResidualBlock& block, double lipschitz_target, int power_iters);

// product over layers of measured spectral norms, an upper bound on Lip(g)
double block_lipschitz_bound(const ResidualBlock& block, int power_iters = 50);

struct ForwardResult {
    Vec2 x;
    double logdet = 0.0;  // log |det dF/du|
};

// full generative map; u must lie strictly inside the unit square
ForwardResult flow_forward(const Flow& flow, Vec2 u);

struct InverseResult {
    Vec2 u;                         // recovered latent in (0,1)^2
    Vec2 pre_sigmoid;               // latent before the logit head
    std::vector<Vec2> block_inputs; // forward input of each block, in block order
    double residual = 0.0;          // data-space round-trip residual (max norm)
    int iterations = 0;             // total fixed-point iterations
};

// per-block Banach fixed-point inversion in reverse block order, initialized
// at the target; throws NoConvergenceError if an iteration cap is hit or the
// final round-trip residual exceeds 10 * tol
InverseResult flow_inverse(const Flow& flow, Vec2 x, double tol = 1e-4,
                           int max_iter = 200);

// log density of the pushforward of the uniform base at x
double flow_log_density(const Flow& flow, Vec2 x, double tol = 1e-4,
                        int max_iter = 200);

// n outcome-coordinate samples (deterministic in seed)
std::vector<double> sample_flow_outcomes(const Flow& flow, std::size_t n,
                                         std::uint64_t seed);

// parameter vector layout: per block (w1, b1, w2, b2), then out_scale, out_shift
std::size_t param_count(const Flow& flow);
void flatten(const Flow& flow, std::vector<double>& out);
void unflatten(Flow& flow, const double* data);

// ---------------------------------------------------------------------------
// taped views for training
// ---------------------------------------------------------------------------

struct FlowVars {
    std::vector<ad::MlpT<ad::Var>> blocks;
    std::array<ad::Var, 2> out_scale;
    std::array<ad::Var, 2> out_shift;
};

// lifts parameters onto the tape as leaves (flatten order); when leaves is
// null the parameters become constants and gradients are blocked, which is
// how the factual flow is frozen
FlowVars lift_flow(ad::Tape& tape, const Flow& flow, std::vector<ad::Var>* leaves);

// generative map with taped parameters at a constant latent
std::array<ad::Var, 2> flow_forward_taped(const FlowVars& vars, Vec2 u);

// outcome coordinate as a second-order jet in the latent, with taped
// parameters; used for curvature penalties at fixed abduction points
ad::Jet2<ad::Var> flow_outcome_jet_taped(const FlowVars& vars, Vec2 u);

// same jet with plain doubles, for curvature evaluation
ad::Jet2<double> flow_outcome_jet(const Flow& flow, Vec2 u);

struct TapedLogDensity {
    ad::Var log_px;       // taped log density at x
    double residual = 0.0;
    int iterations = 0;
};

// taped change-of-variables at x = (x0, x1): the fixed points are solved in
// doubles, registered as implicit nodes (exact first-order sensitivities),
// and the stage log-determinants are rebuilt on the tape from the recovered
// block inputs
TapedLogDensity flow_log_density_taped(ad::Tape& tape, const Flow& flow,
                                       const FlowVars& vars,
                                       std::array<ad::Var, 2> x, double tol = 1e-4,
                                       int max_iter = 200);

}  // namespace cfb
