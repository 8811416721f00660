#include "cfb/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <utility>

#include "cfb/errors.hpp"
#include "cfb/rng.hpp"

namespace cfb {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;
constexpr double kLogisticStd = 1.8137993642342178;  // pi / sqrt(3)
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::uint64_t stream(std::uint64_t root, int stage, int k, int entity, int purpose) {
    std::uint64_t s = split_seed(root, static_cast<std::uint64_t>(stage) * 0x100000ULL +
                                           static_cast<std::uint64_t>(k));
    return split_seed(s, static_cast<std::uint64_t>(entity) * 16 +
                             static_cast<std::uint64_t>(purpose));
}

}  // namespace

TrainConfig full_preset() { return TrainConfig{}; }

TrainConfig desk_preset() {
    TrainConfig cfg;
    cfg.batch = 16;
    cfg.n_curv_query = 100;
    return cfg;
}

const char* stage_name(TrainStage s) {
    switch (s) {
        case TrainStage::BurnIn:
            return "burn-in";
        case TrainStage::Query:
            return "query";
        default:
            return "curvature-query";
    }
}

// --------------------------------------------------------------------------
// plain loss evaluation
// --------------------------------------------------------------------------

double loss_nll(const ApidModel& m, Arm a, std::span<const double> batch, double sigma2,
                std::uint64_t seed, double tol, int max_iter) {
    if (batch.empty()) throw DomainError("loss_nll: empty batch");
    if (sigma2 < 0.0) throw DomainError("loss_nll: negative noise variance");
    Rng noise(split_seed(seed, 1));
    std::uint64_t aug_root = split_seed(seed, 2);
    double sigma = std::sqrt(sigma2);
    double acc = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double y = batch[i] + sigma * noise.normal();
        acc += log_likelihood(m, a, y, 1, split_seed(aug_root, i), tol, max_iter);
    }
    return -acc / static_cast<double>(batch.size());
}

double loss_w(const ApidModel& m, Arm a, std::span<const double> batch, int b,
              std::uint64_t seed) {
    if (batch.empty()) throw DomainError("loss_w: empty batch");
    if (b < 1) throw DomainError("loss_w: need at least one model draw");
    return wasserstein1(
        make_empirical(sample_flow_outcomes(flow_of(m, a), static_cast<std::size_t>(b), seed)),
        make_empirical(std::vector<double>(batch.begin(), batch.end())));
}

double loss_q(const ApidModel& m, Arm a_prime, double y_prime, Arm a, BoundSide side,
              int b, std::uint64_t seed, double tol, int max_iter) {
    double q = ecou_estimate(m, a_prime, y_prime, a, b, seed, tol, max_iter).q_hat;
    return ad::softplus(side == BoundSide::Upper ? -q : q);
}

double loss_kappa(const ApidModel& m, Arm a, double q_hat, int b, std::uint64_t seed,
                  bool absolute, double tol, int max_iter) {
    return curvature_penalty(m, a, q_hat, b, seed, absolute, tol, max_iter).value;
}

// --------------------------------------------------------------------------
// optimizer
// --------------------------------------------------------------------------

void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& st, double lr) {
    if (params.size() != grads.size()) throw DomainError("adam_step: size mismatch");
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
        st.step = 0;
    }
    ++st.step;
    double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        params[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps);
    }
}

void ema_update(std::vector<double>& ema, std::span<const double> params, double gamma) {
    if (ema.size() != params.size()) throw DomainError("ema_update: size mismatch");
    for (std::size_t i = 0; i < ema.size(); ++i) {
        ema[i] = gamma * ema[i] + (1.0 - gamma) * params[i];
    }
}

// --------------------------------------------------------------------------
// trainer internals
// --------------------------------------------------------------------------

namespace {

struct Entity {
    Flow flow;
    ad::MlpParams gnet;
    AdamState adam;
    std::vector<double> ema;
};

std::vector<double> flatten_entity(const Entity& e) {
    std::vector<double> out;
    flatten(e.flow, out);
    ad::flatten(e.gnet, out);
    return out;
}

void unflatten_entity(Entity& e, std::span<const double> v) {
    unflatten(e.flow, v.data());
    ad::unflatten(e.gnet, v.data() + param_count(e.flow));
}

std::vector<double> collect_gradient(const ad::Tape& tape, const ad::Var& root,
                                     std::span<const ad::Var> leaves) {
    std::vector<double> adj = tape.gradient(root);
    std::vector<double> g(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        g[i] = ad::Tape::adjoint_of(adj, leaves[i]);
    }
    return g;
}

std::vector<double> minibatch(const std::vector<double>& pool, int b, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(static_cast<std::size_t>(b));
    for (auto& y : out) y = pool[rng.below(pool.size())];
    return out;
}

struct TapedTerm {
    ad::Var value;  // undefined when used == 0
    int attempts = 0;
    int failures = 0;
    int used = 0;
};

// mean negative log likelihood of a noised minibatch, one reparametrized
// augmentation draw per record; failed inversions drop the record
TapedTerm taped_nll(ad::Tape& tape, const Entity& e, const FlowVars& fv,
                    const ad::MlpT<ad::Var>& gv, std::span<const double> batch,
                    const TrainConfig& cfg, std::uint64_t seed) {
    TapedTerm term;
    Rng noise(split_seed(seed, 1));
    std::uint64_t aug_root = split_seed(seed, 2);
    double sigma = std::sqrt(cfg.sigma2_noise);
    double eps = std::sqrt(cfg.eps2);
    ad::Var acc = ad::cvar(0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double y = batch[i] + sigma * noise.normal();
        Rng aug(split_seed(aug_root, i));
        double z = aug.normal();
        ad::Var y_in = ad::cvar(y);
        ad::Var mean;
        ad::mlp_apply(gv, &y_in, &mean);
        ad::Var y_aug = mean + eps * z;
        ++term.attempts;
        try {
            TapedLogDensity ld =
                flow_log_density_taped(tape, e.flow, fv, {y_aug, y_in}, cfg.tol, cfg.max_iter);
            double log_prop = -kHalfLog2Pi - 0.5 * std::log(cfg.eps2) - 0.5 * z * z;
            acc = acc + (ld.log_px - log_prop);
            ++term.used;
        } catch (const NoConvergenceError&) {
            ++term.failures;
        }
    }
    if (term.used > 0) term.value = (-1.0 / term.used) * acc;
    return term;
}

// Wasserstein distance between taped model samples and the minibatch; equal
// sample sizes reduce the coupling to sorted pairing
ad::Var taped_w(const FlowVars& fv, std::span<const double> batch, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ad::Var> model(batch.size());
    for (auto& out : model) {
        Vec2 u{rng.uniform_open(), rng.uniform_open()};
        out = flow_forward_taped(fv, u)[1];
    }
    std::sort(model.begin(), model.end(),
              [](const ad::Var& a, const ad::Var& b) { return a.v < b.v; });
    std::vector<double> sorted(batch.begin(), batch.end());
    std::sort(sorted.begin(), sorted.end());
    ad::Var acc = ad::cvar(0.0);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        acc = acc + ad::abs(model[i] - sorted[i]);
    }
    return acc / static_cast<double>(sorted.size());
}

// counterfactual query through the frozen factual arm: abduction runs on
// plain doubles, only the pushforward is taped
struct TapedQuery {
    ad::Var q;
    double q_val = kNan;
    int attempts = 0;
    int failures = 0;
    bool ok = false;
};

TapedQuery taped_query(const FlowVars& fv, const Flow& factual_flow,
                       const ad::MlpParams& factual_gnet, double y_prime,
                       const TrainConfig& cfg, std::uint64_t seed) {
    TapedQuery res;
    Rng rng(seed);
    double mean = gnet_eval(factual_gnet, y_prime);
    double eps = std::sqrt(cfg.eps2);
    std::vector<Vec2> latents;
    latents.reserve(static_cast<std::size_t>(cfg.batch));
    for (int j = 0; j < cfg.batch; ++j) {
        double y_aug = mean + eps * rng.normal();
        ++res.attempts;
        try {
            latents.push_back(flow_inverse(factual_flow, {y_aug, y_prime}, cfg.tol,
                                           cfg.max_iter).u);
        } catch (const NoConvergenceError&) {
            ++res.failures;
        }
    }
    if (latents.empty()) return res;
    ad::Var acc = ad::cvar(0.0);
    for (const Vec2& u : latents) acc = acc + flow_forward_taped(fv, u)[1];
    res.q = acc / static_cast<double>(latents.size());
    res.q_val = ad::value(res.q);
    res.ok = true;
    return res;
}

// curvature at abduction points of the trained entity itself; the points are
// solved on plain doubles so the penalty only differentiates the local shape
TapedTerm taped_kappa(const Entity& e, const FlowVars& fv, double y_hat,
                      const TrainConfig& cfg, std::uint64_t seed) {
    TapedTerm term;
    Rng rng(seed);
    double mean = gnet_eval(e.gnet, y_hat);
    double eps = std::sqrt(cfg.eps2);
    ad::Var acc = ad::cvar(0.0);
    for (int j = 0; j < cfg.batch; ++j) {
        double y_aug = mean + eps * rng.normal();
        ++term.attempts;
        Vec2 u;
        try {
            u = flow_inverse(e.flow, {y_aug, y_hat}, cfg.tol, cfg.max_iter).u;
        } catch (const NoConvergenceError&) {
            ++term.failures;
            continue;
        }
        ad::Jet2<ad::Var> jet = flow_outcome_jet_taped(fv, u);
        ad::Var fx = jet.d1[0], fy = jet.d1[1];
        ad::Var g2 = fx * fx + fy * fy;
        if (ad::value(g2) <= 1e-24) continue;  // degenerate gradient, skip point
        ad::Var num = fy * fy * jet.d2[0] - 2.0 * (fx * fy * jet.d2[1]) +
                      fx * fx * jet.d2[2];
        ad::Var kappa = (0.0 - num) / (g2 * ad::sqrt(g2));
        acc = acc + (cfg.curvature_absolute ? ad::abs(kappa) : kappa);
        ++term.used;
    }
    if (term.used > 0) term.value = acc / static_cast<double>(term.used);
    return term;
}

struct FailureWindow {
    std::deque<std::pair<int, int>> entries;
    long attempts = 0;
    long failures = 0;

    void push(int at, int fl) {
        entries.emplace_back(at, fl);
        attempts += at;
        failures += fl;
        if (entries.size() > 50) {
            attempts -= entries.front().first;
            failures -= entries.front().second;
            entries.pop_front();
        }
    }
    bool tripped() const {
        return entries.size() == 50 && attempts > 0 && 2 * failures > attempts;
    }
};

bool finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void validate(const TrainConfig& cfg) {
    if (cfg.lr <= 0.0) throw DomainError("train: learning rate must be positive");
    if (cfg.batch < 1) throw DomainError("train: batch must be positive");
    if (cfg.n_burnin < 1) throw DomainError("train: burn-in length must be positive");
    if (cfg.n_query < 0 || cfg.n_curv_query < 0) {
        throw DomainError("train: stage lengths must be nonnegative");
    }
    if (cfg.lambda_q < 0.0 || cfg.lambda_kappa < 0.0) {
        throw DomainError("train: loss coefficients must be nonnegative");
    }
    if (cfg.eps2 <= 0.0) throw DomainError("train: augmentation variance must be positive");
    if (cfg.sigma2_noise < 0.0) throw DomainError("train: noise variance must be nonnegative");
    if (cfg.ema_gamma < 0.0 || cfg.ema_gamma >= 1.0) {
        throw DomainError("train: ema smoothing must lie in [0, 1)");
    }
    if (cfg.eval_batch < 1) throw DomainError("train: eval batch must be positive");
}

}  // namespace

// --------------------------------------------------------------------------
// three-stage trainer
// --------------------------------------------------------------------------

BoundsResult train_bounds(const Dataset& data, Arm a_prime, double y_prime, Arm a,
                          const TrainConfig& cfg, const IterationCallback& on_iteration) {
    validate(cfg);
    if (a == a_prime) throw DomainError("train: factual and query arms must differ");
    std::vector<double> pool[2] = {data.outcomes(Arm::a0), data.outcomes(Arm::a1)};
    if (pool[0].empty() || pool[1].empty()) {
        throw DomainError("train: dataset must contain both arms");
    }
    const std::vector<double>& factual_pool = pool[arm_index(a_prime)];
    auto [fp_min, fp_max] =
        std::minmax_element(factual_pool.begin(), factual_pool.end());
    if (y_prime < *fp_min || y_prime > *fp_max) {
        throw DomainError("train: evidence outside the factual sample range");
    }

    BoundsResult result;
    const std::vector<double>& cf_pool = pool[arm_index(a)];
    auto [cf_min, cf_max] = std::minmax_element(cf_pool.begin(), cf_pool.end());
    result.support_estimate = Interval{*cf_min, *cf_max};

    // both arms start near the data scale
    ApidModel init = make_apid_model(cfg.n_blocks, cfg.hidden_flow, cfg.hidden_aug,
                                     cfg.eps2, cfg.lipschitz_target,
                                     split_seed(cfg.seed, 101));
    Entity arms[2] = {{std::move(init.flow0), std::move(init.g0), {}, {}},
                      {std::move(init.flow1), std::move(init.g1), {}, {}}};
    for (int ai = 0; ai < 2; ++ai) {
        double n = static_cast<double>(pool[ai].size());
        double mean = 0.0, sq = 0.0;
        for (double y : pool[ai]) mean += y;
        mean /= n;
        for (double y : pool[ai]) sq += (y - mean) * (y - mean);
        double sd = std::sqrt(sq / std::max(n - 1.0, 1.0));
        arms[ai].flow.out_scale = {std::sqrt(cfg.eps2) / kLogisticStd,
                                   std::max(sd, 1e-6) / kLogisticStd};
        arms[ai].flow.out_shift = {0.0, mean};
    }

    FailureWindow window;
    auto abort_check = [&](TrainStage st, int k) {
        if (!window.tripped()) return;
        throw NumericalError(
            "training aborted at " + std::string(stage_name(st)) + " iteration " +
            std::to_string(k) + ": " + std::to_string(window.failures) + " of " +
            std::to_string(window.attempts) +
            " inversions failed over the last 50 iterations");
    };

    auto emit = [&](const IterationRecord& rec) {
        result.trajectory.push_back(rec);
        if (on_iteration) on_iteration(rec);
    };

    // apply one gradient step and renormalize; skips on non-finite values
    auto update = [&](Entity& e, const ad::Var& total, std::span<const ad::Var> leaves,
                      const ad::Tape& tape) {
        if (!std::isfinite(ad::value(total))) return;
        std::vector<double> grads = collect_gradient(tape, total, leaves);
        if (!finite(grads)) return;
        std::vector<double> flat = flatten_entity(e);
        adam_step(flat, grads, e.adam, cfg.lr);
        unflatten_entity(e, flat);
        normalize_lipschitz(e.flow);
    };

    // stage 1: fit both arms to their own observations
    for (int k = 0; k < cfg.n_burnin; ++k) {
        int at = 0, fl = 0;
        for (int ai = 0; ai < 2; ++ai) {
            Entity& e = arms[ai];
            std::vector<double> batch =
                minibatch(pool[ai], cfg.batch, stream(cfg.seed, 0, k, ai, 0));

            ad::Tape tape;
            std::vector<ad::Var> leaves;
            FlowVars fv = lift_flow(tape, e.flow, &leaves);
            ad::MlpT<ad::Var> gv = ad::lift_mlp(tape, e.gnet, &leaves);
            TapedTerm nll =
                taped_nll(tape, e, fv, gv, batch, cfg, stream(cfg.seed, 0, k, ai, 1));
            ad::Var w = taped_w(fv, batch, stream(cfg.seed, 0, k, ai, 2));
            ad::Var total = nll.used > 0 ? nll.value + w : w;
            update(e, total, leaves, tape);

            at += nll.attempts;
            fl += nll.failures;
            IterationRecord rec;
            rec.iteration = k;
            rec.stage = TrainStage::BurnIn;
            rec.entity = ai == 0 ? "arm0" : "arm1";
            rec.loss_nll = nll.used > 0 ? ad::value(nll.value) : kNan;
            rec.loss_w = ad::value(w);
            rec.loss_q = kNan;
            rec.loss_kappa = kNan;
            rec.loss_total = ad::value(total);
            rec.q_hat = kNan;
            rec.inversion_attempts = nll.attempts;
            rec.inversion_failures = nll.failures;
            emit(rec);
        }
        window.push(at, fl);
        abort_check(TrainStage::BurnIn, k);
    }

    result.burnin_model = ApidModel{arms[0].flow, arms[1].flow, arms[0].gnet,
                                    arms[1].gnet, cfg.eps2};

    // stage 2 setup: freeze the factual arm, split the counterfactual arm
    const Flow factual_flow = arms[arm_index(a_prime)].flow;
    const ad::MlpParams factual_gnet = arms[arm_index(a_prime)].gnet;
    Entity upper{arms[arm_index(a)].flow, arms[arm_index(a)].gnet, {}, {}};
    Entity lower = upper;
    upper.ema = flatten_entity(upper);
    lower.ema = flatten_entity(lower);

    const Interval support = result.support_estimate;
    int n_total = cfg.n_query + cfg.n_curv_query;
    for (int k = 0; k < n_total; ++k) {
        TrainStage st = k < cfg.n_query ? TrainStage::Query : TrainStage::CurvatureQuery;
        int at = 0, fl = 0;
        for (int side = 0; side < 2; ++side) {
            Entity& e = side == 0 ? upper : lower;
            std::vector<double> batch =
                minibatch(pool[arm_index(a)], cfg.batch, stream(cfg.seed, 1, k, side, 0));

            ad::Tape tape;
            std::vector<ad::Var> leaves;
            FlowVars fv = lift_flow(tape, e.flow, &leaves);
            ad::MlpT<ad::Var> gv = ad::lift_mlp(tape, e.gnet, &leaves);
            TapedTerm nll =
                taped_nll(tape, e, fv, gv, batch, cfg, stream(cfg.seed, 1, k, side, 1));
            ad::Var w = taped_w(fv, batch, stream(cfg.seed, 1, k, side, 2));
            ad::Var total = nll.used > 0 ? nll.value + w : w;

            TapedQuery query = taped_query(fv, factual_flow, factual_gnet, y_prime, cfg,
                                           stream(cfg.seed, 1, k, side, 3));
            int side_at = nll.attempts + query.attempts;
            int side_fl = nll.failures + query.failures;

            double lq_val = kNan;
            double lk_val = kNan;
            if (query.ok) {
                bool informative = support.contains(query.q_val);
                if (informative || k >= cfg.n_query) {
                    ad::Var lq = ad::softplus(side == 0 ? 0.0 - query.q : query.q);
                    total = total + cfg.lambda_q * lq;
                    lq_val = ad::value(lq);
                }
                if (k >= cfg.n_query) {
                    TapedTerm kap = taped_kappa(e, fv, query.q_val, cfg,
                                                stream(cfg.seed, 1, k, side, 4));
                    side_at += kap.attempts;
                    side_fl += kap.failures;
                    if (kap.used > 0) {
                        total = total + cfg.lambda_kappa * kap.value;
                        lk_val = ad::value(kap.value);
                    }
                }
            }

            update(e, total, leaves, tape);
            ema_update(e.ema, flatten_entity(e), cfg.ema_gamma);
            at += side_at;
            fl += side_fl;

            IterationRecord rec;
            rec.iteration = st == TrainStage::Query ? k : k - cfg.n_query;
            rec.stage = st;
            rec.entity = side == 0 ? "upper" : "lower";
            rec.loss_nll = nll.used > 0 ? ad::value(nll.value) : kNan;
            rec.loss_w = ad::value(w);
            rec.loss_q = lq_val;
            rec.loss_kappa = lk_val;
            rec.loss_total = ad::value(total);
            rec.q_hat = query.q_val;
            rec.inversion_attempts = side_at;
            rec.inversion_failures = side_fl;
            emit(rec);
        }
        window.push(at, fl);
        abort_check(st, k);
    }

    // bounds from the smoothed parameters, frozen factual arm reattached
    auto assemble = [&](const Entity& e) {
        Entity smoothed = e;
        unflatten_entity(smoothed, smoothed.ema);
        ApidModel m;
        m.eps2 = cfg.eps2;
        flow_of(m, a) = std::move(smoothed.flow);
        gnet_of(m, a) = std::move(smoothed.gnet);
        flow_of(m, a_prime) = factual_flow;
        gnet_of(m, a_prime) = factual_gnet;
        return m;
    };
    result.upper_model = assemble(upper);
    result.lower_model = assemble(lower);
    std::uint64_t eval_seed = split_seed(cfg.seed, 777);
    result.upper = ecou_estimate(result.upper_model, a_prime, y_prime, a, cfg.eval_batch,
                                 eval_seed, cfg.tol, cfg.max_iter).q_hat;
    result.lower = ecou_estimate(result.lower_model, a_prime, y_prime, a, cfg.eval_batch,
                                 eval_seed, cfg.tol, cfg.max_iter).q_hat;
    return result;
}

}  // namespace cfb
