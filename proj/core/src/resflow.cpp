#include "cfb/resflow.hpp"

#include <cmath>
#include <string>

#include "cfb/errors.hpp"
#include "cfb/rng.hpp"

namespace cfb {

using ad::Mat;
using ad::MlpParams;
using ad::Tape;
using ad::Var;

namespace {

constexpr int kMaxHidden = 64;

// g(u) for the 2 -> hidden -> 2 residual net, doubles only (hot path)
void block_apply(const MlpParams& g, const double u[2], double out[2],
                 double* h = nullptr, double* hp = nullptr) {
    double hbuf[kMaxHidden];
    double hpbuf[kMaxHidden];
    if (!h) h = hbuf;
    if (!hp) hp = hpbuf;
    for (int k = 0; k < g.hidden; ++k) {
        double z = g.b1[k] + g.w1[2 * k] * u[0] + g.w1[2 * k + 1] * u[1];
        double t = std::tanh(z);
        h[k] = t;
        hp[k] = 1.0 - t * t;
    }
    out[0] = g.b2[0];
    out[1] = g.b2[1];
    for (int k = 0; k < g.hidden; ++k) {
        out[0] += g.w2[k] * h[k];
        out[1] += g.w2[g.hidden + k] * h[k];
    }
}

// J_g at u, also returns hidden activations
void block_jacobian(const MlpParams& g, const double u[2], double jac[2][2],
                    double* h, double* hp) {
    double out[2];
    block_apply(g, u, out, h, hp);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (int k = 0; k < g.hidden; ++k) {
                acc += g.w2[i * g.hidden + k] * hp[k] * g.w1[2 * k + j];
            }
            jac[i][j] = acc;
        }
    }
}

double block_logdet_value(const MlpParams& g, const double u[2]) {
    double h[kMaxHidden], hp[kMaxHidden];
    double jac[2][2];
    block_jacobian(g, u, jac, h, hp);
    double det = (1.0 + jac[0][0]) * (1.0 + jac[1][1]) - jac[0][1] * jac[1][0];
    if (!(det > 0.0)) {
        throw NumericalError("non-positive block Jacobian determinant " + std::to_string(det));
    }
    return std::log(det);
}

// solves u + g(u) = target by Banach iteration from u = target; returns the
// iteration count or -1 when the cap is hit
int solve_block(const MlpParams& g, const double target[2], double u[2], double tol,
                int max_iter, double* residual_out) {
    u[0] = target[0];
    u[1] = target[1];
    double gv[2];
    double delta = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        block_apply(g, u, gv);
        double n0 = target[0] - gv[0];
        double n1 = target[1] - gv[1];
        delta = std::max(std::fabs(n0 - u[0]), std::fabs(n1 - u[1]));
        u[0] = n0;
        u[1] = n1;
        if (delta <= tol) {
            if (residual_out) {
                block_apply(g, u, gv);
                *residual_out = std::max(std::fabs(u[0] + gv[0] - target[0]),
                                         std::fabs(u[1] + gv[1] - target[1]));
            }
            return it;
        }
        if (!std::isfinite(n0) || !std::isfinite(n1)) break;
    }
    if (residual_out) {
        block_apply(g, u, gv);
        *residual_out = std::max(std::fabs(u[0] + gv[0] - target[0]),
                                 std::fabs(u[1] + gv[1] - target[1]));
    }
    return -1;
}

double logit_stable(double u) { return std::log(u) - std::log1p(-u); }

// log |d logit/du| summed over coordinates, from the pre-sigmoid values
double head_logdet_from_pre(const double w[2]) {
    return ad::softplus(w[0]) + ad::softplus(-w[0]) + ad::softplus(w[1]) +
           ad::softplus(-w[1]);
}

// zero output layer: every stage starts as the identity map, so a fresh flow
// is exactly its affine output stage and fitting starts from the data scale
void init_mlp(MlpParams& m, int in, int hidden, int out, Rng& rng) {
    m.resize(in, hidden, out);
    double b1 = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : m.w1) w = rng.uniform(-b1, b1);
    for (auto& w : m.b1) w = rng.uniform(-b1, b1);
    for (auto& w : m.w2) w = 0.0;
    for (auto& w : m.b2) w = 0.0;
}

Mat as_mat(const std::vector<double>& data, int rows, int cols) {
    Mat m(rows, cols);
    m.a = data;
    return m;
}

}  // namespace

Flow make_flow(int n_blocks, int hidden, double lipschitz_target, std::uint64_t seed) {
    if (hidden > kMaxHidden) throw DomainError("hidden width above supported maximum");
    Flow flow;
    flow.lipschitz_target = lipschitz_target;
    flow.blocks.resize(static_cast<std::size_t>(n_blocks));
    Rng rng(seed);
    for (auto& b : flow.blocks) init_mlp(b.g, 2, hidden, 2, rng);
    normalize_lipschitz(flow, 100);
    return flow;
}

void normalize_lipschitz(ResidualBlock& block, double lipschitz_target, int power_iters) {
    double budget = std::sqrt(lipschitz_target);
    Mat w1 = as_mat(block.g.w1, block.g.hidden, 2);
    double s1 = ad::spectral_norm(w1, power_iters, &block.warm1);
    if (s1 > budget) {
        double f = budget / s1;
        for (double& w : block.g.w1) w *= f;
        s1 = budget;
    }
    block.sn1 = s1;
    Mat w2 = as_mat(block.g.w2, 2, block.g.hidden);
    double s2 = ad::spectral_norm(w2, power_iters, &block.warm2);
    if (s2 > budget) {
        double f = budget / s2;
        for (double& w : block.g.w2) w *= f;
        s2 = budget;
    }
    block.sn2 = s2;
}

void normalize_lipschitz(Flow& flow, int power_iters) {
    for (auto& b : flow.blocks) normalize_lipschitz(b, flow.lipschitz_target, power_iters);
}

double block_lipschitz_bound(const ResidualBlock& block, int power_iters) {
    Mat w1 = as_mat(block.g.w1, block.g.hidden, 2);
    Mat w2 = as_mat(block.g.w2, 2, block.g.hidden);
    return ad::spectral_norm(w1, power_iters) * ad::spectral_norm(w2, power_iters);
}

ForwardResult flow_forward(const Flow& flow, Vec2 u) {
    if (!(u.x > 0.0 && u.x < 1.0 && u.y > 0.0 && u.y < 1.0)) {
        throw DomainError("flow_forward: latent must lie strictly inside the unit square");
    }
    double x[2] = {logit_stable(u.x), logit_stable(u.y)};
    double logdet = -std::log(u.x) - std::log1p(-u.x) - std::log(u.y) - std::log1p(-u.y);
    for (const auto& b : flow.blocks) {
        logdet += block_logdet_value(b.g, x);
        double gv[2];
        block_apply(b.g, x, gv);
        x[0] += gv[0];
        x[1] += gv[1];
    }
    double s0 = flow.out_scale[0];
    double s1 = flow.out_scale[1];
    if (s0 == 0.0 || s1 == 0.0) throw NumericalError("flow_forward: zero output scale");
    logdet += std::log(std::fabs(s0)) + std::log(std::fabs(s1));
    return {{s0 * x[0] + flow.out_shift[0], s1 * x[1] + flow.out_shift[1]}, logdet};
}

InverseResult flow_inverse(const Flow& flow, Vec2 x, double tol, int max_iter) {
    if (flow.out_scale[0] == 0.0 || flow.out_scale[1] == 0.0) {
        throw NumericalError("flow_inverse: zero output scale");
    }
    InverseResult res;
    res.block_inputs.resize(flow.blocks.size());
    double target[2] = {(x.x - flow.out_shift[0]) / flow.out_scale[0],
                        (x.y - flow.out_shift[1]) / flow.out_scale[1]};
    const double head_target[2] = {target[0], target[1]};
    for (std::size_t k = flow.blocks.size(); k-- > 0;) {
        double u[2];
        double block_res = 0.0;
        int iters = solve_block(flow.blocks[k].g, target, u, tol, max_iter, &block_res);
        if (iters < 0) {
            throw NoConvergenceError(
                "flow_inverse: block " + std::to_string(k) + " fixed point did not reach " +
                    std::to_string(tol) + " within " + std::to_string(max_iter) +
                    " iterations (residual " + std::to_string(block_res) + ")",
                block_res);
        }
        res.iterations += iters;
        res.block_inputs[k] = {u[0], u[1]};
        target[0] = u[0];
        target[1] = u[1];
    }
    res.pre_sigmoid = {target[0], target[1]};
    res.u = {ad::sigmoid(target[0]), ad::sigmoid(target[1])};

    // certify the data-space round trip
    double z[2] = {target[0], target[1]};
    for (const auto& b : flow.blocks) {
        double gv[2];
        block_apply(b.g, z, gv);
        z[0] += gv[0];
        z[1] += gv[1];
    }
    res.residual = std::max(std::fabs(flow.out_scale[0]) * std::fabs(z[0] - head_target[0]),
                            std::fabs(flow.out_scale[1]) * std::fabs(z[1] - head_target[1]));
    if (!(res.residual <= 10.0 * tol)) {
        throw NoConvergenceError("flow_inverse: round-trip residual " +
                                     std::to_string(res.residual) + " exceeds 10 * tol",
                                 res.residual);
    }
    return res;
}

double flow_log_density(const Flow& flow, Vec2 x, double tol, int max_iter) {
    InverseResult inv = flow_inverse(flow, x, tol, max_iter);
    double w[2] = {inv.pre_sigmoid.x, inv.pre_sigmoid.y};
    double logdet = head_logdet_from_pre(w);
    for (std::size_t k = 0; k < flow.blocks.size(); ++k) {
        double z[2] = {inv.block_inputs[k].x, inv.block_inputs[k].y};
        logdet += block_logdet_value(flow.blocks[k].g, z);
    }
    logdet += std::log(std::fabs(flow.out_scale[0])) + std::log(std::fabs(flow.out_scale[1]));
    return -logdet;
}

std::vector<double> sample_flow_outcomes(const Flow& flow, std::size_t n,
                                         std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 u{rng.uniform_open(), rng.uniform_open()};
        out.push_back(flow_forward(flow, u).x.y);
    }
    return out;
}

std::size_t param_count(const Flow& flow) {
    std::size_t n = 4;  // scale + shift
    for (const auto& b : flow.blocks) {
        n += b.g.w1.size() + b.g.b1.size() + b.g.w2.size() + b.g.b2.size();
    }
    return n;
}

void flatten(const Flow& flow, std::vector<double>& out) {
    out.reserve(out.size() + param_count(flow));
    for (const auto& b : flow.blocks) {
        out.insert(out.end(), b.g.w1.begin(), b.g.w1.end());
        out.insert(out.end(), b.g.b1.begin(), b.g.b1.end());
        out.insert(out.end(), b.g.w2.begin(), b.g.w2.end());
        out.insert(out.end(), b.g.b2.begin(), b.g.b2.end());
    }
    out.insert(out.end(), flow.out_scale.begin(), flow.out_scale.end());
    out.insert(out.end(), flow.out_shift.begin(), flow.out_shift.end());
}

void unflatten(Flow& flow, const double* data) {
    std::size_t p = 0;
    for (auto& b : flow.blocks) {
        for (auto& w : b.g.w1) w = data[p++];
        for (auto& w : b.g.b1) w = data[p++];
        for (auto& w : b.g.w2) w = data[p++];
        for (auto& w : b.g.b2) w = data[p++];
    }
    for (auto& s : flow.out_scale) s = data[p++];
    for (auto& s : flow.out_shift) s = data[p++];
}

// --------------------------------------------------------------------------
// taped paths
// --------------------------------------------------------------------------

FlowVars lift_flow(Tape& tape, const Flow& flow, std::vector<Var>* leaves) {
    auto lift_one = [&](double v) {
        if (!leaves) return ad::cvar(v);
        Var x = tape.leaf(v);
        leaves->push_back(x);
        return x;
    };
    FlowVars vars;
    vars.blocks.reserve(flow.blocks.size());
    for (const auto& b : flow.blocks) vars.blocks.push_back(ad::lift_mlp(tape, b.g, leaves));
    for (int i = 0; i < 2; ++i) vars.out_scale[i] = lift_one(flow.out_scale[i]);
    for (int i = 0; i < 2; ++i) vars.out_shift[i] = lift_one(flow.out_shift[i]);
    return vars;
}

std::array<Var, 2> flow_forward_taped(const FlowVars& vars, Vec2 u) {
    if (!(u.x > 0.0 && u.x < 1.0 && u.y > 0.0 && u.y < 1.0)) {
        throw DomainError("flow_forward_taped: latent outside the open unit square");
    }
    std::array<Var, 2> x{ad::cvar(logit_stable(u.x)), ad::cvar(logit_stable(u.y))};
    std::array<Var, 2> gv;
    for (const auto& g : vars.blocks) {
        ad::mlp_apply(g, x.data(), gv.data());
        x[0] = x[0] + gv[0];
        x[1] = x[1] + gv[1];
    }
    x[0] = vars.out_scale[0] * x[0] + vars.out_shift[0];
    x[1] = vars.out_scale[1] * x[1] + vars.out_shift[1];
    return x;
}

namespace {

// logit of a constant latent as a second-order jet over scalar type T
template <class T>
ad::Jet2<T> logit_jet(double u, int axis) {
    ad::Jet2<T> j = ad::jet_seed(T{} + u, axis);
    double den = u * (1.0 - u);
    T g = T{} + logit_stable(u);
    T gp = T{} + 1.0 / den;
    T gpp = T{} + (2.0 * u - 1.0) / (den * den);
    return ad::jet_chain(j, g, gp, gpp);
}

template <class TW>
ad::Jet2<TW> outcome_jet_impl(const std::vector<ad::MlpT<TW>>& blocks,
                              const std::array<TW, 2>& scale,
                              const std::array<TW, 2>& shift, Vec2 u) {
    if (!(u.x > 0.0 && u.x < 1.0 && u.y > 0.0 && u.y < 1.0)) {
        throw DomainError("outcome jet: latent outside the open unit square");
    }
    using J = ad::Jet2<TW>;
    std::array<J, 2> x{logit_jet<TW>(u.x, 0), logit_jet<TW>(u.y, 1)};
    std::array<J, 2> gv;
    for (const auto& g : blocks) {
        ad::mlp_apply(g, x.data(), gv.data());
        x[0] = x[0] + gv[0];
        x[1] = x[1] + gv[1];
    }
    return scale[1] * x[1] + shift[1];
}

}  // namespace

ad::Jet2<Var> flow_outcome_jet_taped(const FlowVars& vars, Vec2 u) {
    return outcome_jet_impl(vars.blocks, vars.out_scale, vars.out_shift, u);
}

ad::Jet2<double> flow_outcome_jet(const Flow& flow, Vec2 u) {
    std::vector<ad::MlpT<double>> blocks;
    blocks.reserve(flow.blocks.size());
    for (const auto& b : flow.blocks) blocks.push_back(b.g);
    return outcome_jet_impl(blocks, flow.out_scale, flow.out_shift, u);
}

namespace {

// logdet of one block on the tape, evaluated at the taped block input z
Var taped_block_logdet(const ad::MlpT<Var>& g, const std::array<Var, 2>& z) {
    Var a00 = ad::cvar(0.0), a01 = ad::cvar(0.0), a10 = ad::cvar(0.0), a11 = ad::cvar(0.0);
    for (int k = 0; k < g.hidden; ++k) {
        Var zk = g.b1[k] + g.w1[2 * k] * z[0] + g.w1[2 * k + 1] * z[1];
        Var hp = 1.0 - ad::square(ad::tanh(zk));
        Var c0 = g.w2[k] * hp;
        Var c1 = g.w2[g.hidden + k] * hp;
        a00 = a00 + c0 * g.w1[2 * k];
        a01 = a01 + c0 * g.w1[2 * k + 1];
        a10 = a10 + c1 * g.w1[2 * k];
        a11 = a11 + c1 * g.w1[2 * k + 1];
    }
    Var det = (1.0 + a00) * (1.0 + a11) - a01 * a10;
    if (!(det.v > 0.0)) {
        throw NumericalError("non-positive block Jacobian determinant on tape");
    }
    return ad::log(det);
}

// registers the solved fixed point as an implicit node: first-order
// sensitivities of u with respect to the block input and the block parameters
// via (I + J_g)^{-1}
std::array<Var, 2> implicit_block_inverse(Tape& tape, const MlpParams& g,
                                          const ad::MlpT<Var>& gvars,
                                          const std::array<Var, 2>& x,
                                          const double u[2]) {
    bool all_const = x[0].is_const() && x[1].is_const();
    if (all_const) {
        for (const auto& w : gvars.w1) all_const &= w.is_const();
        for (const auto& w : gvars.b1) all_const &= w.is_const();
        for (const auto& w : gvars.w2) all_const &= w.is_const();
        for (const auto& w : gvars.b2) all_const &= w.is_const();
    }
    if (all_const) return {ad::cvar(u[0]), ad::cvar(u[1])};

    double h[kMaxHidden], hp[kMaxHidden];
    double jac[2][2];
    block_jacobian(g, u, jac, h, hp);
    double a00 = 1.0 + jac[0][0];
    double a11 = 1.0 + jac[1][1];
    double det = a00 * a11 - jac[0][1] * jac[1][0];
    if (det == 0.0) throw NumericalError("singular block Jacobian in implicit inverse");
    double inv[2][2] = {{a11 / det, -jac[0][1] / det}, {-jac[1][0] / det, a00 / det}};

    const int hidden = g.hidden;
    const int n_par = 2 + 3 * hidden + hidden * 2 + 2;  // x + w1 + b1 + w2 + b2
    std::vector<std::int32_t> parents;
    std::vector<double> row0, row1;
    parents.reserve(n_par);
    row0.reserve(n_par);
    row1.reserve(n_par);

    auto push = [&](const Var& p, double d0, double d1) {
        parents.push_back(p.idx);
        row0.push_back(d0);
        row1.push_back(d1);
    };

    push(x[0], inv[0][0], inv[1][0]);
    push(x[1], inv[0][1], inv[1][1]);
    for (int k = 0; k < hidden; ++k) {
        double c0 = -(inv[0][0] * g.w2[k] + inv[0][1] * g.w2[hidden + k]) * hp[k];
        double c1 = -(inv[1][0] * g.w2[k] + inv[1][1] * g.w2[hidden + k]) * hp[k];
        push(gvars.w1[2 * k], c0 * u[0], c1 * u[0]);
        push(gvars.w1[2 * k + 1], c0 * u[1], c1 * u[1]);
    }
    for (int k = 0; k < hidden; ++k) {
        double c0 = -(inv[0][0] * g.w2[k] + inv[0][1] * g.w2[hidden + k]) * hp[k];
        double c1 = -(inv[1][0] * g.w2[k] + inv[1][1] * g.w2[hidden + k]) * hp[k];
        push(gvars.b1[k], c0, c1);
    }
    for (int m = 0; m < 2; ++m) {
        for (int k = 0; k < hidden; ++k) {
            push(gvars.w2[m * hidden + k], -inv[0][m] * h[k], -inv[1][m] * h[k]);
        }
    }
    push(gvars.b2[0], -inv[0][0], -inv[1][0]);
    push(gvars.b2[1], -inv[0][1], -inv[1][1]);

    Var u0 = tape.node_n(u[0], parents, row0);
    Var u1 = tape.node_n(u[1], parents, row1);
    return {u0, u1};
}

}  // namespace

TapedLogDensity flow_log_density_taped(Tape& tape, const Flow& flow, const FlowVars& vars,
                                       std::array<Var, 2> x, double tol, int max_iter) {
    if (flow.out_scale[0] == 0.0 || flow.out_scale[1] == 0.0) {
        throw NumericalError("flow_log_density_taped: zero output scale");
    }
    TapedLogDensity out;
    std::array<Var, 2> w{(x[0] - vars.out_shift[0]) / vars.out_scale[0],
                         (x[1] - vars.out_shift[1]) / vars.out_scale[1]};
    double w_val[2] = {w[0].v, w[1].v};
    const double head_target[2] = {w_val[0], w_val[1]};

    Var logdet = ad::log(ad::abs(vars.out_scale[0])) + ad::log(ad::abs(vars.out_scale[1]));
    for (std::size_t k = flow.blocks.size(); k-- > 0;) {
        double u[2];
        double block_res = 0.0;
        int iters = solve_block(flow.blocks[k].g, w_val, u, tol, max_iter, &block_res);
        if (iters < 0) {
            throw NoConvergenceError(
                "flow_log_density_taped: block " + std::to_string(k) +
                    " fixed point stalled (residual " + std::to_string(block_res) + ")",
                block_res);
        }
        out.iterations += iters;
        w = implicit_block_inverse(tape, flow.blocks[k].g, vars.blocks[k], w, u);
        w_val[0] = u[0];
        w_val[1] = u[1];
        logdet = logdet + taped_block_logdet(vars.blocks[k], w);
    }
    logdet = logdet + ad::softplus(w[0]) + ad::softplus(-w[0]) + ad::softplus(w[1]) +
             ad::softplus(-w[1]);

    // data-space round-trip certificate, doubles only
    double z[2] = {w_val[0], w_val[1]};
    for (const auto& b : flow.blocks) {
        double gv[2];
        block_apply(b.g, z, gv);
        z[0] += gv[0];
        z[1] += gv[1];
    }
    out.residual = std::max(std::fabs(flow.out_scale[0]) * std::fabs(z[0] - head_target[0]),
                            std::fabs(flow.out_scale[1]) * std::fabs(z[1] - head_target[1]));
    if (!(out.residual <= 10.0 * tol)) {
        throw NoConvergenceError("flow_log_density_taped: round-trip residual " +
                                     std::to_string(out.residual) + " exceeds 10 * tol",
                                 out.residual);
    }
    out.log_px = -logdet;
    return out;
}

}  // namespace cfb
