#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfb/resflow.hpp"
#include "cfb/rng.hpp"

using namespace cfb;
using ad::Var;

namespace {

// fresh flows start as their affine stage (zero block output layers), so the
// interesting tests perturb every layer first and re-normalize
Flow random_flow(int n_blocks, int hidden, std::uint64_t seed) {
    Flow flow = make_flow(n_blocks, hidden, 0.97, seed);
    Rng rng(split_seed(seed, 1001));
    for (auto& block : flow.blocks) {
        for (double& w : block.g.w2) w = rng.uniform(-0.9, 0.9);
        for (double& w : block.g.b2) w = rng.uniform(-0.3, 0.3);
    }
    flow.out_scale = {1.0 + rng.uniform01(), 0.5 + rng.uniform01()};
    flow.out_shift = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    normalize_lipschitz(flow);
    return flow;
}

Vec2 random_interior_point(Rng& rng) {
    return {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
}

double fd_jacobian_det(const Flow& flow, Vec2 u, double h = 1e-6) {
    Vec2 xp1 = flow_forward(flow, {u.x + h, u.y}).x;
    Vec2 xm1 = flow_forward(flow, {u.x - h, u.y}).x;
    Vec2 xp2 = flow_forward(flow, {u.x, u.y + h}).x;
    Vec2 xm2 = flow_forward(flow, {u.x, u.y - h}).x;
    double j00 = (xp1.x - xm1.x) / (2.0 * h);
    double j10 = (xp1.y - xm1.y) / (2.0 * h);
    double j01 = (xp2.x - xm2.x) / (2.0 * h);
    double j11 = (xp2.y - xm2.y) / (2.0 * h);
    return j00 * j11 - j01 * j10;
}

}  // namespace

TEST_CASE("construction is deterministic in the seed") {
    Flow a = random_flow(6, 5, 42);
    Flow b = random_flow(6, 5, 42);
    std::vector<double> fa, fb;
    flatten(a, fa);
    flatten(b, fb);
    CHECK(fa == fb);
    Flow c = random_flow(6, 5, 43);
    std::vector<double> fc;
    flatten(c, fc);
    CHECK(fa != fc);
}

TEST_CASE("fresh flow is its affine output stage") {
    Flow flow = make_flow(8, 5, 0.97, 7);
    flow.out_scale = {2.0, 3.0};
    flow.out_shift = {-1.0, 0.5};
    Vec2 u{0.3, 0.6};
    ForwardResult r = flow_forward(flow, u);
    double lx = std::log(u.x / (1.0 - u.x));
    double ly = std::log(u.y / (1.0 - u.y));
    CHECK(r.x.x == doctest::Approx(2.0 * lx - 1.0).epsilon(1e-12));
    CHECK(r.x.y == doctest::Approx(3.0 * ly + 0.5).epsilon(1e-12));
}

TEST_CASE("forward rejects latents on the boundary") {
    Flow flow = make_flow(2, 3, 0.97, 1);
    CHECK_THROWS_AS(flow_forward(flow, {0.0, 0.5}), DomainError);
    CHECK_THROWS_AS(flow_forward(flow, {0.5, 1.0}), DomainError);
}

TEST_CASE("every normalized block respects the contraction budget") {
    Flow flow = random_flow(10, 5, 99);
    for (const auto& block : flow.blocks) {
        // re-measuring with more power iterations can only tighten the estimate
        // upward, so allow the residual convergence gap
        CHECK(block_lipschitz_bound(block, 200) <= 0.97 + 1e-6);
        CHECK(block.sn1 <= std::sqrt(0.97) + 1e-12);
        CHECK(block.sn2 <= std::sqrt(0.97) + 1e-12);
    }
}

TEST_CASE("inverse undoes forward across many flows and points") {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        Flow flow = random_flow(8, 5, 100 + s);
        Rng rng(split_seed(555, s));
        for (int i = 0; i < 100; ++i) {
            Vec2 u = random_interior_point(rng);
            ForwardResult fw = flow_forward(flow, u);
            InverseResult inv = flow_inverse(flow, fw.x, 1e-6, 400);
            worst = std::max(worst, std::fabs(inv.u.x - u.x));
            worst = std::max(worst, std::fabs(inv.u.y - u.y));
        }
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("inverse reports block inputs consistent with forward replay") {
    Flow flow = random_flow(5, 4, 3);
    Vec2 u{0.42, 0.77};
    ForwardResult fw = flow_forward(flow, u);
    InverseResult inv = flow_inverse(flow, fw.x, 1e-10, 500);
    REQUIRE(inv.block_inputs.size() == flow.blocks.size());
    CHECK(inv.residual <= 1e-9);
    CHECK(inv.iterations > 0);
    CHECK(std::fabs(inv.pre_sigmoid.x - std::log(u.x / (1.0 - u.x))) < 1e-6);
}

TEST_CASE("unreachable targets raise the convergence error") {
    Flow flow = random_flow(4, 4, 11);
    // cap the iterations so the fixed point cannot be reached
    CHECK_THROWS_AS(flow_inverse(flow, {0.1, 0.2}, 1e-16, 1), NoConvergenceError);
}

TEST_CASE("log determinant matches finite differences") {
    for (std::uint64_t s = 0; s < 3; ++s) {
        Flow flow = random_flow(6, 5, 300 + s);
        Rng rng(split_seed(777, s));
        for (int i = 0; i < 8; ++i) {
            Vec2 u = random_interior_point(rng);
            ForwardResult fw = flow_forward(flow, u);
            double fd = fd_jacobian_det(flow, u);
            CHECK(std::exp(fw.logdet) == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("log density integrates the change of variables") {
    Flow flow = random_flow(6, 5, 12);
    Rng rng(88);
    for (int i = 0; i < 10; ++i) {
        Vec2 u = random_interior_point(rng);
        ForwardResult fw = flow_forward(flow, u);
        // uniform base: density at x is exp(-logdet) evaluated at the preimage
        CHECK(flow_log_density(flow, fw.x, 1e-10, 500) ==
              doctest::Approx(-fw.logdet).epsilon(1e-6));
    }
}

TEST_CASE("outcome samples are deterministic and land in the pushforward range") {
    Flow flow = random_flow(6, 5, 21);
    std::vector<double> a = sample_flow_outcomes(flow, 500, 9);
    std::vector<double> b = sample_flow_outcomes(flow, 500, 9);
    CHECK(a == b);
    std::vector<double> c = sample_flow_outcomes(flow, 500, 10);
    CHECK(a != c);
}

TEST_CASE("flow parameter round trip") {
    Flow flow = random_flow(4, 5, 77);
    std::vector<double> theta;
    flatten(flow, theta);
    REQUIRE(theta.size() == param_count(flow));
    Flow other = make_flow(4, 5, 0.97, 1);
    unflatten(other, theta.data());
    std::vector<double> back;
    flatten(other, back);
    CHECK(back == theta);
    Vec2 u{0.25, 0.66};
    CHECK(flow_forward(other, u).x.y == flow_forward(flow, u).x.y);
}

TEST_CASE("taped forward and log density equal the plain evaluation") {
    Flow flow = random_flow(5, 5, 31);
    Vec2 u{0.37, 0.58};
    ForwardResult fw = flow_forward(flow, u);

    ad::Tape tape;
    std::vector<Var> leaves;
    FlowVars vars = lift_flow(tape, flow, &leaves);
    REQUIRE(leaves.size() == param_count(flow));
    std::array<Var, 2> x = flow_forward_taped(vars, u);
    CHECK(x[0].v == doctest::Approx(fw.x.x).epsilon(1e-14));
    CHECK(x[1].v == doctest::Approx(fw.x.y).epsilon(1e-14));

    std::array<Var, 2> xc = {ad::cvar(fw.x.x), ad::cvar(fw.x.y)};
    TapedLogDensity td = flow_log_density_taped(tape, flow, vars, xc, 1e-12, 500);
    CHECK(td.log_px.v ==
          doctest::Approx(flow_log_density(flow, fw.x, 1e-12, 500)).epsilon(1e-10));

    // frozen lift blocks every gradient
    ad::Tape t2;
    FlowVars frozen = lift_flow(t2, flow, nullptr);
    CHECK(t2.size() == 0);
    std::array<Var, 2> xf = flow_forward_taped(frozen, u);
    CHECK(xf[1].is_const());
}

TEST_CASE("taped log-density gradients match finite differences") {
    Flow flow = random_flow(3, 4, 61);
    Vec2 x{0.8, -0.4};

    ad::Tape tape;
    std::vector<Var> leaves;
    FlowVars vars = lift_flow(tape, flow, &leaves);
    std::array<Var, 2> xc = {ad::cvar(x.x), ad::cvar(x.y)};
    TapedLogDensity td = flow_log_density_taped(tape, flow, vars, xc, 1e-12, 800);
    std::vector<double> adj = tape.gradient(td.log_px);

    std::vector<double> theta;
    flatten(flow, theta);
    Rng pick(4);
    for (int k = 0; k < 25; ++k) {
        std::size_t i = pick.below(theta.size());
        double h = 1e-6;
        std::vector<double> tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        Flow fp = flow, fm = flow;
        unflatten(fp, tp.data());
        unflatten(fm, tm.data());
        double fd = (flow_log_density(fp, x, 1e-12, 800) -
                     flow_log_density(fm, x, 1e-12, 800)) /
                    (2.0 * h);
        double g = ad::Tape::adjoint_of(adj, leaves[i]);
        CHECK(g == doctest::Approx(fd).epsilon(5e-4));
    }
}

TEST_CASE("outcome jets agree with finite differences of the forward map") {
    Flow flow = random_flow(5, 5, 91);
    Vec2 u{0.44, 0.62};
    ad::Jet2<double> j = flow_outcome_jet(flow, u);
    CHECK(j.v == doctest::Approx(flow_forward(flow, u).x.y).epsilon(1e-12));

    auto outcome = [&](double a, double b) { return flow_forward(flow, {a, b}).x.y; };
    double h = 1e-5;
    double dx = (outcome(u.x + h, u.y) - outcome(u.x - h, u.y)) / (2.0 * h);
    double dy = (outcome(u.x, u.y + h) - outcome(u.x, u.y - h)) / (2.0 * h);
    CHECK(j.d1[0] == doctest::Approx(dx).epsilon(1e-6));
    CHECK(j.d1[1] == doctest::Approx(dy).epsilon(1e-6));

    double dxx = (outcome(u.x + h, u.y) - 2.0 * outcome(u.x, u.y) + outcome(u.x - h, u.y)) / (h * h);
    double dyy = (outcome(u.x, u.y + h) - 2.0 * outcome(u.x, u.y) + outcome(u.x, u.y - h)) / (h * h);
    double dxy = (outcome(u.x + h, u.y + h) - outcome(u.x + h, u.y - h) -
                  outcome(u.x - h, u.y + h) + outcome(u.x - h, u.y - h)) /
                 (4.0 * h * h);
    CHECK(j.d2[0] == doctest::Approx(dxx).epsilon(1e-3));
    CHECK(j.d2[1] == doctest::Approx(dxy).epsilon(1e-3));
    CHECK(j.d2[2] == doctest::Approx(dyy).epsilon(1e-3));

    // taped jet carries the same values
    ad::Tape tape;
    FlowVars vars = lift_flow(tape, flow, nullptr);
    ad::Jet2<Var> tj = flow_outcome_jet_taped(vars, u);
    CHECK(tj.v.v == doctest::Approx(j.v).epsilon(1e-14));
    CHECK(tj.d1[0].v == doctest::Approx(j.d1[0]).epsilon(1e-12));
    CHECK(tj.d2[2].v == doctest::Approx(j.d2[2]).epsilon(1e-12));
}
