#include <benchmark/benchmark.h>

#include <vector>

#include "cfb/apid.hpp"
#include "cfb/data.hpp"
#include "cfb/level_oracle.hpp"
#include "cfb/resflow.hpp"
#include "cfb/scm.hpp"
#include "cfb/training.hpp"

using namespace cfb;

namespace {

Flow bench_flow(int n_blocks, std::uint64_t seed) {
    Flow flow = make_flow(n_blocks, 5, 0.97, seed);
    Rng rng(split_seed(seed, 1001));
    for (auto& block : flow.blocks) {
        for (double& w : block.g.w2) w = rng.uniform(-0.9, 0.9);
        for (double& w : block.g.b2) w = rng.uniform(-0.3, 0.3);
    }
    normalize_lipschitz(flow);
    return flow;
}

ApidModel bench_model() {
    ApidModel m = make_apid_model(15, 5, 5, 0.25, 0.97, 42);
    m.flow0 = bench_flow(15, 1);
    m.flow1 = bench_flow(15, 2);
    return m;
}

void bm_trace_level_set(benchmark::State& state) {
    Scm2D m2 = make_m2();
    OracleConfig cfg;
    cfg.grid_resolution = static_cast<int>(state.range(0));
    for (auto _ : state) {
        LevelSetPolyline poly = trace_level_set(m2, Arm::a1, 1.3, cfg);
        benchmark::DoNotOptimize(poly.total_length());
    }
}
BENCHMARK(bm_trace_level_set)->Arg(128)->Arg(512);

void bm_ecou_oracle(benchmark::State& state) {
    Scm2D m2 = make_m2();
    OracleConfig cfg;
    cfg.grid_resolution = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(ecou_oracle(m2, Arm::a0, 0.0, Arm::a1, cfg));
    }
}
BENCHMARK(bm_ecou_oracle)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void bm_flow_forward(benchmark::State& state) {
    Flow flow = bench_flow(static_cast<int>(state.range(0)), 7);
    Vec2 u{0.37, 0.62};
    for (auto _ : state) {
        benchmark::DoNotOptimize(flow_forward(flow, u).x.y);
    }
}
BENCHMARK(bm_flow_forward)->Arg(6)->Arg(15);

void bm_flow_inverse(benchmark::State& state) {
    Flow flow = bench_flow(static_cast<int>(state.range(0)), 7);
    Vec2 x = flow_forward(flow, {0.37, 0.62}).x;
    for (auto _ : state) {
        benchmark::DoNotOptimize(flow_inverse(flow, x, 1e-4, 500).u.x);
    }
}
BENCHMARK(bm_flow_inverse)->Arg(6)->Arg(15);

void bm_flow_log_density(benchmark::State& state) {
    Flow flow = bench_flow(15, 7);
    Vec2 x = flow_forward(flow, {0.37, 0.62}).x;
    for (auto _ : state) {
        benchmark::DoNotOptimize(flow_log_density(flow, x, 1e-4, 500));
    }
}
BENCHMARK(bm_flow_log_density);

void bm_loss_nll_batch32(benchmark::State& state) {
    ApidModel m = bench_model();
    DatasetSpec spec;
    spec.n_per_arm = 32;
    spec.seed = 9;
    Dataset data = generate(spec);
    std::vector<double> batch = data.outcomes(Arm::a0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_nll(m, Arm::a0, batch, 1e-6, 11, 1e-4, 500));
    }
}
BENCHMARK(bm_loss_nll_batch32)->Unit(benchmark::kMillisecond);

void bm_taped_log_density_gradient(benchmark::State& state) {
    Flow flow = bench_flow(15, 7);
    Vec2 x = flow_forward(flow, {0.37, 0.62}).x;
    for (auto _ : state) {
        ad::Tape tape;
        std::vector<ad::Var> leaves;
        FlowVars vars = lift_flow(tape, flow, &leaves);
        TapedLogDensity ld = flow_log_density_taped(
            tape, flow, vars, {ad::cvar(x.x), ad::cvar(x.y)}, 1e-4, 500);
        std::vector<double> adj = tape.gradient(ld.log_px);
        benchmark::DoNotOptimize(adj.data());
    }
}
BENCHMARK(bm_taped_log_density_gradient)->Unit(benchmark::kMillisecond);

void bm_curvature_penalty(benchmark::State& state) {
    ApidModel m = bench_model();
    for (auto _ : state) {
        CurvaturePenalty p = curvature_penalty(m, Arm::a1, 0.4, 16, 13, true, 1e-4, 500);
        benchmark::DoNotOptimize(p.value);
    }
}
BENCHMARK(bm_curvature_penalty)->Unit(benchmark::kMillisecond);

void bm_curvature_at(benchmark::State& state) {
    ApidModel m = bench_model();
    Vec2 u{0.41, 0.58};
    for (auto _ : state) {
        benchmark::DoNotOptimize(curvature_at(m, Arm::a1, u));
    }
}
BENCHMARK(bm_curvature_at);

}  // namespace

BENCHMARK_MAIN();
