#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfb/apid.hpp"
#include "cfb/bgm.hpp"
#include "cfb/data.hpp"
#include "cfb/level_oracle.hpp"
#include "cfb/training.hpp"

#include "run_manifest.hpp"
#include "svg.hpp"

namespace {

using nlohmann::json;
using namespace cfb;

// JSON rejects non-finite numbers; inactive losses are logged as null
json finite_or_null(double v) {
    if (std::isfinite(v)) return json(v);
    return json(nullptr);
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + path);
}

int thread_cap() {
    const char* env = std::getenv("CF_BOUNDS_THREADS");
    if (!env || !*env) return std::numeric_limits<int>::max();
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
        throw UsageError(std::string("CF_BOUNDS_THREADS must be a positive integer, got \"") +
                         env + "\"");
    }
    return static_cast<int>(v);
}

// ---------------------------------------------------------------- gen-data --

struct GenDataOpts {
    int dataset = 1;
    std::size_t n_per_arm = 1000;
    std::uint64_t seed = 0;
    std::string out;
};

void run_gen_data(const GenDataOpts& o) {
    RunManifest man;
    man.command = "gen-data";
    man.seed = o.seed;
    man.has_seed = true;
    man.config = {{"dataset", o.dataset}, {"n_per_arm", o.n_per_arm}, {"seed", o.seed},
                  {"out", o.out}};
    man.outputs = {o.out};
    const std::string man_path = manifest_path_for(o.out);
    write_manifest(man, man_path);

    DatasetSpec spec;
    spec.kind = o.dataset == 1 ? DatasetKind::dataset1 : DatasetKind::dataset2;
    spec.n_per_arm = o.n_per_arm;
    spec.seed = o.seed;
    write_csv(generate(spec), o.out, "manifest: " + man_path);
}

// ------------------------------------------------------------------ oracle --

struct OracleOpts {
    std::string scm = "m1";
    int a_prime = 0;
    double y_prime = 0.0;
    int a = 1;
    int grid_res = 512;
    int curve_points = 101;
    std::string out;
};

Scm2D scm_by_name(const std::string& name) {
    if (name == "m1") return make_m1();
    if (name == "m2") return make_m2();
    if (name == "boxmuller") return make_box_muller();
    if (name == "mperp") return make_m_perp();
    throw UsageError("unknown scm \"" + name + "\"");
}

void run_oracle(const OracleOpts& o) {
    std::string man_path;
    if (!o.out.empty()) {
        RunManifest man;
        man.command = "oracle";
        man.config = {{"scm", o.scm},       {"a_prime", o.a_prime},
                      {"y_prime", o.y_prime}, {"a", o.a},
                      {"grid_res", o.grid_res}, {"out", o.out}};
        man.outputs = {o.out};
        man_path = manifest_path_for(o.out);
        write_manifest(man, man_path);
    }

    Scm2D scm = scm_by_name(o.scm);
    Arm ap = arm_from_int(o.a_prime);
    Arm a = arm_from_int(o.a);
    OracleConfig cfg;
    cfg.grid_resolution = o.grid_res;

    double q = ecou_oracle(scm, ap, o.y_prime, a, cfg);

    json curves = json::array();
    for (int arm_i = 0; arm_i < 2; ++arm_i) {
        Arm arm = arm_from_int(arm_i);
        const Interval& sup = scm.support_of(arm);
        std::vector<double> ys(o.curve_points);
        // midpoint offsets keep every level strictly inside the support
        for (int i = 0; i < o.curve_points; ++i) {
            ys[i] = sup.lo + (sup.hi - sup.lo) * (i + 0.5) / o.curve_points;
        }
        std::vector<double> ps = observational_density_curve(scm, arm, ys, cfg);
        curves.push_back({{"arm", arm_i}, {"y", ys}, {"p", ps}});
    }

    json result{{"scm", o.scm},
                {"query", {{"a_prime", o.a_prime}, {"y_prime", o.y_prime}, {"a", o.a}}},
                {"grid_res", o.grid_res},
                {"q", q},
                {"density_curve", curves}};
    if (o.out.empty()) {
        result["manifest"] = nullptr;
        std::cout << result.dump(2) << "\n";
    } else {
        result["manifest"] = man_path;
        write_json_file(result, o.out);
    }
}

// --------------------------------------------------------------------- bgm --

struct BgmOpts {
    std::string data;
    std::string direction = "0to1";
    std::string grid = "-2:2:41";
    std::string out;
};

std::vector<double> parse_grid(const std::string& spec) {
    double lo = 0.0, hi = 0.0;
    int n = 0;
    char extra = '\0';
    if (std::sscanf(spec.c_str(), "%lf:%lf:%d%c", &lo, &hi, &n, &extra) != 3 || n < 2 ||
        !(hi > lo)) {
        throw UsageError("grid must be \"lo:hi:n\" with hi > lo and n >= 2, got \"" +
                         spec + "\"");
    }
    std::vector<double> ys(n);
    for (int i = 0; i < n; ++i) ys[i] = lo + (hi - lo) * i / (n - 1);
    return ys;
}

void run_bgm(const BgmOpts& o) {
    if (o.direction != "0to1" && o.direction != "1to0") {
        throw UsageError("direction must be 0to1 or 1to0, got \"" + o.direction + "\"");
    }
    std::vector<double> ys = parse_grid(o.grid);

    RunManifest man;
    man.command = "bgm";
    man.config = {{"data", o.data}, {"direction", o.direction}, {"grid", o.grid},
                  {"out", o.out}};
    man.outputs = {o.out};
    const std::string man_path = manifest_path_for(o.out);
    write_manifest(man, man_path);

    Dataset data = read_csv(o.data);
    Arm a_prime = o.direction == "0to1" ? Arm::a0 : Arm::a1;
    Arm a = other_arm(a_prime);
    EmpiricalDist d_cf = make_empirical(data.outcomes(a));
    EmpiricalDist d_f = make_empirical(data.outcomes(a_prime));
    if (d_cf.values.empty() || d_f.values.empty()) {
        throw DomainError("dataset must contain both arms");
    }
    BgmCurve curve = bgm_curve(d_cf, d_f, ys);

    std::ofstream out(o.out);
    if (!out) throw IoError("cannot open " + o.out + " for writing");
    out << "# manifest: " << man_path << "\n";
    out << "y_prime,q_increasing,q_decreasing\n";
    char buf[96];
    for (std::size_t i = 0; i < curve.y_prime.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", curve.y_prime[i],
                      curve.q_increasing[i], curve.q_decreasing[i]);
        out << buf;
    }
    if (!out) throw IoError("failed writing " + o.out);
}

// -------------------------------------------------------------------- apid --

struct ApidOpts {
    std::string data;
    int a_prime = 0;
    std::vector<double> y_primes{1.0};
    int a = 1;
    double lambda_q = 1.0;
    double lambda_kappa = 0.0;
    std::uint64_t seed = 0;
    std::string preset = "full";
    int jobs = 1;
    std::string out;
    // optional trainer overrides, -1 keeps the preset value
    int n_burnin = -1;
    int n_query = -1;
    int n_curv_query = -1;
    int batch = -1;
    int eval_batch = -1;
    double tol = -1.0;
    int max_iter = -1;
};

std::string run_suffix(std::size_t idx, std::size_t total) {
    return total == 1 ? std::string() : "_y" + std::to_string(idx);
}

void run_apid(const ApidOpts& o) {
    if (o.y_primes.empty()) throw UsageError("at least one --yprime value is required");

    TrainConfig base = o.preset == "desk" ? desk_preset() : full_preset();
    base.lambda_q = o.lambda_q;
    base.lambda_kappa = o.lambda_kappa;
    if (o.n_burnin >= 0) base.n_burnin = o.n_burnin;
    if (o.n_query >= 0) base.n_query = o.n_query;
    if (o.n_curv_query >= 0) base.n_curv_query = o.n_curv_query;
    if (o.batch > 0) base.batch = o.batch;
    if (o.eval_batch > 0) base.eval_batch = o.eval_batch;
    if (o.tol > 0.0) base.tol = o.tol;
    if (o.max_iter > 0) base.max_iter = o.max_iter;

    const std::string man_path = manifest_path_for(o.out);
    // sidecar files drop the result's extension: out.json -> out_y0.log.jsonl
    std::string stem = o.out;
    std::size_t dot = stem.find_last_of('.');
    std::size_t slash = stem.find_last_of('/');
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
        stem.erase(dot);
    }
    const std::size_t n_runs = o.y_primes.size();

    std::vector<std::string> log_paths(n_runs), up_paths(n_runs), lo_paths(n_runs);
    for (std::size_t i = 0; i < n_runs; ++i) {
        std::string sfx = run_suffix(i, n_runs);
        log_paths[i] = stem + sfx + ".log.jsonl";
        up_paths[i] = stem + sfx + ".upper.ckpt.json";
        lo_paths[i] = stem + sfx + ".lower.ckpt.json";
    }

    RunManifest man;
    man.command = "apid";
    man.seed = o.seed;
    man.has_seed = true;
    man.config = {{"data", o.data},
                  {"a_prime", o.a_prime},
                  {"y_prime", o.y_primes},
                  {"a", o.a},
                  {"lambda_q", o.lambda_q},
                  {"lambda_kappa", o.lambda_kappa},
                  {"seed", o.seed},
                  {"preset", o.preset},
                  {"jobs", o.jobs},
                  {"n_burnin", base.n_burnin},
                  {"n_query", base.n_query},
                  {"n_curv_query", base.n_curv_query},
                  {"batch", base.batch},
                  {"eval_batch", base.eval_batch},
                  {"out", o.out}};
    man.outputs.push_back(o.out);
    for (std::size_t i = 0; i < n_runs; ++i) {
        man.outputs.push_back(log_paths[i]);
        man.outputs.push_back(up_paths[i]);
        man.outputs.push_back(lo_paths[i]);
    }
    write_manifest(man, man_path);

    Dataset data = read_csv(o.data);
    Arm ap = arm_from_int(o.a_prime);
    Arm a = arm_from_int(o.a);

    struct RunSlot {
        BoundsResult result;
        std::vector<IterationRecord> records;
        std::uint64_t seed = 0;
        std::exception_ptr error;
        bool done = false;
    };
    std::vector<RunSlot> slots(n_runs);
    for (std::size_t i = 0; i < n_runs; ++i) {
        // one derived stream per evidence value keeps sweeps order-independent
        slots[i].seed = split_seed(o.seed, static_cast<std::uint64_t>(i));
    }

    int workers = std::min<int>({o.jobs, static_cast<int>(n_runs), thread_cap()});
    workers = std::max(workers, 1);

    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n_runs) return;
            RunSlot& slot = slots[i];
            try {
                TrainConfig cfg = base;
                cfg.seed = slot.seed;
                slot.result = train_bounds(data, ap, o.y_primes[i], a, cfg,
                                           [&slot](const IterationRecord& rec) {
                                               slot.records.push_back(rec);
                                           });
                slot.done = true;
            } catch (...) {
                slot.error = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (auto& slot : slots) {
        if (slot.error) std::rethrow_exception(slot.error);
    }

    // ordered assembly: every artifact is written by the main thread
    json runs = json::array();
    for (std::size_t i = 0; i < n_runs; ++i) {
        const RunSlot& slot = slots[i];
        std::ofstream log(log_paths[i]);
        if (!log) throw IoError("cannot open " + log_paths[i] + " for writing");
        log << json{{"manifest", man_path}}.dump() << "\n";
        for (const IterationRecord& r : slot.records) {
            json rec{{"iteration", r.iteration},
                     {"stage", stage_name(r.stage)},
                     {"entity", r.entity},
                     {"loss_nll", finite_or_null(r.loss_nll)},
                     {"loss_w", finite_or_null(r.loss_w)},
                     {"loss_q", finite_or_null(r.loss_q)},
                     {"loss_kappa", finite_or_null(r.loss_kappa)},
                     {"loss_total", finite_or_null(r.loss_total)},
                     {"q_hat", finite_or_null(r.q_hat)},
                     {"inversion_attempts", r.inversion_attempts},
                     {"inversion_failures", r.inversion_failures}};
            log << rec.dump() << "\n";
        }
        if (!log) throw IoError("failed writing " + log_paths[i]);

        save_model(slot.result.upper_model, up_paths[i], man_path);
        save_model(slot.result.lower_model, lo_paths[i], man_path);

        runs.push_back({{"y_prime", o.y_primes[i]},
                        {"seed", slot.seed},
                        {"lower", slot.result.lower},
                        {"upper", slot.result.upper},
                        {"support", {slot.result.support_estimate.lo,
                                     slot.result.support_estimate.hi}},
                        {"log", log_paths[i]},
                        {"checkpoints", {{"upper", up_paths[i]}, {"lower", lo_paths[i]}}}});
    }

    json result{{"manifest", man_path},
                {"data", o.data},
                {"preset", o.preset == "desk" ? "desk" : "full"},
                {"lambda_q", o.lambda_q},
                {"lambda_kappa", o.lambda_kappa},
                {"seed", o.seed},
                {"query", {{"a_prime", o.a_prime}, {"a", o.a}}},
                {"runs", runs}};
    write_json_file(result, o.out);
}

// -------------------------------------------------------------------- plot --

struct PlotOpts {
    std::vector<std::string> inputs;
    std::string out;
    int arm = 1;
    int grid_res = 61;
    std::string title;
};

struct BgmCsv {
    std::vector<double> y, inc, dec;
};

BgmCsv read_bgm_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    BgmCsv c;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "y_prime,q_increasing,q_decreasing") {
                throw UsageError(path + ": not a bgm curve csv");
            }
            header_seen = true;
            continue;
        }
        double y, qi, qd;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &y, &qi, &qd) != 3) {
            throw IoError(path + ": malformed line \"" + line + "\"");
        }
        c.y.push_back(y);
        c.inc.push_back(qi);
        c.dec.push_back(qd);
    }
    if (!header_seen) throw UsageError(path + ": not a bgm curve csv");
    return c;
}

void plot_curves(const std::vector<BgmCsv>& bgms, const std::vector<json>& bounds,
                 const PlotOpts& o, const std::string& man_path) {
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    auto grow = [&](double x, double y) {
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
    };
    for (const auto& b : bgms) {
        for (std::size_t i = 0; i < b.y.size(); ++i) {
            grow(b.y[i], b.inc[i]);
            grow(b.y[i], b.dec[i]);
        }
    }
    for (const auto& j : bounds) {
        for (const auto& run : j.at("runs")) {
            grow(run.at("y_prime").get<double>(), run.at("lower").get<double>());
            grow(run.at("y_prime").get<double>(), run.at("upper").get<double>());
        }
    }
    double pad_x = 0.05 * (x_hi - x_lo + 1e-9);
    double pad_y = 0.05 * (y_hi - y_lo + 1e-9);

    svg::Canvas canvas(640, 480, x_lo - pad_x, x_hi + pad_x, y_lo - pad_y, y_hi + pad_y);
    canvas.comment("manifest: " + man_path);
    std::vector<std::pair<std::string, std::string>> legend;

    if (!bounds.empty()) {
        // support band of the first result, for orientation
        const auto& run0 = bounds.front().at("runs").front();
        double s_lo = run0.at("support")[0].get<double>();
        double s_hi = run0.at("support")[1].get<double>();
        const std::string sup_style = "stroke:#aaa;stroke-width:1;stroke-dasharray:2,3";
        canvas.line(x_lo - pad_x, s_lo, x_hi + pad_x, s_lo, sup_style);
        canvas.line(x_lo - pad_x, s_hi, x_hi + pad_x, s_hi, sup_style);
        legend.push_back({"support estimate", sup_style});
    }
    for (std::size_t bi = 0; bi < bgms.size(); ++bi) {
        const auto& b = bgms[bi];
        std::vector<std::pair<double, double>> inc, dec;
        for (std::size_t i = 0; i < b.y.size(); ++i) {
            inc.push_back({b.y[i], b.inc[i]});
            dec.push_back({b.y[i], b.dec[i]});
        }
        canvas.polyline(inc, "stroke:#1f77b4;stroke-width:1.5");
        canvas.polyline(dec, "stroke:#d62728;stroke-width:1.5;stroke-dasharray:5,3");
        if (bi == 0) {
            legend.push_back({"monotone increasing", "stroke:#1f77b4;stroke-width:1.5"});
            legend.push_back(
                {"monotone decreasing", "stroke:#d62728;stroke-width:1.5;stroke-dasharray:5,3"});
        }
    }
    for (std::size_t ji = 0; ji < bounds.size(); ++ji) {
        const json& j = bounds[ji];
        std::string color = svg::color_cycle(2 + ji);
        std::string style = "stroke:" + color + ";stroke-width:2";
        char label[64];
        std::snprintf(label, sizeof(label), "bounds, lambda_kappa=%g",
                      j.at("lambda_kappa").get<double>());
        legend.push_back({label, style});
        for (const auto& run : j.at("runs")) {
            double x = run.at("y_prime").get<double>();
            double lo = run.at("lower").get<double>();
            double hi = run.at("upper").get<double>();
            canvas.line(x, lo, x, hi, style);
            double cap = 0.012 * (x_hi - x_lo + 2 * pad_x);
            canvas.line(x - cap, lo, x + cap, lo, style);
            canvas.line(x - cap, hi, x + cap, hi, style);
        }
    }
    canvas.axes("evidence y'", "counterfactual mean");
    canvas.legend(legend);
    if (!o.title.empty()) canvas.title(o.title);
    canvas.write(o.out);
}

void plot_heatmap(const std::string& ckpt_path, const PlotOpts& o,
                  const std::string& man_path) {
    ApidModel m = load_model(ckpt_path);
    Arm arm = arm_from_int(o.arm);
    const Flow& flow = flow_of(m, arm);
    int res = o.grid_res;

    std::vector<double> kappa(static_cast<std::size_t>(res) * res,
                              std::numeric_limits<double>::quiet_NaN());
    std::vector<double> mags;
    mags.reserve(kappa.size());
    for (int i = 0; i < res; ++i) {
        for (int j = 0; j < res; ++j) {
            Vec2 u{(i + 0.5) / res, (j + 0.5) / res};
            try {
                double k = curvature_at(m, arm, u);
                kappa[static_cast<std::size_t>(i) * res + j] = k;
                mags.push_back(std::fabs(k));
            } catch (const NumericalError&) {
                // flat spots render as gaps
            }
        }
    }
    if (mags.empty()) throw NumericalError("curvature is degenerate everywhere");
    std::sort(mags.begin(), mags.end());
    // robust scale so a few spikes do not wash out the map
    double scale = std::max(mags[static_cast<std::size_t>(0.95 * (mags.size() - 1))],
                            1e-12);

    svg::Canvas canvas(560, 520, 0.0, 1.0, 0.0, 1.0, svg::Margin{64, 18, 30, 48});
    canvas.comment("manifest: " + man_path);
    double cell = 1.0 / res;
    for (int i = 0; i < res; ++i) {
        for (int j = 0; j < res; ++j) {
            double k = kappa[static_cast<std::size_t>(i) * res + j];
            std::string fill =
                std::isfinite(k) ? svg::heat_color(std::fabs(k) / scale) : "#cccccc";
            canvas.rect(i * cell, j * cell, cell, cell, fill);
        }
    }

    // level-set overlay of the outcome map at evenly spaced sample quantiles
    std::vector<double> sample = sample_flow_outcomes(flow, 2000, 9001);
    std::sort(sample.begin(), sample.end());
    Scm2D wrap;
    wrap.name = "flow-outcome";
    wrap.f = [&flow](Arm, Vec2 u) {
        // grid nodes touch the square's edge where the logit head diverges
        u.x = std::clamp(u.x, 1e-9, 1.0 - 1e-9);
        u.y = std::clamp(u.y, 1e-9, 1.0 - 1e-9);
        return flow_forward(flow, u).x.y;
    };
    Interval span{sample.front() - 1.0, sample.back() + 1.0};
    wrap.support = {span, span};
    OracleConfig cfg;
    cfg.grid_resolution = 96;
    for (int qi = 1; qi <= 9; ++qi) {
        double level = sample[sample.size() * qi / 10];
        try {
            LevelSetPolyline poly = trace_level_set(wrap, arm, level, cfg);
            for (const auto& comp : poly.components) {
                std::vector<std::pair<double, double>> pts;
                pts.reserve(comp.size());
                for (const Vec2& p : comp) pts.push_back({p.x, p.y});
                canvas.polyline(pts, "stroke:#222;stroke-width:0.8;stroke-opacity:0.75");
            }
        } catch (const EmptyLevelSetError&) {
            // level can fall outside the traced grid range near the tails
        }
    }

    canvas.axes("latent u1", "latent u2", 5, 5);
    char note[96];
    std::snprintf(note, sizeof(note), "|curvature| color scale caps at %.3g", scale);
    canvas.text_px(canvas.plot_left(), canvas.plot_bottom() + 34.0, note, "start", 11.0);
    if (!o.title.empty()) canvas.title(o.title);
    canvas.write(o.out);
}

void run_plot(const PlotOpts& o) {
    if (o.inputs.empty()) throw UsageError("plot requires at least one --inputs file");

    RunManifest man;
    man.command = "plot";
    man.config = {{"inputs", o.inputs}, {"out", o.out}, {"arm", o.arm},
                  {"grid_res", o.grid_res}};
    man.outputs = {o.out};
    const std::string man_path = manifest_path_for(o.out);
    write_manifest(man, man_path);

    std::vector<BgmCsv> bgms;
    std::vector<json> bounds;
    std::vector<std::string> ckpts;
    for (const std::string& path : o.inputs) {
        if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
            bgms.push_back(read_bgm_csv(path));
            continue;
        }
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw IoError(path + ": invalid json: " + e.what());
        }
        if (j.is_object() && j.value("format", "") == "apid-checkpoint") {
            ckpts.push_back(path);
        } else if (j.is_object() && j.contains("runs")) {
            bounds.push_back(std::move(j));
        } else {
            throw UsageError(path + ": neither a bounds result, a checkpoint, nor a bgm csv");
        }
    }

    if (!ckpts.empty()) {
        if (ckpts.size() > 1 || !bgms.empty() || !bounds.empty()) {
            throw UsageError("a curvature heatmap takes exactly one checkpoint input");
        }
        plot_heatmap(ckpts.front(), o, man_path);
        return;
    }
    plot_curves(bgms, bounds, o, man_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"partial counterfactual identification toolkit"};
    app.require_subcommand(1);

    GenDataOpts gen;
    auto* sc_gen = app.add_subcommand("gen-data", "draw a synthetic dataset as CSV");
    sc_gen->add_option("--dataset", gen.dataset, "dataset family")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    sc_gen->add_option("--n-per-arm", gen.n_per_arm, "records per arm")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc_gen->add_option("--seed", gen.seed, "rng seed")->capture_default_str();
    sc_gen->add_option("--out", gen.out, "output csv path")->required();

    OracleOpts ora;
    auto* sc_ora = app.add_subcommand(
        "oracle", "analytic counterfactual mean and density curves of a fixture");
    sc_ora->add_option("--scm", ora.scm, "fixture name")
        ->check(CLI::IsMember({"m1", "m2", "boxmuller", "mperp"}))
        ->capture_default_str();
    sc_ora->add_option("--aprime", ora.a_prime, "factual arm")
        ->check(CLI::IsMember({0, 1}))
        ->capture_default_str();
    sc_ora->add_option("--yprime", ora.y_prime, "factual evidence")->capture_default_str();
    sc_ora->add_option("--a", ora.a, "counterfactual arm")
        ->check(CLI::IsMember({0, 1}))
        ->capture_default_str();
    sc_ora->add_option("--grid-res", ora.grid_res, "level tracing grid resolution")
        ->check(CLI::Range(16, 4096))
        ->capture_default_str();
    sc_ora->add_option("--curve-points", ora.curve_points, "density curve points per arm")
        ->check(CLI::Range(3, 2001))
        ->capture_default_str();
    sc_ora->add_option("--out", ora.out, "output json path (stdout when omitted)");

    BgmOpts bgm;
    auto* sc_bgm = app.add_subcommand(
        "bgm", "monotone point-identification curves from an observed dataset");
    sc_bgm->add_option("--data", bgm.data, "input csv")->required();
    sc_bgm->add_option("--direction", bgm.direction, "0to1 or 1to0")
        ->capture_default_str();
    sc_bgm->add_option("--grid", bgm.grid, "evidence grid lo:hi:n")->capture_default_str();
    sc_bgm->add_option("--out", bgm.out, "output csv path")->required();

    ApidOpts apid;
    auto* sc_apid = app.add_subcommand(
        "apid", "train bound models for a counterfactual query on observed data");
    sc_apid->add_option("--data", apid.data, "input csv")->required();
    sc_apid->add_option("--aprime", apid.a_prime, "factual arm")
        ->check(CLI::IsMember({0, 1}))
        ->capture_default_str();
    sc_apid->add_option("--yprime", apid.y_primes, "evidence values (repeat or comma separate)")
        ->delimiter(',')
        ->capture_default_str();
    sc_apid->add_option("--a", apid.a, "counterfactual arm")
        ->check(CLI::IsMember({0, 1}))
        ->capture_default_str();
    sc_apid->add_option("--lambda-q", apid.lambda_q, "query loss weight")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sc_apid->add_option("--lambda-kappa", apid.lambda_kappa, "curvature loss weight")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sc_apid->add_option("--seed", apid.seed, "rng seed")->capture_default_str();
    sc_apid
        ->add_option("--preset", apid.preset,
                     "desk (reduced batch and final stage) or full scale")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, std::string>{
                {"desk", "desk"}, {"full", "full"}, {"paper", "full"}},
            CLI::ignore_case))
        ->capture_default_str();
    sc_apid->add_option("--jobs", apid.jobs, "parallel workers for evidence sweeps")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc_apid->add_option("--out", apid.out, "output json path")->required();
    auto* tuning = sc_apid->add_option_group("tuning", "iteration overrides");
    tuning->add_option("--n-burnin", apid.n_burnin, "burn-in iterations");
    tuning->add_option("--n-query", apid.n_query, "query-stage iterations");
    tuning->add_option("--n-curv-query", apid.n_curv_query, "curvature-stage iterations");
    tuning->add_option("--batch", apid.batch, "minibatch size");
    tuning->add_option("--eval-batch", apid.eval_batch, "final evaluation draws");
    tuning->add_option("--tol", apid.tol, "fixed-point inversion tolerance");
    tuning->add_option("--max-iter", apid.max_iter, "fixed-point iteration cap");

    PlotOpts plot;
    auto* sc_plot = app.add_subcommand(
        "plot", "render bound results, monotone curves, or a curvature heatmap as SVG");
    sc_plot->add_option("--inputs", plot.inputs,
                        "bounds json, bgm csv, or one checkpoint json");
    sc_plot->add_option("--out", plot.out, "output svg path")->required();
    sc_plot->add_option("--arm", plot.arm, "arm rendered in heatmap mode")
        ->check(CLI::IsMember({0, 1}))
        ->capture_default_str();
    sc_plot->add_option("--grid-res", plot.grid_res, "heatmap cells per axis")
        ->check(CLI::Range(8, 256))
        ->capture_default_str();
    sc_plot->add_option("--title", plot.title, "plot title");

    try {
        app.parse(argc, argv);
        if (sc_gen->parsed()) run_gen_data(gen);
        if (sc_ora->parsed()) run_oracle(ora);
        if (sc_bgm->parsed()) run_bgm(bgm);
        if (sc_apid->parsed()) run_apid(apid);
        if (sc_plot->parsed()) run_plot(plot);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
