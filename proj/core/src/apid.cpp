#include "cfb/apid.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cfb/errors.hpp"
#include "cfb/rng.hpp"

namespace cfb {

using nlohmann::json;

namespace {

void init_gnet(ad::MlpParams& g, int hidden, Rng& rng) {
    g.resize(1, hidden, 1);
    double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& w : g.w1) w = rng.uniform(-1.0, 1.0);
    for (auto& w : g.b1) w = rng.uniform(-1.0, 1.0);
    for (auto& w : g.w2) w = rng.uniform(-b2, b2);
    for (auto& w : g.b2) w = 0.0;
}

constexpr double kHalfLog2Pi = 0.9189385332046727;

}  // namespace

ApidModel make_apid_model(int n_blocks, int hidden_flow, int hidden_aug, double eps2,
                          double lipschitz_target, std::uint64_t seed) {
    if (eps2 <= 0.0) throw DomainError("augmentation variance must be positive");
    ApidModel m;
    m.eps2 = eps2;
    m.flow0 = make_flow(n_blocks, hidden_flow, lipschitz_target, split_seed(seed, 11));
    m.flow1 = make_flow(n_blocks, hidden_flow, lipschitz_target, split_seed(seed, 12));
    Rng rng0(split_seed(seed, 13));
    Rng rng1(split_seed(seed, 14));
    init_gnet(m.g0, hidden_aug, rng0);
    init_gnet(m.g1, hidden_aug, rng1);
    return m;
}

const Flow& flow_of(const ApidModel& m, Arm a) { return a == Arm::a0 ? m.flow0 : m.flow1; }
Flow& flow_of(ApidModel& m, Arm a) { return a == Arm::a0 ? m.flow0 : m.flow1; }
const ad::MlpParams& gnet_of(const ApidModel& m, Arm a) { return a == Arm::a0 ? m.g0 : m.g1; }
ad::MlpParams& gnet_of(ApidModel& m, Arm a) { return a == Arm::a0 ? m.g0 : m.g1; }

double gnet_eval(const ad::MlpParams& g, double y) {
    double out = 0.0;
    ad::mlp_apply(g, &y, &out);
    return out;
}

std::vector<AugmentedPair> augment(const ApidModel& m, Arm a, double y, int b,
                                   std::uint64_t seed) {
    if (b < 1) throw DomainError("augment: need at least one draw");
    double mean = gnet_eval(gnet_of(m, a), y);
    double eps = std::sqrt(m.eps2);
    Rng rng(seed);
    std::vector<AugmentedPair> out;
    out.reserve(static_cast<std::size_t>(b));
    for (int j = 0; j < b; ++j) out.push_back({mean + eps * rng.normal(), y});
    return out;
}

double log_likelihood(const ApidModel& m, Arm a, double y, int b, std::uint64_t seed,
                      double tol, int max_iter) {
    auto pairs = augment(m, a, y, b, seed);
    double mean = gnet_eval(gnet_of(m, a), y);
    const Flow& flow = flow_of(m, a);
    double acc = 0.0;
    for (const auto& p : pairs) {
        double log_joint = flow_log_density(flow, {p.y_aug, p.y}, tol, max_iter);
        double z = p.y_aug - mean;
        double log_prop = -kHalfLog2Pi - 0.5 * std::log(m.eps2) - 0.5 * z * z / m.eps2;
        acc += log_joint - log_prop;
    }
    return acc / static_cast<double>(b);
}

QueryResult abduct(const ApidModel& m, Arm a_prime, double y_prime, int b,
                   std::uint64_t seed, double tol, int max_iter) {
    QueryResult res;
    res.latents.reserve(static_cast<std::size_t>(b));
    const Flow& flow = flow_of(m, a_prime);
    for (const auto& p : augment(m, a_prime, y_prime, b, seed)) {
        try {
            res.latents.push_back(flow_inverse(flow, {p.y_aug, p.y}, tol, max_iter).u);
        } catch (const NoConvergenceError&) {
            ++res.failed_inversions;
        }
    }
    if (res.latents.empty()) {
        throw NoConvergenceError("abduct: every augmented inversion failed", 0.0);
    }
    return res;
}

QueryResult ecou_estimate(const ApidModel& m, Arm a_prime, double y_prime, Arm a, int b,
                          std::uint64_t seed, double tol, int max_iter) {
    if (a == a_prime) throw DomainError("ecou_estimate: factual and query arms must differ");
    QueryResult res = abduct(m, a_prime, y_prime, b, seed, tol, max_iter);
    const Flow& flow = flow_of(m, a);
    res.outcomes.reserve(res.latents.size());
    double acc = 0.0;
    for (const Vec2& u : res.latents) {
        double out = flow_forward(flow, u).x.y;
        res.outcomes.push_back(out);
        acc += out;
    }
    res.q_hat = acc / static_cast<double>(res.outcomes.size());
    return res;
}

double curvature_from_jet(const ad::Jet2<double>& jet) {
    double fx = jet.d1[0], fy = jet.d1[1];
    double fxx = jet.d2[0], fxy = jet.d2[1], fyy = jet.d2[2];
    double g2 = fx * fx + fy * fy;
    if (g2 <= 1e-24) {
        throw DegenerateGradientError("level-set curvature undefined: gradient norm below 1e-12");
    }
    return -(fy * fy * fxx - 2.0 * fx * fy * fxy + fx * fx * fyy) / (g2 * std::sqrt(g2));
}

double curvature_at(const ApidModel& m, Arm a, Vec2 u) {
    return curvature_from_jet(flow_outcome_jet(flow_of(m, a), u));
}

CurvaturePenalty curvature_penalty(const ApidModel& m, Arm a, double y_hat, int b,
                                   std::uint64_t seed, bool absolute, double tol,
                                   int max_iter) {
    CurvaturePenalty pen;
    QueryResult points = abduct(m, a, y_hat, b, seed, tol, max_iter);
    pen.failed_inversions = points.failed_inversions;
    const Flow& flow = flow_of(m, a);
    double acc = 0.0;
    int used = 0;
    for (const Vec2& u : points.latents) {
        try {
            double k = curvature_from_jet(flow_outcome_jet(flow, u));
            acc += absolute ? std::fabs(k) : k;
            ++used;
        } catch (const DegenerateGradientError&) {
            ++pen.skipped_degenerate;
        }
    }
    if (used == 0) {
        throw NumericalError("curvature_penalty: no usable level-set points");
    }
    pen.value = acc / static_cast<double>(used);
    return pen;
}

// --------------------------------------------------------------------------
// checkpoint io
// --------------------------------------------------------------------------

namespace {

json mlp_to_json(const ad::MlpParams& m) {
    return json{{"in", m.in},   {"hidden", m.hidden}, {"out", m.out}, {"w1", m.w1},
                {"b1", m.b1},   {"w2", m.w2},         {"b2", m.b2}};
}

ad::MlpParams mlp_from_json(const json& j) {
    ad::MlpParams m;
    m.resize(j.at("in").get<int>(), j.at("hidden").get<int>(), j.at("out").get<int>());
    m.w1 = j.at("w1").get<std::vector<double>>();
    m.b1 = j.at("b1").get<std::vector<double>>();
    m.w2 = j.at("w2").get<std::vector<double>>();
    m.b2 = j.at("b2").get<std::vector<double>>();
    if (m.w1.size() != static_cast<std::size_t>(m.hidden * m.in) ||
        m.b1.size() != static_cast<std::size_t>(m.hidden) ||
        m.w2.size() != static_cast<std::size_t>(m.out * m.hidden) ||
        m.b2.size() != static_cast<std::size_t>(m.out)) {
        throw IoError("checkpoint: inconsistent perceptron shapes");
    }
    return m;
}

json flow_to_json(const Flow& f) {
    json blocks = json::array();
    for (const auto& b : f.blocks) blocks.push_back(mlp_to_json(b.g));
    return json{{"blocks", blocks},
                {"out_scale", f.out_scale},
                {"out_shift", f.out_shift},
                {"lipschitz_target", f.lipschitz_target}};
}

Flow flow_from_json(const json& j) {
    Flow f;
    f.lipschitz_target = j.at("lipschitz_target").get<double>();
    f.out_scale = j.at("out_scale").get<std::array<double, 2>>();
    f.out_shift = j.at("out_shift").get<std::array<double, 2>>();
    for (const auto& bj : j.at("blocks")) {
        ResidualBlock b;
        b.g = mlp_from_json(bj);
        f.blocks.push_back(std::move(b));
    }
    return f;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_model(const ApidModel& m, const std::string& path, const std::string& manifest) {
    json j{{"format", "apid-checkpoint"},
           {"version", kCheckpointVersion},
           {"eps2", m.eps2},
           {"flows", json::array({flow_to_json(m.flow0), flow_to_json(m.flow1)})},
           {"aug_nets", json::array({mlp_to_json(m.g0), mlp_to_json(m.g1)})}};
    if (!manifest.empty()) j["manifest"] = manifest;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + path);
}

ApidModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + ": invalid checkpoint json: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "apid-checkpoint") {
            throw IoError(path + ": not an apid checkpoint");
        }
        int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
        }
        ApidModel m;
        m.eps2 = j.at("eps2").get<double>();
        m.flow0 = flow_from_json(j.at("flows").at(0));
        m.flow1 = flow_from_json(j.at("flows").at(1));
        m.g0 = mlp_from_json(j.at("aug_nets").at(0));
        m.g1 = mlp_from_json(j.at("aug_nets").at(1));
        return m;
    } catch (const json::exception& e) {
        throw IoError(path + ": malformed checkpoint: " + e.what());
    }
}

}  // namespace cfb
