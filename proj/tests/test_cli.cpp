#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "cfb/apid.hpp"
#include "cfb/data.hpp"
#include "schema_check.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// CF_BOUNDS_CLI_PATH and CF_BOUNDS_SCHEMA_DIR are injected by the build
const std::string kCli = CF_BOUNDS_CLI_PATH;
const std::string kSchemaDir = CF_BOUNDS_SCHEMA_DIR;

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "cfb_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path_in(const std::string& name) { return (work_dir() / name).string(); }

int run_cli(const std::string& args, const std::string& env = "") {
    std::string cmd = env.empty() ? "" : env + " ";
    cmd += kCli + " " + args + " >" + path_in("stdout.txt") + " 2>" + path_in("stderr.txt");
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json schema(const std::string& name) {
    return cfb::load_json_file(kSchemaDir + "/" + name);
}

void expect_valid(const json& sch, const json& value, const std::string& what) {
    auto errors = cfb::schema_violations(sch, value);
    for (const auto& e : errors) {
        FAIL_CHECK(what << ": " << e);
    }
    CHECK(errors.empty());
}

// shared micro training flags so the apid invocations stay quick
const std::string kMicro =
    " --preset desk --n-burnin 12 --n-query 3 --n-curv-query 3 --batch 6 --eval-batch 16";

}  // namespace

TEST_CASE("gen-data writes a reproducible csv with manifest") {
    std::string out = path_in("d1.csv");
    int rc = run_cli("gen-data --dataset 1 --n-per-arm 50 --seed 7 --out " + out);
    CHECK(rc == 0);

    cfb::Dataset d = cfb::read_csv(out);
    CHECK(d.count(cfb::Arm::a0) == 50);
    CHECK(d.count(cfb::Arm::a1) == 50);

    std::string man_path = out + ".manifest.json";
    json man = cfb::load_json_file(man_path);
    expect_valid(schema("manifest.schema.json"), man, "gen-data manifest");
    CHECK(man.at("command") == "gen-data");
    CHECK(man.at("seed") == 7);
    CHECK(man.at("outputs")[0] == out);

    // the csv references its manifest
    CHECK(slurp(out).rfind("# manifest: " + man_path, 0) == 0);

    // identical invocations produce identical bytes, csv and manifest alike
    std::string csv1 = slurp(out), man1 = slurp(man_path);
    CHECK(run_cli("gen-data --dataset 1 --n-per-arm 50 --seed 7 --out " + out) == 0);
    CHECK(slurp(out) == csv1);
    CHECK(slurp(man_path) == man1);
}

TEST_CASE("oracle emits the golden query value and density curves") {
    std::string out = path_in("oracle.json");
    int rc = run_cli(
        "oracle --scm m1 --aprime 0 --yprime 0 --a 1 --grid-res 65 --curve-points 21 --out " +
        out);
    CHECK(rc == 0);

    json result = cfb::load_json_file(out);
    expect_valid(schema("oracle.schema.json"), result, "oracle result");
    CHECK(std::fabs(result.at("q").get<double>() - 1.0) < 0.01);
    REQUIRE(result.at("density_curve").size() == 2);
    for (const auto& curve : result.at("density_curve")) {
        CHECK(curve.at("y").size() == 21);
        CHECK(curve.at("y").size() == curve.at("p").size());
    }
    json man = cfb::load_json_file(out + ".manifest.json");
    expect_valid(schema("manifest.schema.json"), man, "oracle manifest");
    CHECK(man.at("command") == "oracle");
    CHECK(man.at("seed").is_null());  // the oracle is deterministic, no rng involved
}

TEST_CASE("bgm writes both sign conventions over the grid") {
    std::string data = path_in("d2.csv");
    REQUIRE(run_cli("gen-data --dataset 2 --n-per-arm 200 --seed 3 --out " + data) == 0);

    std::string out = path_in("bgm.csv");
    int rc = run_cli("bgm --data " + data + " --direction 0to1 --grid -1:1:11 --out " + out);
    CHECK(rc == 0);

    std::istringstream in(slurp(out));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line.rfind("# manifest: ", 0) == 0);
    REQUIRE(std::getline(in, line));
    CHECK(line == "y_prime,q_increasing,q_decreasing");
    int rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 11);
    expect_valid(schema("manifest.schema.json"),
                 cfb::load_json_file(out + ".manifest.json"), "bgm manifest");
}

TEST_CASE("apid bounds run validates end to end and is worker-count invariant") {
    std::string data = path_in("d1b.csv");
    REQUIRE(run_cli("gen-data --dataset 1 --n-per-arm 150 --seed 5 --out " + data) == 0);

    std::string out1 = path_in("b1.json");
    std::string common = "apid --data " + data +
                         " --aprime 0 --a 1 --yprime 0.0,0.5 --lambda-q 2.0 --seed 4" + kMicro;
    REQUIRE(run_cli(common + " --jobs 1 --out " + out1) == 0);

    json b1 = cfb::load_json_file(out1);
    expect_valid(schema("bounds.schema.json"), b1, "bounds result");
    REQUIRE(b1.at("runs").size() == 2);

    json log_schema = schema("log-record.schema.json");
    json ckpt_schema = schema("checkpoint.schema.json");
    for (const auto& run : b1.at("runs")) {
        // a near-untrained micro run can leave the two bound estimates crossed
        // by Monte Carlo noise, so only gross ordering violations are errors
        CHECK(run.at("lower").get<double>() <= run.at("upper").get<double>() + 0.1);
        double s_lo = run.at("support")[0].get<double>();
        double s_hi = run.at("support")[1].get<double>();
        CHECK(s_lo < s_hi);
        CHECK(run.at("lower").get<double>() >= s_lo - 0.5);
        CHECK(run.at("upper").get<double>() <= s_hi + 0.5);

        // every logged record matches the schema; the header names the manifest
        std::istringstream log(slurp(run.at("log").get<std::string>()));
        std::string line;
        REQUIRE(std::getline(log, line));
        CHECK(json::parse(line).contains("manifest"));
        int records = 0;
        while (std::getline(log, line)) {
            if (line.empty()) continue;
            expect_valid(log_schema, json::parse(line), "log record");
            ++records;
        }
        CHECK(records == 2 * (12 + 3 + 3));

        for (const char* side : {"upper", "lower"}) {
            std::string ckpt = run.at("checkpoints").at(side).get<std::string>();
            expect_valid(ckpt_schema, cfb::load_json_file(ckpt), "checkpoint");
            cfb::ApidModel m = cfb::load_model(ckpt);  // loadable, not just well formed
            CHECK(m.eps2 > 0.0);
        }
    }

    // a second worker produces byte-identical bound values
    std::string out2 = path_in("b2.json");
    REQUIRE(run_cli(common + " --jobs 2 --out " + out2) == 0);
    json b2 = cfb::load_json_file(out2);
    REQUIRE(b2.at("runs").size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const json& r1 = b1.at("runs")[i];
        const json& r2 = b2.at("runs")[i];
        CHECK(r1.at("y_prime") == r2.at("y_prime"));
        CHECK(r1.at("seed") == r2.at("seed"));
        CHECK(r1.at("lower") == r2.at("lower"));
        CHECK(r1.at("upper") == r2.at("upper"));
        CHECK(r1.at("support") == r2.at("support"));
    }

    // the environment cap bounds the worker pool without changing results
    std::string out3 = path_in("b3.json");
    REQUIRE(run_cli(common + " --jobs 2 --out " + out3, "CF_BOUNDS_THREADS=1") == 0);
    json b3 = cfb::load_json_file(out3);
    CHECK(b3.at("runs")[0].at("upper") == b1.at("runs")[0].at("upper"));
    CHECK(b3.at("runs")[1].at("lower") == b1.at("runs")[1].at("lower"));

    expect_valid(schema("manifest.schema.json"),
                 cfb::load_json_file(out1 + ".manifest.json"), "apid manifest");
}

TEST_CASE("plot renders curves and heatmaps") {
    // reuse the artifacts from the previous cases, which run in file order
    std::string bgm_csv = path_in("bgm.csv");
    std::string bounds = path_in("b1.json");
    REQUIRE(fs::exists(bgm_csv));
    REQUIRE(fs::exists(bounds));

    std::string curves = path_in("curves.svg");
    CHECK(run_cli("plot --inputs " + bgm_csv + " " + bounds + " --out " + curves) == 0);
    std::string svg = slurp(curves);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("monotone increasing") != std::string::npos);

    json b1 = cfb::load_json_file(bounds);
    std::string ckpt = b1.at("runs")[0].at("checkpoints").at("upper").get<std::string>();
    std::string heat = path_in("heat.svg");
    CHECK(run_cli("plot --inputs " + ckpt + " --arm 1 --grid-res 32 --out " + heat) == 0);
    std::string heat_svg = slurp(heat);
    CHECK(heat_svg.find("<svg") != std::string::npos);
    CHECK(heat_svg.find("<rect") != std::string::npos);

    // manifests exist for both plots
    expect_valid(schema("manifest.schema.json"),
                 cfb::load_json_file(curves + ".manifest.json"), "plot manifest");
}

TEST_CASE("usage, domain, io and numerical failures map to distinct exit codes") {
    std::string data = path_in("d1b.csv");
    REQUIRE(fs::exists(data));

    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("gen-data --dataset 3 --out " + path_in("x.csv")) == 2);
    CHECK(run_cli("bgm --data " + data + " --grid 1:0:5 --out " + path_in("x.csv")) == 2);
    CHECK(run_cli("plot --out " + path_in("x.svg")) == 2);
    CHECK(run_cli("oracle --scm m1 --aprime 0 --yprime 5.0 --a 1 --grid-res 33") == 2);
    // evidence outside the factual sample range
    CHECK(run_cli("apid --data " + data + " --aprime 0 --a 1 --yprime 50 --out " +
                  path_in("x.json") + kMicro) == 2);
    // a bad thread cap is a usage error
    CHECK(run_cli("apid --data " + data + " --aprime 0 --a 1 --yprime 0 --out " +
                      path_in("x.json") + kMicro,
                  "CF_BOUNDS_THREADS=banana") == 2);

    CHECK(run_cli("gen-data --dataset 1 --out /nonexistent/dir/x.csv") == 4);
    CHECK(run_cli("bgm --data " + path_in("missing.csv") + " --out " + path_in("x.csv")) == 4);

    // impossible inversion tolerance trips the failure monitor
    CHECK(run_cli("apid --data " + data +
                  " --aprime 0 --a 1 --yprime 0 --preset desk --n-burnin 60 --n-query 0" +
                  " --n-curv-query 0 --batch 6 --eval-batch 16 --tol 1e-30 --max-iter 1" +
                  " --out " + path_in("abort.json")) == 3);
}
