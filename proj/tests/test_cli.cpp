// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "plr/calibration.hpp"
#include "plr/checkpoint.hpp"
#include "plr/commands.hpp"
#include "plr/config.hpp"
#include "plr/errors.hpp"
#include "plr/io.hpp"

using namespace plr;
namespace fs = std::filesystem;

namespace {

const char* kTinyGaussian = R"({
  "seed": 7,
  "output_dir": "unused",
  "model": {"gaussian": {"cov": [[1, 0], [0, 1]]}},
  "prior": {"mu": [-3, 3], "nu": [-3, 3], "d": [0, 2]},
  "train": {"learning_rate": 0.002, "batch_size": 40, "steps": 150, "hidden_dims": [8], "eval_every": 50},
  "eval": {
    "n_null": 1500, "n_heldout": 1200, "n_calibration": 1200,
    "mu0_list": [0], "calibration_mu0": [-1, 0, 1],
    "roc_tests": [{"mu0": 0, "nu0": 0, "mu_alt": 1}],
    "scan": {"low": -2, "high": 2, "points": 41},
    "x_obs": [1, 0]
  }
})";

const char* kTinyOnOff = R"({
  "seed": 3,
  "model": {"onoff": {"s": 15, "b": 70, "tau": 1}},
  "train": {"learning_rate": 0.002, "batch_size": 40, "steps": 60, "hidden_dims": [8], "eval_every": 20},
  "eval": {"n_null": 1200, "n_heldout": 1200, "n_calibration": 1200, "calibration_mu0": [0, 1, 2], "scan": {"low": -1, "high": 3, "points": 9}}
})";

struct TempDir {
    fs::path path;
    TempDir()
    {
        static int counter = 0;
        path = fs::temp_directory_path() / ("plr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

std::string write_file(const fs::path& path, const std::string& text)
{
    std::ofstream(path) << text;
    return path.string();
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

commands::Options options(const std::string& config, const fs::path& out)
{
    commands::Options o;
    o.config_path = config;
    o.out_dir = out.string();
    return o;
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& path, std::string& header)
{
    std::ifstream in(path);
    std::string line;
    std::getline(in, line); // hash comment
    CHECK(line.rfind("# config_hash=", 0) == 0);
    std::getline(in, header);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            row.push_back(io::parse_double(cell));
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace

TEST_CASE("config: defaults and canonical form")
{
    const auto g = config::default_config("gaussian", 5);
    CHECK(g.train.learning_rate == 5e-5);
    CHECK(g.train.batch_size == 1000);
    CHECK(g.train.hidden_dims == std::vector<int>{100, 100, 100});
    CHECK(g.prior.mu == sampling::Range{-5.0, 5.0});
    CHECK(g.eval.mu0_list == std::vector<double>{-1.0, 0.0, 1.0});
    CHECK(g.eval.scan.values().size() == 101);

    const auto o = config::default_config("onoff", 5);
    CHECK(o.model.onoff == models::OnOffSpec{15.0, 70.0, 1.0});
    CHECK(o.prior.mu == sampling::Range{-1.0, 3.0});
    CHECK(o.prior.nu == sampling::Range{0.5, 1.5});

    const auto reparsed = config::parse_config(g.to_json().dump());
    CHECK(reparsed.hash() == g.hash());
    CHECK(reparsed.to_json() == g.to_json());
    CHECK_THROWS_AS(config::default_config("poisson"), ConfigError);
}

TEST_CASE("config: minimal file picks up model defaults")
{
    const auto cfg = config::parse_config(R"({"seed": 2, "model": {"onoff": {}}})");
    CHECK(cfg.model.kind == "onoff");
    CHECK(cfg.seed == 2);
    CHECK(cfg.hash() == config::default_config("onoff", 2).hash());
}

TEST_CASE("config: hash ignores the output directory but not the content")
{
    auto a = config::default_config("gaussian", 1);
    auto b = a;
    b.output_dir = "elsewhere";
    CHECK(a.hash() == b.hash());
    b.train.steps += 1;
    CHECK(a.hash() != b.hash());
    b = a;
    b.seed = 2;
    CHECK(a.hash() != b.hash());
    CHECK(config::fnv1a_hex("") == "cbf29ce484222325");
    CHECK(config::fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("config: schema errors are line anchored")
{
    const std::string unknown = "{\n  \"seed\": 1,\n  \"model\": {\"gaussian\": {}},\n  \"trian\": {}\n}";
    try {
        config::parse_config(unknown, "run.json");
        FAIL("expected ConfigParseError");
    } catch (const config::ConfigParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.rfind("run.json:4:", 0) == 0);
        CHECK(msg.find("trian") != std::string::npos);
    }

    const std::string batch = "{\"seed\": 1,\n\"model\": {\"gaussian\": {}},\n\"train\": {\"batch_size\": 7}}";
    try {
        config::parse_config(batch, "b.json");
        FAIL("expected ConfigParseError");
    } catch (const config::ConfigParseError& e) {
        CHECK(std::string(e.what()).find("batch_size must be divisible by 4") != std::string::npos);
        CHECK(std::string(e.what()).rfind("b.json:3:", 0) == 0);
    }

    CHECK_THROWS_AS(config::parse_config(R"({"model": {"gaussian": {}}})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"seed": 1})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"seed": 1, "model": {"gaussian": {}, "onoff": {}}})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"seed": 1, "model": {"gaussian": {"cov": [[1, 2], [2, 1]]}}})"),
                    ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"seed": 1, "model": {"onoff": {"s": -1}}})"), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"seed": 1, "model": {"gaussian": {}}, "prior": {"mu": [2, 1]}})"),
                    ConfigError);
    CHECK_THROWS_AS(config::parse_config("{\"seed\": 1, "), ConfigError);
    CHECK_THROWS_AS(config::parse_config(R"({"seed": "one", "model": {"gaussian": {}}})"), ConfigError);
}

TEST_CASE("checkpoint: round trip is bit exact")
{
    TempDir tmp;
    Rng rng(3);
    checkpoint::Checkpoint c;
    c.params = nn::init_params(rng, std::vector<int>{3, 5, 4, 1});
    c.params.layers[0].bias(2) = 0.1 + 0.2; // not representable in short decimal form
    c.params.layers[1].weight(0, 0) = 1e-310;   // subnormal
    c.standardizer = sampling::Standardizer::for_model(models::OnOffModel({15, 70, 1}), {{-1, 3}, {0.5, 1.5}, {0, 2}});
    c.config = config::default_config("onoff").to_json();
    c.config_hash = "0123456789abcdef";
    c.seed = 99;
    c.steps_completed = 20;
    c.final_loss = 0.6931;
    const auto path = (tmp.path / "c.json").string();
    checkpoint::save(path, c);
    const auto back = checkpoint::load(path);
    CHECK(back.params == c.params);
    CHECK(back.standardizer == c.standardizer);
    CHECK(back.config == c.config);
    CHECK(back.config_hash == c.config_hash);
    CHECK(back.seed == 99);
    CHECK(back.steps_completed == 20);
    CHECK(back.final_loss == c.final_loss);

    auto j = checkpoint::to_json(c);
    j["format_version"] = "plr-checkpoint/0";
    CHECK_THROWS_AS(checkpoint::from_json(j), InputError);
    j = checkpoint::to_json(c);
    j["network"]["layers"][1]["weight"] = nlohmann::json::array({nlohmann::json::array({1.0})});
    CHECK_THROWS_AS(checkpoint::from_json(j), Error);
}

TEST_CASE("commands: tiny Gaussian pipeline")
{
    TempDir tmp;
    const auto cfg_path = write_file(tmp.path / "tiny.json", kTinyGaussian);
    const fs::path run = tmp.path / "run";
    std::ostringstream out;
    std::ostringstream err;
    auto opts = options(cfg_path, run);

    REQUIRE(commands::cmd_train(opts, out, err) == commands::kExitOk);
    CHECK(fs::exists(run / "checkpoint.json"));
    CHECK(fs::exists(run / "trainlog.csv"));
    std::string header;
    const auto log = read_csv_rows(run / "trainlog.csv", header);
    CHECK(header == "step,loss,seconds");
    REQUIRE(log.size() == 4);
    CHECK(log.front()[0] == 0.0);
    CHECK(log.back()[0] == 150.0);

    SUBCASE("training is deterministic")
    {
        const fs::path again = tmp.path / "again";
        REQUIRE(commands::cmd_train(options(cfg_path, again), out, err) == commands::kExitOk);
        CHECK(slurp(run / "checkpoint.json") == slurp(again / "checkpoint.json"));
    }

    SUBCASE("calibrate, evaluate and scan")
    {
        for (const std::string method : {"isotonic", "percentile"}) {
            opts.method = method;
            REQUIRE(commands::cmd_calibrate(opts, out, err) == commands::kExitOk);
            for (const double mu0 : {-1.0, 0.0, 1.0}) {
                const auto file = run / ("calibration_" + method) / ("calibration_mu" + io::format_double(mu0) + ".csv");
                REQUIRE(fs::exists(file));
                std::ifstream in(file);
                const auto cal = calibration::read_calibration_csv(in); // validates knot monotonicity
                CHECK(cal.method == method);
                CHECK(cal.mu0 == mu0);
            }
        }
        opts.method = "isotonic";
        REQUIRE(commands::cmd_evaluate(opts, out, err) == commands::kExitOk);
        for (const char* f : {"roc.csv", "roc_oracle.csv", "nulldist.csv", "metrics.json"}) {
            CHECK(fs::exists(run / f));
        }
        const auto metrics = nlohmann::json::parse(slurp(run / "metrics.json"));
        for (const char* key : {"auc_learned", "auc_oracle", "spearman", "ks_null", "config_hash"}) {
            CHECK(metrics.contains(key));
        }
        std::string roc_header;
        const auto roc = read_csv_rows(run / "roc.csv", roc_header);
        CHECK(roc_header == "alpha,beta,threshold");
        CHECK(roc.front()[0] == 0.0);
        CHECK(roc.back()[1] == 1.0);
        std::string null_header;
        read_csv_rows(run / "nulldist.csv", null_header);
        CHECK(null_header == "value,ecdf,chi2cdf");

        REQUIRE(commands::cmd_scan(opts, out, err) == commands::kExitOk);
        std::string scan_header;
        const auto scan = read_csv_rows(run / "scan.csv", scan_header);
        CHECK(scan_header == "mu,learned,oracle");
        REQUIRE(scan.size() == 41);
        for (std::size_t i = 0; i < scan.size(); ++i) {
            const double mu = -2.0 + 0.1 * static_cast<double>(i);
            CHECK(scan[i][0] == doctest::Approx(mu).epsilon(1e-14));
            CHECK(std::abs(scan[i][2] - (1.0 - scan[i][0]) * (1.0 - scan[i][0])) <= 1e-9);
            CHECK(scan[i][1] >= 0.0);
        }
        CHECK(scan.front()[0] == -2.0);
        CHECK(scan.back()[0] == 2.0);

        SUBCASE("joint calibration")
        {
            auto joint_text = nlohmann::json::parse(kTinyGaussian);
            joint_text["eval"]["calibration_mode"] = "joint";
            const auto joint_cfg = write_file(tmp.path / "joint.json", joint_text.dump());
            auto jopts = options(joint_cfg, tmp.path / "joint");
            REQUIRE(commands::cmd_train(jopts, out, err) == commands::kExitOk);
            REQUIRE(commands::cmd_calibrate(jopts, out, err) == commands::kExitOk);
            CHECK(fs::exists(tmp.path / "joint" / "calibration_isotonic" / "calibration_joint.csv"));
            CHECK(commands::cmd_scan(jopts, out, err) == commands::kExitOk);
        }
    }

    SUBCASE("evaluate outputs are deterministic")
    {
        REQUIRE(commands::cmd_calibrate(opts, out, err) == commands::kExitOk);
        REQUIRE(commands::cmd_evaluate(opts, out, err) == commands::kExitOk);
        const auto first_roc = slurp(run / "roc.csv");
        const auto first_null = slurp(run / "nulldist.csv");
        const auto first_cal = slurp(run / "calibration_isotonic" / "calibration_mu0.csv");
        REQUIRE(commands::cmd_calibrate(opts, out, err) == commands::kExitOk);
        REQUIRE(commands::cmd_evaluate(opts, out, err) == commands::kExitOk);
        CHECK(slurp(run / "roc.csv") == first_roc);
        CHECK(slurp(run / "nulldist.csv") == first_null);
        CHECK(slurp(run / "calibration_isotonic" / "calibration_mu0.csv") == first_cal);
    }

    SUBCASE("checkpoint/config mismatch")
    {
        auto other = nlohmann::json::parse(kTinyGaussian);
        other["train"]["steps"] = 151;
        const auto other_cfg = write_file(tmp.path / "other.json", other.dump());
        auto mopts = options(other_cfg, run);
        mopts.checkpoint_path = (run / "checkpoint.json").string();
        std::ostringstream merr;
        CHECK(commands::cmd_calibrate(mopts, out, merr) == commands::kExitConfig);
        CHECK(merr.str().find("checkpoint/config mismatch") != std::string::npos);
        CHECK(commands::cmd_evaluate(mopts, out, merr) == commands::kExitConfig);
    }

    SUBCASE("unknown calibration method")
    {
        opts.method = "spline";
        CHECK(commands::cmd_calibrate(opts, out, err) == commands::kExitConfig);
    }

    SUBCASE("malformed x_obs")
    {
        opts.x_obs = "1;2";
        CHECK(commands::cmd_scan(opts, out, err) == commands::kExitConfig);
    }

    SUBCASE("missing calibration")
    {
        CHECK(commands::cmd_evaluate(opts, out, err) == commands::kExitConfig);
    }
}

TEST_CASE("commands: configuration errors exit with code 2")
{
    TempDir tmp;
    std::ostringstream out;
    std::ostringstream err;
    auto bad = nlohmann::json::parse(kTinyGaussian);
    bad["train"]["batch_size"] = 7;
    const auto path = write_file(tmp.path / "bad.json", bad.dump(2));
    CHECK(commands::cmd_train(options(path, tmp.path / "run"), out, err) == commands::kExitConfig);
    CHECK(err.str().find("batch_size must be divisible by 4") != std::string::npos);
    CHECK(err.str().find("bad.json:") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.path / "run" / "checkpoint.json"));

    CHECK(commands::cmd_train(options((tmp.path / "missing.json").string(), tmp.path), out, err) ==
          commands::kExitConfig);
}

TEST_CASE("commands: on-off pipeline with percentile calibration")
{
    TempDir tmp;
    const auto cfg_path = write_file(tmp.path / "onoff.json", kTinyOnOff);
    std::ostringstream out;
    std::ostringstream err;
    auto opts = options(cfg_path, tmp.path / "run");
    opts.method = "percentile";
    REQUIRE(commands::cmd_train(opts, out, err) == commands::kExitOk);
    REQUIRE(commands::cmd_calibrate(opts, out, err) == commands::kExitOk);
    REQUIRE(commands::cmd_evaluate(opts, out, err) == commands::kExitOk);
    opts.x_obs = "85,70";
    REQUIRE(commands::cmd_scan(opts, out, err) == commands::kExitOk);
    std::string header;
    const auto scan = read_csv_rows(tmp.path / "run" / "scan.csv", header);
    REQUIRE(scan.size() == 9);
    CHECK(scan[4][0] == 1.0);
    CHECK(std::abs(scan[4][2]) <= 1e-9); // mu_hat = 1

    opts.x_obs = "-3,70";
    CHECK(commands::cmd_scan(opts, out, err) == commands::kExitConfig);
    opts.x_obs = "2.5,70";
    CHECK(commands::cmd_scan(opts, out, err) == commands::kExitConfig);
}

TEST_CASE("shipped configs equal the built-in defaults")
{
    for (const std::string kind : {"gaussian", "onoff"}) {
        const auto loaded = config::load_config(std::string(PLR_SOURCE_DIR) + "/configs/" + kind + ".json");
        CHECK(loaded.hash() == config::default_config(kind, 1).hash());
    }
}
