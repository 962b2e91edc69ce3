// SPDX-License-Identifier: Apache-2.0

#include "plr/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "plr/calibration.hpp"
#include "plr/errors.hpp"

namespace plr::config {

using nlohmann::json;

namespace {

// Walks a JSON document and reports schema errors anchored at the line of the offending key.
class Reader {
public:
    Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& path, const std::string& message) const
    {
        throw ConfigParseError(source_, line_of(path), path + ": " + message);
    }

    void allow_only(const json& obj, const std::string& path, std::initializer_list<const char*> keys) const
    {
        if (!obj.is_object()) {
            fail(path, "expected an object");
        }
        const std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [key, value] : obj.items()) {
            if (!allowed.contains(key)) {
                fail(join(path, key), "unknown key");
            }
        }
    }

    double number(const json& v, const std::string& path) const
    {
        if (!v.is_number()) {
            fail(path, "expected a number");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            fail(path, "expected a finite number");
        }
        return d;
    }

    long integer(const json& v, const std::string& path) const
    {
        if (!v.is_number_integer()) {
            fail(path, "expected an integer");
        }
        return v.get<long>();
    }

    std::string string(const json& v, const std::string& path) const
    {
        if (!v.is_string()) {
            fail(path, "expected a string");
        }
        return v.get<std::string>();
    }

    std::vector<double> numbers(const json& v, const std::string& path) const
    {
        if (!v.is_array()) {
            fail(path, "expected an array of numbers");
        }
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

    sampling::Range range(const json& v, const std::string& path) const
    {
        const auto r = numbers(v, path);
        if (r.size() != 2) {
            fail(path, "expected [low, high]");
        }
        return {r[0], r[1]};
    }

    static std::string join(const std::string& path, const std::string& key)
    {
        return path.empty() ? key : path + "." + key;
    }

private:
    int line_of(const std::string& path) const
    {
        // Last path component without any [index] suffix.
        std::string key = path.substr(path.rfind('.') == std::string::npos ? 0 : path.rfind('.') + 1);
        key = key.substr(0, key.find('['));
        const auto pos = text_.find("\"" + key + "\"");
        if (pos == std::string::npos) {
            return 0;
        }
        return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
    }

    const std::string& text_;
    std::string source_;
};

int line_of_offset(const std::string& text, std::size_t byte)
{
    byte = std::min(byte, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json range_json(const sampling::Range& r) { return json::array({r.low, r.high}); }

sampling::Range central_half(const sampling::Range& r)
{
    return {r.mid() - 0.5 * r.half_width(), r.mid() + 0.5 * r.half_width()};
}

} // namespace

std::vector<double> ScanGrid::values() const
{
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double w = static_cast<double>(i);
        const double n = static_cast<double>(points - 1);
        // Weighted form keeps round grid values (0.2, 1.4, ...) exact.
        v.push_back(points == 1 ? low : (low * (n - w) + high * w) / n);
    }
    return v;
}

std::unique_ptr<models::StatModel> RunConfig::make_model() const
{
    if (model.kind == "gaussian") {
        return std::make_unique<models::GaussianModel>(model.cov);
    }
    if (model.kind == "onoff") {
        return std::make_unique<models::OnOffModel>(model.onoff);
    }
    throw ConfigError("unknown model kind '" + model.kind + "'");
}

json RunConfig::to_json() const
{
    json j;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    if (model.kind == "gaussian") {
        j["model"]["gaussian"]["cov"] = json::array(
            {json::array({model.cov(0, 0), model.cov(0, 1)}), json::array({model.cov(1, 0), model.cov(1, 1)})});
    } else {
        j["model"]["onoff"] = {{"s", model.onoff.s}, {"b", model.onoff.b}, {"tau", model.onoff.tau}};
    }
    j["prior"] = {{"mu", range_json(prior.mu)}, {"nu", range_json(prior.nu)}, {"d", range_json(prior.d)}};
    j["train"] = {{"learning_rate", train.learning_rate}, {"batch_size", train.batch_size},
                  {"steps", train.steps},                 {"hidden_dims", train.hidden_dims},
                  {"eval_every", train.eval_every}};
    json tests = json::array();
    for (const auto& t : eval.roc_tests) {
        tests.push_back({{"mu0", t.mu0}, {"nu0", t.nu0}, {"mu_alt", t.mu_alt}});
    }
    j["eval"] = {{"n_null", eval.n_null},
                 {"n_heldout", eval.n_heldout},
                 {"n_calibration", eval.n_calibration},
                 {"alphas", eval.alphas},
                 {"mu0_list", eval.mu0_list},
                 {"roc_tests", tests},
                 {"calibration_mu0", eval.calibration_mu0},
                 {"calibration_mode", eval.calibration_mode},
                 {"scan", {{"low", eval.scan.low}, {"high", eval.scan.high}, {"points", eval.scan.points}}},
                 {"rmse_t_max", eval.rmse_t_max},
                 {"nu_range", range_json(eval.nu_range)}};
    if (eval.x_obs) {
        j["eval"]["x_obs"] = json::array({eval.x_obs->x1, eval.x_obs->x2});
    }
    return j;
}

std::string fnv1a_hex(const std::string& data)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string RunConfig::hash() const
{
    json j = to_json();
    j.erase("output_dir");
    return fnv1a_hex(j.dump());
}

RunConfig default_config(const std::string& model_kind, std::uint64_t seed)
{
    RunConfig c;
    c.seed = seed;
    c.model.kind = model_kind;
    if (model_kind == "gaussian") {
        c.prior = {{-5.0, 5.0}, {-5.0, 5.0}, {0.0, 3.0}};
        c.eval.mu0_list = {-1.0, 0.0, 1.0};
        c.eval.roc_tests = {{0.0, 0.0, 1.0}, {-1.0, 1.0, -2.0}, {1.0, -2.0, 2.5}};
        c.eval.x_obs = models::Observation{1.0, 0.5};
    } else if (model_kind == "onoff") {
        c.prior = {{-1.0, 3.0}, {0.5, 1.5}, {0.0, 2.0}};
        c.eval.mu0_list = {0.0, 1.0, 2.0};
        c.eval.roc_tests = {{1.0, 1.0, 0.0}, {0.0, 1.0, 1.0}, {2.0, 1.0, 3.0}};
        c.eval.x_obs = models::Observation{85.0, 70.0};
    } else {
        throw ConfigError("unknown model kind '" + model_kind + "'");
    }
    c.output_dir = "runs/" + model_kind;
    c.eval.scan = {c.prior.mu.low, c.prior.mu.high, 101};
    c.eval.calibration_mu0 = ScanGrid{c.prior.mu.low, c.prior.mu.high, 21}.values();
    c.eval.nu_range = central_half(c.prior.nu);
    c.train.seed = seed;
    c.train.prior = c.prior;
    c.train.model = model_kind;
    return c;
}

RunConfig parse_config(const std::string& text, const std::string& source_name)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigParseError(source_name, line_of_offset(text, e.byte), std::string("invalid JSON: ") + e.what());
    }
    const Reader r(text, source_name);
    r.allow_only(root, "", {"seed", "output_dir", "model", "prior", "train", "eval"});

    if (!root.contains("seed")) {
        r.fail("seed", "required key missing");
    }
    if (!root["seed"].is_number_unsigned()) {
        r.fail("seed", "expected a nonnegative integer");
    }
    if (!root.contains("model")) {
        r.fail("model", "required key missing");
    }
    const json& model = root["model"];
    r.allow_only(model, "model", {"gaussian", "onoff"});
    if (model.size() != 1) {
        r.fail("model", "exactly one of 'gaussian' or 'onoff' is required");
    }
    const std::string kind = model.begin().key();
    RunConfig c = default_config(kind, root["seed"].get<std::uint64_t>());

    if (kind == "gaussian") {
        const json& g = model["gaussian"];
        r.allow_only(g, "model.gaussian", {"cov"});
        if (g.contains("cov")) {
            const json& cov = g["cov"];
            if (!cov.is_array() || cov.size() != 2) {
                r.fail("model.gaussian.cov", "expected a 2x2 array");
            }
            for (int i = 0; i < 2; ++i) {
                const auto row = r.numbers(cov[static_cast<std::size_t>(i)], "model.gaussian.cov");
                if (row.size() != 2) {
                    r.fail("model.gaussian.cov", "expected a 2x2 array");
                }
                c.model.cov(i, 0) = row[0];
                c.model.cov(i, 1) = row[1];
            }
        }
    } else {
        const json& o = model["onoff"];
        r.allow_only(o, "model.onoff", {"s", "b", "tau"});
        if (o.contains("s")) {
            c.model.onoff.s = r.number(o["s"], "model.onoff.s");
        }
        if (o.contains("b")) {
            c.model.onoff.b = r.number(o["b"], "model.onoff.b");
        }
        if (o.contains("tau")) {
            c.model.onoff.tau = r.number(o["tau"], "model.onoff.tau");
        }
    }
    try {
        (void)c.make_model();
    } catch (const Error& e) {
        r.fail("model." + kind, e.what());
    }

    if (root.contains("output_dir")) {
        c.output_dir = r.string(root["output_dir"], "output_dir");
    }

    if (root.contains("prior")) {
        const json& p = root["prior"];
        r.allow_only(p, "prior", {"mu", "nu", "d"});
        if (p.contains("mu")) {
            c.prior.mu = r.range(p["mu"], "prior.mu");
        }
        if (p.contains("nu")) {
            c.prior.nu = r.range(p["nu"], "prior.nu");
        }
        if (p.contains("d")) {
            c.prior.d = r.range(p["d"], "prior.d");
        }
        // Scan and calibration grids follow the prior unless given explicitly.
        c.eval.scan.low = c.prior.mu.low;
        c.eval.scan.high = c.prior.mu.high;
        c.eval.calibration_mu0 = ScanGrid{c.prior.mu.low, c.prior.mu.high, 21}.values();
        c.eval.nu_range = central_half(c.prior.nu);
    }
    try {
        c.prior.validate();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        r.fail(msg.substr(0, msg.find(':')), msg.substr(msg.find(':') + 2));
    }

    if (root.contains("train")) {
        const json& t = root["train"];
        r.allow_only(t, "train", {"learning_rate", "batch_size", "steps", "hidden_dims", "eval_every"});
        if (t.contains("learning_rate")) {
            c.train.learning_rate = r.number(t["learning_rate"], "train.learning_rate");
            if (!(c.train.learning_rate > 0.0)) {
                r.fail("train.learning_rate", "learning_rate must be > 0");
            }
        }
        if (t.contains("batch_size")) {
            c.train.batch_size = static_cast<int>(r.integer(t["batch_size"], "train.batch_size"));
            if (c.train.batch_size < 4 || c.train.batch_size % 4 != 0) {
                r.fail("train.batch_size", "batch_size must be divisible by 4 (and at least 4)");
            }
        }
        if (t.contains("steps")) {
            c.train.steps = r.integer(t["steps"], "train.steps");
            if (c.train.steps < 1) {
                r.fail("train.steps", "steps must be >= 1");
            }
        }
        if (t.contains("eval_every")) {
            c.train.eval_every = r.integer(t["eval_every"], "train.eval_every");
            if (c.train.eval_every < 1) {
                r.fail("train.eval_every", "eval_every must be >= 1");
            }
        }
        if (t.contains("hidden_dims")) {
            const json& h = t["hidden_dims"];
            if (!h.is_array() || h.empty()) {
                r.fail("train.hidden_dims", "hidden_dims must be a nonempty array of positive integers");
            }
            c.train.hidden_dims.clear();
            for (const auto& v : h) {
                const long w = r.integer(v, "train.hidden_dims");
                if (w <= 0) {
                    r.fail("train.hidden_dims", "hidden_dims must be a nonempty array of positive integers");
                }
                c.train.hidden_dims.push_back(static_cast<int>(w));
            }
        }
    }

    if (root.contains("eval")) {
        const json& e = root["eval"];
        r.allow_only(e, "eval",
                     {"n_null", "n_heldout", "n_calibration", "alphas", "mu0_list", "roc_tests", "calibration_mu0",
                      "calibration_mode", "scan", "x_obs", "rmse_t_max", "nu_range"});
        auto positive = [&](const char* key, long& out, long minimum) {
            if (e.contains(key)) {
                out = r.integer(e[key], std::string("eval.") + key);
                if (out < minimum) {
                    r.fail(std::string("eval.") + key, "must be >= " + std::to_string(minimum));
                }
            }
        };
        positive("n_null", c.eval.n_null, 2);
        positive("n_heldout", c.eval.n_heldout, 2);
        positive("n_calibration", c.eval.n_calibration, static_cast<long>(calibration::kMinPercentileScores));
        if (e.contains("alphas")) {
            c.eval.alphas = r.numbers(e["alphas"], "eval.alphas");
            for (double a : c.eval.alphas) {
                if (!(a > 0.0 && a < 1.0)) {
                    r.fail("eval.alphas", "alphas must lie in (0, 1)");
                }
            }
        }
        if (e.contains("mu0_list")) {
            c.eval.mu0_list = r.numbers(e["mu0_list"], "eval.mu0_list");
        }
        if (e.contains("calibration_mu0")) {
            c.eval.calibration_mu0 = r.numbers(e["calibration_mu0"], "eval.calibration_mu0");
            if (c.eval.calibration_mu0.empty()) {
                r.fail("eval.calibration_mu0", "must be nonempty");
            }
        }
        if (e.contains("calibration_mode")) {
            c.eval.calibration_mode = r.string(e["calibration_mode"], "eval.calibration_mode");
            if (c.eval.calibration_mode != "per_mu0" && c.eval.calibration_mode != "joint") {
                r.fail("eval.calibration_mode", "must be 'per_mu0' or 'joint'");
            }
        }
        if (e.contains("roc_tests")) {
            const json& tests = e["roc_tests"];
            if (!tests.is_array()) {
                r.fail("eval.roc_tests", "expected an array");
            }
            c.eval.roc_tests.clear();
            for (const auto& t : tests) {
                r.allow_only(t, "eval.roc_tests", {"mu0", "nu0", "mu_alt"});
                if (!t.contains("mu0") || !t.contains("nu0") || !t.contains("mu_alt")) {
                    r.fail("eval.roc_tests", "each test needs mu0, nu0 and mu_alt");
                }
                c.eval.roc_tests.push_back({r.number(t["mu0"], "eval.roc_tests.mu0"),
                                            r.number(t["nu0"], "eval.roc_tests.nu0"),
                                            r.number(t["mu_alt"], "eval.roc_tests.mu_alt")});
            }
        }
        if (e.contains("scan")) {
            const json& s = e["scan"];
            r.allow_only(s, "eval.scan", {"low", "high", "points"});
            if (s.contains("low")) {
                c.eval.scan.low = r.number(s["low"], "eval.scan.low");
            }
            if (s.contains("high")) {
                c.eval.scan.high = r.number(s["high"], "eval.scan.high");
            }
            if (s.contains("points")) {
                c.eval.scan.points = static_cast<int>(r.integer(s["points"], "eval.scan.points"));
            }
            if (c.eval.scan.points < 1 || !(c.eval.scan.low <= c.eval.scan.high)) {
                r.fail("eval.scan", "need points >= 1 and low <= high");
            }
        }
        if (e.contains("x_obs")) {
            const auto v = r.numbers(e["x_obs"], "eval.x_obs");
            if (v.size() != 2) {
                r.fail("eval.x_obs", "expected [x1, x2]");
            }
            c.eval.x_obs = models::Observation{v[0], v[1]};
        }
        if (e.contains("nu_range")) {
            c.eval.nu_range = r.range(e["nu_range"], "eval.nu_range");
            if (!(c.eval.nu_range.low < c.eval.nu_range.high)) {
                r.fail("eval.nu_range", "need low < high");
            }
        }
        if (e.contains("rmse_t_max")) {
            c.eval.rmse_t_max = r.number(e["rmse_t_max"], "eval.rmse_t_max");
        }
    }

    c.train.seed = c.seed;
    c.train.prior = c.prior;
    c.train.model = c.model.kind;
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigParseError(path, 0, "cannot open config file");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path);
}

} // namespace plr::config
