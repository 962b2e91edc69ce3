// SPDX-License-Identifier: Apache-2.0

#include "plr/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "plr/calibration.hpp"
#include "plr/checkpoint.hpp"
#include "plr/config.hpp"
#include "plr/errors.hpp"
#include "plr/evaluation.hpp"
#include "plr/io.hpp"
#include "plr/training.hpp"

namespace plr::commands {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Input the user must fix (bad flags, mismatched artifacts); maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

config::RunConfig effective_config(const Options& opts)
{
    config::RunConfig cfg = config::load_config(opts.config_path);
    if (opts.seed) {
        cfg.seed = *opts.seed;
        cfg.train.seed = *opts.seed;
    }
    if (opts.out_dir) {
        cfg.output_dir = *opts.out_dir;
    }
    return cfg;
}

std::ofstream open_output(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write '" + path.string() + "'");
    }
    return out;
}

std::string checkpoint_path(const Options& opts, const config::RunConfig& cfg)
{
    return opts.checkpoint_path.value_or((fs::path(cfg.output_dir) / "checkpoint.json").string());
}

std::string calibration_path(const Options& opts, const config::RunConfig& cfg)
{
    return opts.calibration_path.value_or((fs::path(cfg.output_dir) / ("calibration_" + opts.method)).string());
}

checkpoint::Checkpoint load_matching_checkpoint(const Options& opts, const config::RunConfig& cfg)
{
    checkpoint::Checkpoint ckpt = checkpoint::load(checkpoint_path(opts, cfg));
    if (ckpt.config_hash != cfg.hash()) {
        throw UsageError("checkpoint/config mismatch (checkpoint " + ckpt.config_hash + ", config " + cfg.hash() + ")");
    }
    return ckpt;
}

struct LoadedCalibration {
    evaluation::CalibrationSet set;
    std::string method;
};

LoadedCalibration load_calibration(const std::string& path, const config::RunConfig& cfg)
{
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("calibration_", 0) == 0 && entry.path().extension() == ".csv") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else if (fs::exists(path)) {
        files.emplace_back(path);
    }
    if (files.empty()) {
        throw UsageError("no calibration files found at '" + path + "' (run `plr calibrate` first)");
    }
    LoadedCalibration loaded;
    for (const auto& f : files) {
        std::ifstream in(f);
        const calibration::CalibrationFile file = calibration::read_calibration_csv(in);
        if (file.config_hash != cfg.hash()) {
            throw UsageError("calibration/config mismatch in '" + f.string() + "'");
        }
        if (!loaded.method.empty() && loaded.method != file.method) {
            throw UsageError("calibration files mix methods at '" + path + "'");
        }
        loaded.method = file.method;
        if (file.joint) {
            loaded.set.set_joint(file.map);
        } else {
            loaded.set.add(file.mu0, file.map);
        }
    }
    return loaded;
}

models::Observation parse_x_obs(const std::string& text, const models::StatModel& model)
{
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        throw UsageError("--x-obs must be two numbers 'a,b'");
    }
    models::Observation x;
    try {
        x = {io::parse_double(std::string_view(text).substr(0, comma)),
             io::parse_double(std::string_view(text).substr(comma + 1))};
    } catch (const InputError& e) {
        throw UsageError(std::string("--x-obs: ") + e.what());
    }
    if (!model.valid_observation(x)) {
        throw UsageError("--x-obs '" + text + "' is not a valid observation for the " + model.name() +
                         " model (on-off counts must be nonnegative integers)");
    }
    return x;
}

std::string hash_comment(const config::RunConfig& cfg) { return "# config_hash=" + cfg.hash() + "\n"; }

// Keeps at most `limit` rows (evenly spaced, always including both ends).
template <typename T>
std::vector<T> thin(const std::vector<T>& rows, std::size_t limit)
{
    if (rows.size() <= limit || limit < 2) {
        return rows;
    }
    std::vector<T> out;
    out.reserve(limit);
    for (std::size_t k = 0; k < limit; ++k) {
        out.push_back(rows[k * (rows.size() - 1) / (limit - 1)]);
    }
    return out;
}

void write_roc_csv(const fs::path& path, const evaluation::RocCurve& roc, const config::RunConfig& cfg)
{
    auto out = open_output(path);
    out << hash_comment(cfg) << "alpha,beta,threshold\n";
    for (const auto& p : thin(roc.points, 2001)) {
        out << io::format_double(p.alpha) << "," << io::format_double(p.beta) << ","
            << io::format_double(p.threshold) << "\n";
    }
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& body)
{
    try {
        return body();
    } catch (const training::TrainingAborted& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

} // namespace

int cmd_train(const Options& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const config::RunConfig cfg = effective_config(opts);
        const auto model = cfg.make_model();
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);

        checkpoint::Checkpoint ckpt;
        ckpt.config = cfg.to_json();
        ckpt.config.erase("output_dir"); // keeps the checkpoint independent of where it is written
        ckpt.config_hash = cfg.hash();
        ckpt.seed = cfg.seed;

        training::TrainResult result;
        try {
            result = training::train(*model, cfg.train, [&](const training::EvalRecord& r) {
                out << "step " << r.step << "  loss " << io::format_double(r.loss) << "  " << r.seconds << "s\n";
            });
        } catch (const training::TrainingAborted& e) {
            ckpt.params = e.last_good();
            ckpt.standardizer = sampling::Standardizer::for_model(*model, cfg.prior);
            ckpt.steps_completed = e.step();
            const fs::path path = dir / "checkpoint_last_good.json";
            checkpoint::save(path.string(), ckpt);
            err << "wrote last good parameters to " << path.string() << "\n";
            throw;
        }

        ckpt.params = result.params;
        ckpt.standardizer = result.standardizer;
        ckpt.steps_completed = cfg.train.steps;
        ckpt.final_loss = result.log.final_loss;
        const std::string ckpt_path = checkpoint_path(opts, cfg);
        checkpoint::save(ckpt_path, ckpt);

        auto log = open_output(dir / "trainlog.csv");
        log << hash_comment(cfg) << "step,loss,seconds\n";
        for (const auto& r : result.log.records) {
            log << r.step << "," << io::format_double(r.loss) << "," << io::format_double(r.seconds) << "\n";
        }
        out << "wrote " << ckpt_path << " and " << (dir / "trainlog.csv").string() << "\n";
        return kExitOk;
    });
}

int cmd_calibrate(const Options& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        if (opts.method != "isotonic" && opts.method != "percentile") {
            throw UsageError("unknown calibration method '" + opts.method + "' (expected isotonic or percentile)");
        }
        const config::RunConfig cfg = effective_config(opts);
        const auto model = cfg.make_model();
        const checkpoint::Checkpoint ckpt = load_matching_checkpoint(opts, cfg);
        const fs::path dir = calibration_path(opts, cfg);
        fs::create_directories(dir);
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("calibration_", 0) == 0 && entry.path().extension() == ".csv") {
                fs::remove(entry.path());
            }
        }

        const long n = cfg.eval.n_calibration;
        auto fit = [&](const std::vector<models::Observation>& xs, const std::vector<double>& mu0s) {
            std::vector<double> scores(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) {
                scores[i] = training::score(ckpt.params, xs[i], mu0s[i], ckpt.standardizer);
            }
            if (opts.method == "percentile") {
                return calibration::percentile_match_fit(scores);
            }
            std::vector<std::pair<double, double>> pairs(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) {
                pairs[i] = {scores[i], model->profile_t(xs[i], mu0s[i])};
            }
            return calibration::isotonic_fit(pairs);
        };
        auto draw = [&](double mu0, Rng& rng) {
            return opts.method == "percentile" ? sampling::sample_null_at(*model, cfg.eval.nu_range, mu0, n, rng)
                                               : sampling::sample_mixture_at(*model, cfg.prior, cfg.eval.nu_range, mu0, n, rng);
        };

        if (cfg.eval.calibration_mode == "joint") {
            Rng rng = Rng::derive(cfg.seed, "calibrate/" + opts.method + "/joint");
            std::vector<models::Observation> xs;
            std::vector<double> mu0s;
            for (long i = 0; i < n; ++i) {
                const double mu0 = rng.uniform(cfg.prior.mu.low, cfg.prior.mu.high);
                xs.push_back(draw(mu0, rng).front());
                mu0s.push_back(mu0);
            }
            calibration::CalibrationFile file{opts.method, static_cast<std::size_t>(n), 0.0, true, cfg.hash(),
                                              fit(xs, mu0s)};
            auto f = open_output(dir / "calibration_joint.csv");
            calibration::write_calibration_csv(f, file);
            out << "wrote " << (dir / "calibration_joint.csv").string() << "\n";
            return kExitOk;
        }

        for (double mu0 : cfg.eval.calibration_mu0) {
            Rng rng = Rng::derive(cfg.seed, "calibrate/" + opts.method + "/" + io::format_double(mu0));
            const auto xs = draw(mu0, rng);
            const std::vector<double> mu0s(xs.size(), mu0);
            calibration::CalibrationFile file{opts.method, xs.size(), mu0, false, cfg.hash(), fit(xs, mu0s)};
            const fs::path path = dir / ("calibration_mu" + io::format_double(mu0) + ".csv");
            auto f = open_output(path);
            calibration::write_calibration_csv(f, file);
        }
        out << "wrote " << cfg.eval.calibration_mu0.size() << " " << opts.method << " calibration maps to "
            << dir.string() << "\n";
        return kExitOk;
    });
}

int cmd_evaluate(const Options& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const config::RunConfig cfg = effective_config(opts);
        const auto model = cfg.make_model();
        const checkpoint::Checkpoint ckpt = load_matching_checkpoint(opts, cfg);
        const LoadedCalibration calib = load_calibration(calibration_path(opts, cfg), cfg);
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);

        auto learned_scores = [&](const std::vector<models::Observation>& xs, double mu0) {
            return training::score_batch(ckpt.params, xs, mu0, ckpt.standardizer);
        };
        auto oracle_scores = [&](const std::vector<models::Observation>& xs, double mu0) {
            std::vector<double> t(xs.size());
            std::transform(xs.begin(), xs.end(), t.begin(), [&](const auto& x) { return model->profile_t(x, mu0); });
            return t;
        };
        auto sample_at = [&](const models::ThetaPoint& theta, long n, Rng& rng) {
            std::vector<models::Observation> xs;
            xs.reserve(static_cast<std::size_t>(n));
            for (long i = 0; i < n; ++i) {
                xs.push_back(model->sample(theta, rng));
            }
            return xs;
        };

        json metrics;
        metrics["config_hash"] = cfg.hash();
        metrics["model"] = cfg.model.kind;
        metrics["calibration_method"] = calib.method;
        json auc_learned = json::array();
        json auc_oracle = json::array();
        json roc_tests = json::array();
        double max_auc_diff = 0.0;
        for (std::size_t k = 0; k < cfg.eval.roc_tests.size(); ++k) {
            const auto& test = cfg.eval.roc_tests[k];
            Rng rng = Rng::derive(cfg.seed, "evaluate/roc/" + std::to_string(k));
            const auto null_x = sample_at({test.mu0, test.nu0}, cfg.eval.n_null, rng);
            const auto alt_x = sample_at({test.mu_alt, test.nu0}, cfg.eval.n_null, rng);
            const auto s0 = learned_scores(null_x, test.mu0);
            const auto s1 = learned_scores(alt_x, test.mu0);
            const auto t0 = oracle_scores(null_x, test.mu0);
            const auto t1 = oracle_scores(alt_x, test.mu0);
            const auto roc_l = evaluation::roc_curve(s0, s1);
            const auto roc_o = evaluation::roc_curve(t0, t1);
            if (k == 0) {
                write_roc_csv(dir / "roc.csv", roc_l, cfg);
                write_roc_csv(dir / "roc_oracle.csv", roc_o, cfg);
            }
            json power = json::array();
            for (double a : cfg.eval.alphas) {
                const auto pl = evaluation::power_at_size(s0, s1, a);
                const auto po = evaluation::power_at_size(t0, t1, a);
                power.push_back({{"alpha", a}, {"learned", pl.beta}, {"oracle", po.beta}, {"degenerate", pl.degenerate}});
            }
            auc_learned.push_back(roc_l.auc);
            auc_oracle.push_back(roc_o.auc);
            max_auc_diff = std::max(max_auc_diff, std::abs(roc_l.auc - roc_o.auc));
            roc_tests.push_back({{"mu0", test.mu0},
                                 {"nu0", test.nu0},
                                 {"mu_alt", test.mu_alt},
                                 {"auc_learned", roc_l.auc},
                                 {"auc_oracle", roc_o.auc},
                                 {"power", power}});
        }
        metrics["auc_learned"] = auc_learned;
        metrics["auc_oracle"] = auc_oracle;
        metrics["auc_abs_diff_max"] = max_auc_diff;
        metrics["roc_tests"] = roc_tests;

        json per_mu0 = json::array();
        double spearman_min = 1.0;
        double ks_max = 0.0;
        double rmse_max = 0.0;
        const auto chi2 = [](double q) { return calibration::chi2_cdf(q); };
        for (std::size_t k = 0; k < cfg.eval.mu0_list.size(); ++k) {
            const double mu0 = cfg.eval.mu0_list[k];
            Rng rng = Rng::derive(cfg.seed, "evaluate/mu0/" + io::format_double(mu0));
            const auto held = sampling::sample_mixture_at(*model, cfg.prior, cfg.eval.nu_range, mu0, cfg.eval.n_heldout, rng);
            const auto s = learned_scores(held, mu0);
            const auto t = oracle_scores(held, mu0);
            const double rho = evaluation::spearman(s, t);

            double sq = 0.0;
            long count = 0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (t[i] <= cfg.eval.rmse_t_max) {
                    const double diff = calib.set.apply(mu0, s[i]) - t[i];
                    sq += diff * diff;
                    ++count;
                }
            }
            const double rmse = count > 0 ? std::sqrt(sq / static_cast<double>(count)) : 0.0;

            const auto null_x = sampling::sample_null_at(*model, cfg.eval.nu_range, mu0, cfg.eval.n_null, rng);
            const auto null_s = learned_scores(null_x, mu0);
            std::vector<double> null_cal(null_s.size());
            for (std::size_t i = 0; i < null_s.size(); ++i) {
                null_cal[i] = calib.set.apply(mu0, null_s[i]);
            }
            const double ks = evaluation::ks_statistic(null_cal, chi2);
            const double ks_oracle = evaluation::ks_statistic(oracle_scores(null_x, mu0), chi2);

            if (k == 0) {
                std::vector<double> sorted = null_cal;
                std::sort(sorted.begin(), sorted.end());
                std::vector<std::size_t> idx(sorted.size());
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    idx[i] = i;
                }
                auto f = open_output(dir / "nulldist.csv");
                f << hash_comment(cfg) << "value,ecdf,chi2cdf\n";
                for (std::size_t i : thin(idx, 2001)) {
                    const double ecdf = static_cast<double>(i + 1) / static_cast<double>(sorted.size());
                    f << io::format_double(sorted[i]) << "," << io::format_double(ecdf) << ","
                      << io::format_double(calibration::chi2_cdf(sorted[i])) << "\n";
                }
            }
            spearman_min = std::min(spearman_min, rho);
            ks_max = std::max(ks_max, ks);
            rmse_max = std::max(rmse_max, rmse);
            per_mu0.push_back({{"mu0", mu0},
                               {"spearman", rho},
                               {"rmse_calibrated", rmse},
                               {"rmse_count", count},
                               {"ks_null", ks},
                               {"ks_null_oracle", ks_oracle}});
        }
        metrics["spearman"] = spearman_min;
        metrics["ks_null"] = ks_max;
        metrics["rmse_calibrated"] = rmse_max;
        metrics["per_mu0"] = per_mu0;

        auto f = open_output(dir / "metrics.json");
        f << metrics.dump(2) << "\n";
        out << "auc |learned - oracle| max " << max_auc_diff << ", spearman min " << spearman_min << ", ks_null max "
            << ks_max << ", rmse max " << rmse_max << "\n";
        out << "wrote " << (dir / "metrics.json").string() << "\n";
        return kExitOk;
    });
}

int cmd_scan(const Options& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const config::RunConfig cfg = effective_config(opts);
        const auto model = cfg.make_model();
        models::Observation x_obs;
        if (opts.x_obs) {
            x_obs = parse_x_obs(*opts.x_obs, *model);
        } else if (cfg.eval.x_obs) {
            x_obs = *cfg.eval.x_obs;
            if (!model->valid_observation(x_obs)) {
                throw UsageError("eval.x_obs is not a valid observation for the " + model->name() + " model");
            }
        } else {
            throw UsageError("scan needs --x-obs a,b (or eval.x_obs in the config)");
        }
        const checkpoint::Checkpoint ckpt = load_matching_checkpoint(opts, cfg);
        const LoadedCalibration calib = load_calibration(calibration_path(opts, cfg), cfg);
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);

        const auto grid = cfg.eval.scan.values();
        const auto curve =
            evaluation::profile_scan(ckpt.params, ckpt.standardizer, calib.set, model.get(), x_obs, grid, cfg.prior.mu);
        for (const auto& w : curve.warnings) {
            err << "warning: " << w << "\n";
        }
        auto f = open_output(dir / "scan.csv");
        f << hash_comment(cfg) << "mu,learned,oracle\n";
        for (std::size_t i = 0; i < curve.mu.size(); ++i) {
            f << io::format_double(curve.mu[i]) << "," << io::format_double(curve.learned[i]) << ","
              << io::format_double(curve.oracle[i]) << "\n";
        }
        const auto argmin = [](const std::vector<double>& v) {
            return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
        };
        out << "mu_hat " << model->mle(x_obs).mu << ", learned argmin " << curve.mu[argmin(curve.learned)]
            << ", oracle argmin " << curve.mu[argmin(curve.oracle)] << "\n";
        out << "wrote " << (dir / "scan.csv").string() << "\n";
        return kExitOk;
    });
}

} // namespace plr::commands
