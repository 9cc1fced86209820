// coqm: simulation front end for two-context polarimetry estimation.
// Subcommands: landscape, estimate, calibrate. See README for formats.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coqm/io.hpp"
#include "coqm/simulator.hpp"
#include "coqm/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace coqm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDomain = 3;
constexpr int kExitNoConverge = 4;

std::vector<double> parse_angle_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_angle(tok));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

json config_json(const ExperimentConfig& c, const std::string& kind) {
    json j;
    j["kind"] = kind;
    j["theta"] = c.theta;
    j["phi"] = c.phi;
    j["sweep_lo"] = c.sweep_lo;
    j["sweep_hi"] = c.sweep_hi;
    j["sweep_points"] = c.sweep_points;
    j["n_s"] = c.n_s;
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    j["lambda"] = c.lambda;
    j["sampling"] = c.sampling == SamplingModel::VirtualW ? "virtual" : "two-context";
    j["clip"] = c.clip;
    return j;
}

void write_run_record(const fs::path& path, const std::string& command,
                      const ExperimentConfig& cfg, const std::string& kind,
                      const std::vector<std::string>& outputs, json extras) {
    json j;
    j["schema"] = kRunRecordSchemaVersion;
    j["tool_version"] = kVersion;
    j["command"] = command;
    j["master_seed"] = cfg.seed;
    j["config"] = config_json(cfg, kind);
    j["outputs"] = outputs;
    for (auto& [k, v] : extras.items()) j[k] = v;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

ErrorModelParams params_from_json(const json& j) {
    ErrorModelParams p;
    p.theta0 = j.at("theta0").get<double>();
    p.phi0 = j.at("phi0").get<double>();
    p.theta1 = j.at("theta1").get<double>();
    p.phi1 = j.at("phi1").get<double>();
    p.x_a = j.at("xA").get<double>();
    p.mu_a = j.at("muA").get<double>();
    p.theta_a = j.at("thetaA").get<double>();
    p.phi_a = j.at("phiA").get<double>();
    p.x_b = j.at("xB").get<double>();
    p.mu_b = j.at("muB").get<double>();
    p.theta_b = j.at("thetaB").get<double>();
    p.phi_b = j.at("phiB").get<double>();
    return p;
}

json params_to_json(const ErrorModelParams& p) {
    json j;
    j["theta0"] = p.theta0;
    j["phi0"] = p.phi0;
    j["theta1"] = p.theta1;
    j["phi1"] = p.phi1;
    j["xA"] = p.x_a;
    j["muA"] = p.mu_a;
    j["thetaA"] = p.theta_a;
    j["phiA"] = p.phi_a;
    j["xB"] = p.x_b;
    j["muB"] = p.mu_b;
    j["thetaB"] = p.theta_b;
    j["phiB"] = p.phi_b;
    return j;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    // timing goes to stderr so run outputs stay byte-identical across reruns
    ~Timer() {
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        std::fprintf(stderr, "elapsed %.2fs\n", dt.count());
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"contextual two-measurement polarimetry simulator"};
    app.set_version_flag("--version", std::string(kVersion));
    app.set_config("--config", "", "flat key=value config file; flags override");
    app.require_subcommand(0, 1);

    std::string out_dir = ".";
    std::uint64_t seed = 1;
    int trials = -1;
    std::string samples_str;
    int threads = 0;
    bool clip = false;
    app.add_option("--out-dir", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "master seed")->capture_default_str();
    app.add_option("--trials", trials, "trials per sweep point");
    app.add_option("--samples", samples_str, "samples per ensemble, e.g. 1e5");
    app.add_option("--threads", threads, "worker threads (0 = auto)");
    app.add_flag("--clip", clip, "drop sweep points outside the positivity region");

    // landscape
    auto* land = app.add_subcommand("landscape", "error-ratio landscape over probe states");
    std::string grid = "50x50", theta_range, phi_range;
    bool mc = false;
    land->add_option("--grid", grid, "grid size NxM")->capture_default_str();
    land->add_option("--theta-range", theta_range, "lo:hi (angle literals)");
    land->add_option("--phi-range", phi_range, "lo:hi (angle literals)");
    land->add_flag("--mc", mc, "attach Monte-Carlo errors to nonnegative cells");

    // estimate
    auto* est = app.add_subcommand("estimate", "run an estimation experiment");
    std::string kind = "theta_sweep";
    std::string theta_str = "0.5pi", phi_str = "0.15pi", range_str, sizes_str, c_str,
                lambdas_str, sampling_str = "two-context", systematic_path;
    int points = -1;
    est->add_option("--kind", kind,
                    "theta_sweep|phi_sweep|sample_size|concentration|depolarization")
        ->capture_default_str();
    est->add_option("--theta", theta_str, "probe theta (angle literal)")->capture_default_str();
    est->add_option("--phi", phi_str, "probe phi (angle literal)")->capture_default_str();
    est->add_option("--range", range_str, "sweep range lo:hi (angle literals)");
    est->add_option("--points", points, "sweep points");
    est->add_option("--sizes", sizes_str, "sample sizes, e.g. 1e2,1e3,1e4");
    est->add_option("--c", c_str, "concentrations in g/ml, e.g. 0.1,0.3,0.5");
    est->add_option("--lambdas", lambdas_str, "purity values, e.g. 1,0.95,0.9,0.8");
    est->add_option("--sampling", sampling_str, "two-context|virtual")->capture_default_str();
    est->add_option("--systematic", systematic_path,
                    "JSON file with systematic-error model parameters");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "fit the measurement error model");
    std::string input_csv, cal_out = "params.json", lattice = "30x30", init_kind = "no-error";
    cal->add_option("--input", input_csv, "frequency-dataset CSV")->required();
    cal->add_option("--out", cal_out, "output JSON path")->capture_default_str();
    cal->add_option("--lattice", lattice, "lattice NxM (metadata only)");
    cal->add_option("--init", init_kind, "no-error | JSON file with initial parameters")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        app.exit(e);
        return kExitConfig;
    }

    std::string command;
    for (int i = 0; i < argc; ++i) command += std::string(i ? " " : "") + argv[i];

    Timer timer;
    try {
        fs::create_directories(out_dir);

        ExperimentConfig cfg;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.clip = clip;
        if (trials > 0) cfg.trials = trials;
        if (!samples_str.empty()) cfg.n_s = static_cast<std::int64_t>(std::stod(samples_str));

        if (land->parsed()) {
            cfg.kind = ExperimentKind::Landscape;
            const auto x = grid.find('x');
            if (x == std::string::npos) throw std::invalid_argument("--grid must be NxM");
            cfg.grid_theta = std::stoi(grid.substr(0, x));
            cfg.grid_phi = std::stoi(grid.substr(x + 1));
            auto parse_range = [](const std::string& s, double& lo, double& hi) {
                const auto c = s.find(':');
                if (c == std::string::npos) throw std::invalid_argument("range must be lo:hi");
                lo = parse_angle(s.substr(0, c));
                hi = parse_angle(s.substr(c + 1));
            };
            if (!theta_range.empty())
                parse_range(theta_range, cfg.land_theta_lo, cfg.land_theta_hi);
            if (!phi_range.empty()) parse_range(phi_range, cfg.land_phi_lo, cfg.land_phi_hi);
            cfg.mc_landscape = mc;
            if (cfg.mc_landscape && trials <= 0) cfg.trials = 20;

            const auto cells = run_landscape(cfg);
            const fs::path csv_path = fs::path(out_dir) / "landscape.csv";
            CsvWriter w(csv_path.string(), kCsvSchemaVersion,
                        {"theta", "phi", "R", "negativity"});
            for (const auto& c : cells)
                w.row({format_double(c.theta), format_double(c.phi),
                       c.ratio_r ? format_double(*c.ratio_r) : "",
                       format_double(c.negativity)});
            json extras;
            extras["cells"] = cells.size();
            write_run_record(fs::path(out_dir) / "landscape_run.json", command, cfg,
                             "landscape", {csv_path.string()}, extras);
            return 0;
        }

        if (est->parsed()) {
            cfg.theta = parse_angle(theta_str);
            cfg.phi = parse_angle(phi_str);
            if (sampling_str == "virtual")
                cfg.sampling = SamplingModel::VirtualW;
            else if (sampling_str != "two-context")
                throw std::invalid_argument("--sampling must be two-context or virtual");
            if (!systematic_path.empty()) {
                std::ifstream in(systematic_path);
                if (!in) throw std::invalid_argument("cannot open " + systematic_path);
                json j;
                in >> j;
                cfg.systematic = params_from_json(j.contains("params") ? j["params"] : j);
            }
            if (!range_str.empty()) {
                const auto c = range_str.find(':');
                if (c == std::string::npos)
                    throw std::invalid_argument("--range must be lo:hi");
                cfg.sweep_lo = parse_angle(range_str.substr(0, c));
                cfg.sweep_hi = parse_angle(range_str.substr(c + 1));
            }
            if (points > 0) cfg.sweep_points = points;
            if (!sizes_str.empty()) {
                cfg.sample_sizes.clear();
                for (double v : parse_double_list(sizes_str))
                    cfg.sample_sizes.push_back(static_cast<std::int64_t>(v));
            }
            if (!c_str.empty()) cfg.concentrations = parse_double_list(c_str);
            if (!lambdas_str.empty()) cfg.lambdas = parse_double_list(lambdas_str);

            json extras;
            std::string csv_name = kind + ".csv";
            const fs::path csv_path = fs::path(out_dir) / csv_name;
            std::int64_t failures = 0, total = 0;

            if (kind == "theta_sweep" || kind == "phi_sweep") {
                cfg.kind = kind == "theta_sweep" ? ExperimentKind::ThetaSweep
                                                 : ExperimentKind::PhiSweep;
                if (kind == "phi_sweep" && range_str.empty()) {
                    cfg.sweep_lo = 0.35 * kPi;
                    cfg.sweep_hi = 0.65 * kPi;
                    if (theta_str == "0.5pi") cfg.theta = 0.2 * kPi;
                }
                const auto res = kind == "theta_sweep" ? run_theta_sweep(cfg)
                                                       : run_phi_sweep(cfg);
                if (!res.clipped.empty() && !cfg.clip) {
                    std::fprintf(stderr,
                                 "error: %zu sweep points outside the positivity region; "
                                 "rerun with --clip to drop them\n",
                                 res.clipped.size());
                    return kExitDomain;
                }
                CsvWriter w(csv_path.string(), kCsvSchemaVersion,
                            {kind == "theta_sweep" ? "theta" : "phi", "mean_estimate",
                             "mean_error", "failure_rate", "crb_bound"});
                json details = json::array();
                for (const auto& p : res.points) {
                    w.row({format_double(p.sweep_var), format_double(p.mean_estimate),
                           format_double(p.mean_error), format_double(p.failure_rate),
                           format_double(p.crb_bound)});
                    failures += static_cast<std::int64_t>(
                        std::llround(p.failure_rate * p.trials));
                    total += p.trials;
                    json d;
                    d["sweep_var"] = p.sweep_var;
                    d["std_estimate"] = p.std_estimate;
                    d["successes"] = p.successes;
                    details.push_back(d);
                }
                extras["clipped_points"] = res.clipped;
                extras["point_details"] = details;
            } else if (kind == "sample_size") {
                cfg.kind = ExperimentKind::SampleSize;
                if (phi_str == "0.15pi") cfg.phi = 0.1 * kPi;
                const auto pts = run_sample_size_sweep(cfg);
                CsvWriter w(csv_path.string(), kCsvSchemaVersion,
                            {"n_s", "mean_estimate", "mean_error", "failure_rate",
                             "crb_bound"});
                for (const auto& p : pts) {
                    w.row({format_double(p.sweep_var), format_double(p.mean_estimate),
                           format_double(p.mean_error), format_double(p.failure_rate),
                           format_double(p.crb_bound)});
                    failures += static_cast<std::int64_t>(
                        std::llround(p.failure_rate * p.trials));
                    total += p.trials;
                }
            } else if (kind == "concentration") {
                cfg.kind = ExperimentKind::Concentration;
                if (trials <= 0) cfg.trials = 10;
                const auto pts = run_concentration(cfg);
                CsvWriter w(csv_path.string(), kCsvSchemaVersion,
                            {"c_true", "mean_estimate", "mean_error", "failure_rate",
                             "crb_bound"});
                for (const auto& p : pts) {
                    w.row({format_double(p.c_true), format_double(p.c_hat_mean),
                           format_double(p.dc_mean), format_double(p.failure_rate),
                           format_double(p.dc_bound)});
                    failures += static_cast<std::int64_t>(
                        std::llround(p.failure_rate * p.repetitions));
                    total += p.repetitions;
                }
            } else if (kind == "depolarization") {
                cfg.kind = ExperimentKind::Depolarization;
                const auto pts = run_depolarization(cfg);
                CsvWriter w(csv_path.string(), kCsvSchemaVersion,
                            {"lambda", "phi", "mean_error", "failure_rate", "crb_bound"});
                for (const auto& p : pts) {
                    w.row({format_double(p.lambda), format_double(p.phi),
                           format_double(p.mean_error), format_double(p.failure_rate),
                           format_double(p.crb_bound)});
                    failures +=
                        static_cast<std::int64_t>(std::llround(p.failure_rate * cfg.trials));
                    total += cfg.trials;
                }
            } else {
                throw std::invalid_argument("unknown --kind: " + kind);
            }

            json fa;
            fa["trials_total"] = total;
            fa["failures_total"] = failures;
            extras["failure_accounting"] = fa;
            write_run_record(fs::path(out_dir) / (kind + "_run.json"), command, cfg, kind,
                             {csv_path.string()}, extras);
            return 0;
        }

        if (cal->parsed()) {
            FrequencyDataset ds;
            try {
                ds = read_frequency_csv(input_csv);
            } catch (const std::exception& e) {
                std::fprintf(stderr, "error: %s\n", e.what());
                return kExitConfig;
            }
            ErrorModelParams init = ErrorModelParams::no_error();
            if (init_kind != "no-error") {
                std::ifstream in(init_kind);
                if (!in) throw std::invalid_argument("cannot open init file " + init_kind);
                json j;
                in >> j;
                init = params_from_json(j.contains("params") ? j["params"] : j);
            }
            const FitResult fit = fit_parameters(ds, init);
            json j;
            j["schema"] = "coqm-calibration-v1";
            j["tool_version"] = kVersion;
            j["command"] = command;
            j["params"] = params_to_json(fit.params);
            j["objective"] = fit.objective;
            j["projected_gradient_norm"] = fit.projected_gradient_norm;
            j["iterations"] = fit.iterations;
            j["converged"] = fit.converged;
            j["flatness"] = fit.flatness;
            std::ofstream out(cal_out, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + cal_out);
            out << j.dump(2) << "\n";
            if (!fit.converged) {
                std::fprintf(stderr, "warning: fit did not converge; best-so-far written\n");
                return kExitNoConverge;
            }
            return 0;
        }

        std::cout << app.help() << "\n";
        return 0;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
}
