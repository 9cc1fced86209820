#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "coqm/calibration.hpp"
#include "coqm/estimator.hpp"
#include "coqm/fisher.hpp"
#include "coqm/oq.hpp"
#include "coqm/qubit.hpp"
#include "coqm/rng.hpp"

namespace coqm {

enum class ExperimentKind {
    Landscape,
    ThetaSweep,
    PhiSweep,
    SampleSize,
    Concentration,
    Depolarization,
};

// How count data is produced.
//   TwoContext: independent multinomials for the B-only and consecutive
//     ensembles, n_s samples each; derived counts can go negative (trial
//     failure), matching the measurement pipeline.
//   VirtualW: n_s draws from the (positive) quasiprobability itself, the
//     idealization under which the estimator's asymptotic theory holds.
enum class SamplingModel { TwoContext, VirtualW };

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::ThetaSweep;
    double theta = kPi / 2;        // operating point / sweep anchor
    double phi = 0.15 * kPi;
    double sweep_lo = 0.46 * kPi;  // sweep range for theta/phi sweeps
    double sweep_hi = 0.55 * kPi;
    int sweep_points = 149;
    int grid_theta = 50;           // landscape grid
    int grid_phi = 50;
    double land_theta_lo = 0.02 * kPi; // landscape axis ranges
    double land_theta_hi = 0.98 * kPi;
    double land_phi_lo = 0.0;
    double land_phi_hi = 2.0 * kPi;
    std::vector<std::int64_t> sample_sizes{100, 1000, 10000, 100000};
    std::vector<double> concentrations{0.1, 0.3, 0.5};
    std::vector<double> lambdas{1.0, 0.95, 0.9, 0.8};
    double lambda = 1.0;           // probe purity for non-depolarization runs
    std::int64_t n_s = 100000;
    int trials = 40;
    std::uint64_t seed = 1;
    int threads = 0;               // 0 = hardware concurrency
    bool clip = true;              // drop sweep points outside positivity
    bool mc_landscape = false;     // attach sampled errors to landscape cells
    SamplingModel sampling = SamplingModel::TwoContext;
    std::optional<ErrorModelParams> systematic;
    double alpha = 34.1;           // deg ml / (dm g)
    double path_l = 0.1;           // dm
    double depol_lo = 0.4 * kPi;   // phi grid of the depolarization sweep
    double depol_hi = 0.6 * kPi;
    int depol_points = 9;
    double depol_theta = 0.2 * kPi;

    void validate() const {
        if (n_s < 1) throw std::invalid_argument("config: n_s >= 1 required");
        if (trials < 1) throw std::invalid_argument("config: trials >= 1 required");
        if (sweep_points < 1 || grid_theta < 2 || grid_phi < 2 || depol_points < 1)
            throw std::invalid_argument("config: empty grid");
        if (lambda < 0.25 || lambda > 1.0)
            throw std::invalid_argument("config: lambda outside [0.25, 1]");
        for (double l : lambdas)
            if (l < 0.25 || l > 1.0)
                throw std::invalid_argument("config: lambda outside [0.25, 1]");
        for (auto n : sample_sizes)
            if (n < 1) throw std::invalid_argument("config: sample size >= 1 required");
    }
};

// One estimation trial, reproducible from (config, seed, indices).
struct TrialRecord {
    std::uint64_t stream_id = 0;
    ProbeAngles probe;
    std::uint64_t counts_digest = 0;
    EstimationResult result;
    double wall_time_s = 0.0; // in-memory diagnostic; never serialized
};

// The two measured context distributions of a probe, optionally perturbed by
// the systematic-error model and/or depolarized.
struct ContextDists {
    OutcomeDist single;
    JointDist joint;
};

// Single-context and consecutive-context probabilities under the systematic
// model: drifted state angles, biased/unsharp measurements on shifted axes.
// A nearly sharp first measurement uses the square-root update rule.
inline ContextDists apply_systematic_model(const ProbeAngles& probe_exp,
                                           const ErrorModelParams& t) {
    if (!t.feasible())
        throw std::invalid_argument("apply_systematic_model: POVM constraints violated");
    const ProbeAngles drifted(t.theta0 + t.theta1 * probe_exp.theta,
                              t.phi0 + t.phi1 * probe_exp.phi);
    const BlochState st = bloch_from_angles(drifted);
    const auto A = BinaryMeasurement::from_angles(t.theta_a, t.phi_a, t.mu_a, t.x_a);
    const auto B = BinaryMeasurement::from_angles(t.theta_b, t.phi_b, t.mu_b, t.x_b);
    ContextDists out;
    out.single = single_context_dist(st, B);
    out.joint = consecutive_context_dist(st, A, B, StateUpdateRule::SquareRoot);
    return out;
}

inline ContextDists ideal_contexts(const ProbeAngles& probe, double lambda) {
    const BlochState st = depolarize(bloch_from_angles(probe), lambda);
    ContextDists out;
    out.single = single_context_dist(st, BinaryMeasurement::sharp_x());
    out.joint = consecutive_context_dist(st, BinaryMeasurement::sharp_z(),
                                         BinaryMeasurement::sharp_x());
    return out;
}

inline ContextDists contexts_for(const ExperimentConfig& cfg, const ProbeAngles& probe,
                                 double lambda) {
    if (cfg.systematic) {
        ContextDists d = apply_systematic_model(probe, *cfg.systematic);
        if (lambda < 1.0 - 1e-12) {
            // mix the four Pauli-conjugated context tables
            const ProbeAngles drifted(cfg.systematic->theta0 +
                                          cfg.systematic->theta1 * probe.theta,
                                      cfg.systematic->phi0 + cfg.systematic->phi1 * probe.phi);
            const BlochState st = bloch_from_angles(drifted);
            const auto A = BinaryMeasurement::from_angles(
                cfg.systematic->theta_a, cfg.systematic->phi_a, cfg.systematic->mu_a,
                cfg.systematic->x_a);
            const auto B = BinaryMeasurement::from_angles(
                cfg.systematic->theta_b, cfg.systematic->phi_b, cfg.systematic->mu_b,
                cfg.systematic->x_b);
            const auto twirled = pauli_conjugated(st);
            std::array<JointDist, 3> joints;
            std::array<OutcomeDist, 3> singles;
            for (int i = 0; i < 3; ++i) {
                joints[static_cast<std::size_t>(i)] = consecutive_context_dist(
                    twirled[static_cast<std::size_t>(i)], A, B, StateUpdateRule::SquareRoot);
                singles[static_cast<std::size_t>(i)] =
                    single_context_dist(twirled[static_cast<std::size_t>(i)], B);
            }
            d.joint = mix_depolarized_probabilities(d.joint, joints[0], joints[1], joints[2],
                                                    lambda);
            const double c = (1.0 - lambda) / 3.0;
            for (int b = 0; b < 2; ++b)
                d.single.p[static_cast<std::size_t>(b)] =
                    lambda * d.single.p[static_cast<std::size_t>(b)] +
                    c * (singles[0].p[static_cast<std::size_t>(b)] +
                         singles[1].p[static_cast<std::size_t>(b)] +
                         singles[2].p[static_cast<std::size_t>(b)]);
        }
        return d;
    }
    return ideal_contexts(probe, lambda);
}

inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFF;
        h *= 1099511628211ull;
    }
    return h;
}

// Multinomial counts for the two contexts from independent substreams.
inline CountTable sample_contexts(const ContextDists& dists, std::int64_t n_s,
                                  const RngStream& stream) {
    CountTable c;
    c.n_s = n_s;
    RngStream sb = stream.substream(0);
    RngStream sab = stream.substream(1);
    c.n_b = sample_multinomial<2>(sb, n_s, dists.single.p);
    c.n_ab = sample_multinomial<4>(sab, n_s, dists.joint.p);
    return c;
}

// n_s draws from a positive quasiprobability table (the virtual ensemble).
inline std::array<double, 4> sample_virtual_w(const QuasiProb& w, std::int64_t n_s,
                                              RngStream stream) {
    if (w.min_entry() < 0.0)
        throw std::invalid_argument("sample_virtual_w: table has negative entries");
    const auto counts = sample_multinomial<4>(stream, n_s, w.w);
    std::array<double, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) out[i] = static_cast<double>(counts[i]);
    return out;
}

// One fully recorded trial; identical (config, probe, indices) reproduce the
// identical record.
inline TrialRecord run_trial_record(const ExperimentConfig& cfg, const ProbeAngles& probe,
                                    ParamTag tag, std::uint64_t point_idx, int trial_idx) {
    const double fixed = tag == ParamTag::Theta ? probe.phi : probe.theta;
    const double value = tag == ParamTag::Theta ? probe.theta : probe.phi;
    TrialRecord rec;
    rec.probe = probe;
    const RngStream stream(cfg.seed, {static_cast<std::uint64_t>(cfg.kind), point_idx,
                                      static_cast<std::uint64_t>(trial_idx)});
    rec.stream_id = splitmix64(cfg.seed ^ point_idx ^ static_cast<std::uint64_t>(trial_idx));
    const ContextDists d = contexts_for(cfg, probe, cfg.lambda);
    const CountTable counts = sample_contexts(d, cfg.n_s, stream);
    std::uint64_t h = 1469598103934665603ull;
    for (auto v : counts.n_b) h = fnv1a(h, static_cast<std::uint64_t>(v));
    for (auto v : counts.n_ab) h = fnv1a(h, static_cast<std::uint64_t>(v));
    rec.counts_digest = h;
    const auto window = positivity_window(value, 1e-6, kPi - 1e-6, fixed, tag);
    rec.result = window ? mle_solve(counts, *window, fixed, tag)
                        : EstimationResult::failure(FailureReason::Boundary);
    return rec;
}

namespace detail {

// Ordered parallel map over trial indices: results are identical for any
// thread count because every trial draws from its own counter-based stream
// and aggregation happens in index order afterwards.
template <typename T>
std::vector<T> run_indexed(int n, int threads, const std::function<T(int)>& fn) {
    std::vector<T> out(static_cast<std::size_t>(n));
    int hw = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    hw = std::max(1, std::min(hw, n));
    if (hw == 1) {
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fn(i);
        return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(hw));
    for (int t = 0; t < hw; ++t)
        pool.emplace_back([&, t]() {
            for (int i = t; i < n; i += hw) out[static_cast<std::size_t>(i)] = fn(i);
        });
    for (auto& th : pool) th.join();
    return out;
}

} // namespace detail

// Aggregated per-point statistics of a sweep.
struct SweepPoint {
    double sweep_var = 0.0;       // theta, phi, n_s, c or lambda
    double mean_estimate = 0.0;   // over successful trials
    double mean_error = 0.0;      // mean error_hat (or RMS error, virtual model)
    double std_estimate = 0.0;    // empirical scatter of the estimates
    double failure_rate = 0.0;    // all failed trials / trials
    double negative_rate = 0.0;   // negative-count failures / trials
    double crb_bound = 0.0;       // conventional comparison bound
    int trials = 0;
    int successes = 0;
};

namespace detail {

struct TrialStat {
    bool ok = false;
    FailureReason reason = FailureReason::None;
    double estimate = 0.0;
    double error_hat = 0.0;
};

inline TrialStat one_trial(const ExperimentConfig& cfg, const ProbeAngles& probe,
                           double lambda, double fixed_angle, ParamTag tag,
                           std::pair<double, double> interval, std::uint64_t point_idx,
                           int trial_idx) {
    const RngStream stream(cfg.seed, {static_cast<std::uint64_t>(cfg.kind), point_idx,
                                      static_cast<std::uint64_t>(trial_idx)});
    EstimationResult res;
    if (cfg.sampling == SamplingModel::VirtualW) {
        const ContextDists d = contexts_for(cfg, probe, lambda);
        const QuasiProb w = build_oq(d.single, d.joint);
        if (w.min_entry() < 0.0) {
            res = EstimationResult::failure(FailureReason::NegativeCount);
        } else {
            const auto nw = sample_virtual_w(w, cfg.n_s, stream);
            res = mle_solve_weights(nw, static_cast<double>(cfg.n_s), interval, fixed_angle,
                                    tag);
        }
    } else {
        const ContextDists d = contexts_for(cfg, probe, lambda);
        const CountTable counts = sample_contexts(d, cfg.n_s, stream);
        res = mle_solve(counts, interval, fixed_angle, tag);
    }
    TrialStat st;
    st.ok = !res.failed && res.estimate && res.error_hat;
    st.reason = res.reason;
    if (st.ok) {
        st.estimate = *res.estimate;
        st.error_hat = *res.error_hat;
    }
    return st;
}

inline SweepPoint aggregate(const std::vector<TrialStat>& stats, double sweep_var,
                            double crb_bound, std::optional<double> truth = std::nullopt) {
    SweepPoint p;
    p.sweep_var = sweep_var;
    p.crb_bound = crb_bound;
    p.trials = static_cast<int>(stats.size());
    double se = 0.0, see = 0.0, s2 = 0.0;
    for (const auto& s : stats) {
        if (!s.ok) {
            p.failure_rate += 1.0;
            if (s.reason == FailureReason::NegativeCount) p.negative_rate += 1.0;
            continue;
        }
        ++p.successes;
        se += s.estimate;
        see += s.error_hat;
        s2 += s.estimate * s.estimate;
    }
    p.failure_rate /= std::max(1, p.trials);
    p.negative_rate /= std::max(1, p.trials);
    if (p.successes > 0) {
        p.mean_estimate = se / p.successes;
        p.mean_error = see / p.successes;
        if (p.successes > 1)
            p.std_estimate = std::sqrt(
                std::max(0.0, (s2 - se * se / p.successes) / (p.successes - 1)));
        if (truth) {
            // virtual-model error: RMS deviation from the true parameter
            double acc = 0.0;
            for (const auto& s : stats)
                if (s.ok) acc += (s.estimate - *truth) * (s.estimate - *truth);
            p.mean_error = std::sqrt(acc / p.successes);
        }
    }
    return p;
}

} // namespace detail

// Parameter sweep at fixed companion angle: theta sweeps hold phi, phi
// sweeps hold theta. Points outside the strict positivity region are
// clipped (cfg.clip) or reported as a domain error by the caller.
struct SweepResult {
    std::vector<SweepPoint> points;
    std::vector<double> clipped; // sweep values dropped by positivity clipping
};

inline SweepResult run_sweep(const ExperimentConfig& cfg, ParamTag tag) {
    cfg.validate();
    const double fixed = tag == ParamTag::Theta ? cfg.phi : cfg.theta;
    const double fq = tag == ParamTag::Theta
                          ? quantum_fi(ProbeAngles(cfg.theta, cfg.phi), ParamTag::Theta)
                          : quantum_fi(ProbeAngles(cfg.theta, cfg.phi), ParamTag::Phi);
    const double bound = crb(fq, 2.0 * static_cast<double>(cfg.n_s));
    SweepResult out;
    std::vector<double> kept;
    for (int i = 0; i < cfg.sweep_points; ++i) {
        const double v = cfg.sweep_points == 1
                             ? cfg.sweep_lo
                             : cfg.sweep_lo +
                                   (cfg.sweep_hi - cfg.sweep_lo) * i / (cfg.sweep_points - 1);
        const ProbeAngles probe = tag == ParamTag::Theta ? ProbeAngles(v, fixed)
                                                         : ProbeAngles(fixed, v);
        if (analytic_oq(probe).min_entry() <= 1e-9) {
            out.clipped.push_back(v);
            continue;
        }
        kept.push_back(v);
    }
    const std::pair<double, double> domain =
        tag == ParamTag::Theta ? std::make_pair(1e-6, kPi - 1e-6)
                               : std::make_pair(1e-6, kPi - 1e-6);
    for (std::size_t pi = 0; pi < kept.size(); ++pi) {
        const double v = kept[pi];
        const ProbeAngles probe = tag == ParamTag::Theta ? ProbeAngles(v, fixed)
                                                         : ProbeAngles(fixed, v);
        const auto window = positivity_window(v, domain.first, domain.second, fixed, tag);
        if (!window) {
            out.clipped.push_back(v);
            continue;
        }
        auto stats = detail::run_indexed<detail::TrialStat>(
            cfg.trials, cfg.threads, [&](int t) {
                return detail::one_trial(cfg, probe, cfg.lambda, fixed, tag, *window,
                                         pi, t);
            });
        const auto truth = cfg.sampling == SamplingModel::VirtualW
                               ? std::optional<double>(v)
                               : std::nullopt;
        out.points.push_back(detail::aggregate(stats, v, bound, truth));
    }
    return out;
}

inline SweepResult run_theta_sweep(const ExperimentConfig& cfg) {
    return run_sweep(cfg, ParamTag::Theta);
}

inline SweepResult run_phi_sweep(const ExperimentConfig& cfg) {
    return run_sweep(cfg, ParamTag::Phi);
}

// Error-ratio landscape cell; R is defined only where the quasiprobability
// is nonnegative.
struct LandscapeCell {
    double theta = 0.0;
    double phi = 0.0;
    std::optional<double> ratio_r;
    double negativity = 0.0;
    std::optional<double> mc_mean_error; // only in Monte-Carlo mode
};

inline std::vector<LandscapeCell> run_landscape(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<LandscapeCell> cells;
    cells.reserve(static_cast<std::size_t>(cfg.grid_theta) *
                  static_cast<std::size_t>(cfg.grid_phi));
    for (int i = 0; i < cfg.grid_theta; ++i) {
        const double th =
            cfg.grid_theta == 1
                ? cfg.land_theta_lo
                : cfg.land_theta_lo +
                      (cfg.land_theta_hi - cfg.land_theta_lo) * i / (cfg.grid_theta - 1);
        for (int j = 0; j < cfg.grid_phi; ++j) {
            const double ph =
                cfg.grid_phi == 1
                    ? cfg.land_phi_lo
                    : cfg.land_phi_lo +
                          (cfg.land_phi_hi - cfg.land_phi_lo) * j / (cfg.grid_phi - 1);
            LandscapeCell cell;
            cell.theta = th;
            cell.phi = ph;
            const ProbeAngles probe(th, ph);
            const QuasiProb w = analytic_oq(probe);
            cell.negativity = negativity(w);
            if (cell.negativity <= 0.0 && w.min_entry() > kPositivityMargin) {
                const double fco = contextual_fi(probe, ParamTag::Theta);
                cell.ratio_r = error_ratio(fco, quantum_fi(probe, ParamTag::Theta));
                if (cfg.mc_landscape) {
                    const auto window = positivity_window(th, 1e-6, kPi - 1e-6, ph,
                                                          ParamTag::Theta);
                    if (window) {
                        auto stats = detail::run_indexed<detail::TrialStat>(
                            cfg.trials, cfg.threads, [&](int t) {
                                return detail::one_trial(
                                    cfg, probe, cfg.lambda, ph, ParamTag::Theta, *window,
                                    static_cast<std::uint64_t>(i) * 1000003ull +
                                        static_cast<std::uint64_t>(j),
                                    t);
                            });
                        const auto agg = detail::aggregate(stats, th, 0.0);
                        if (agg.successes > 0) cell.mc_mean_error = agg.mean_error;
                    }
                }
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

inline std::vector<SweepPoint> run_sample_size_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<std::int64_t> sizes = cfg.sample_sizes;
    if (!std::is_sorted(sizes.begin(), sizes.end()))
        throw std::invalid_argument("run_sample_size_sweep: sizes must ascend");
    const ProbeAngles probe(cfg.theta, cfg.phi);
    if (analytic_oq(probe).min_entry() <= 1e-9)
        throw std::invalid_argument("run_sample_size_sweep: probe outside positivity region");
    const auto window = positivity_window(cfg.theta, 1e-6, kPi - 1e-6, cfg.phi,
                                          ParamTag::Theta);
    std::vector<SweepPoint> points;
    for (std::size_t si = 0; si < sizes.size(); ++si) {
        ExperimentConfig c = cfg;
        c.n_s = sizes[si];
        auto stats = detail::run_indexed<detail::TrialStat>(
            cfg.trials, cfg.threads, [&](int t) {
                return detail::one_trial(c, probe, cfg.lambda, cfg.phi, ParamTag::Theta,
                                         *window, si, t);
            });
        points.push_back(detail::aggregate(stats, static_cast<double>(sizes[si]),
                                           crb(1.0, 2.0 * static_cast<double>(sizes[si]))));
    }
    return points;
}

// Concentration runs: rotate the probe polar angle by alpha*l*c degrees,
// estimate it back, convert to concentration.
struct ConcentrationPoint {
    double c_true = 0.0;
    double c_hat_mean = 0.0;
    double dc_mean = 0.0;
    double dc_bound = 0.0; // conventional bound converted to g/ml
    double failure_rate = 0.0;
    int repetitions = 0;
};

inline std::vector<ConcentrationPoint> run_concentration(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<ConcentrationPoint> out;
    const double bound_theta = crb(1.0, 2.0 * static_cast<double>(cfg.n_s));
    for (std::size_t ci = 0; ci < cfg.concentrations.size(); ++ci) {
        const double c_true = cfg.concentrations[ci];
        const double rotation = cfg.alpha * cfg.path_l * c_true * kPi / 180.0;
        const double th = cfg.theta + rotation;
        const ProbeAngles probe(th, cfg.phi);
        if (analytic_oq(probe).min_entry() <= 1e-9)
            throw std::invalid_argument(
                "run_concentration: rotated probe outside positivity region");
        const auto window = positivity_window(th, 1e-6, kPi - 1e-6, cfg.phi,
                                              ParamTag::Theta);
        auto stats = detail::run_indexed<detail::TrialStat>(
            cfg.trials, cfg.threads, [&](int t) {
                return detail::one_trial(cfg, probe, cfg.lambda, cfg.phi, ParamTag::Theta,
                                         *window, ci, t);
            });
        ConcentrationPoint pt;
        pt.c_true = c_true;
        pt.repetitions = cfg.trials;
        pt.dc_bound =
            to_concentration(cfg.theta, bound_theta, cfg.theta, cfg.alpha, cfg.path_l).dc_hat;
        int ok = 0;
        for (const auto& s : stats) {
            if (!s.ok) {
                pt.failure_rate += 1.0;
                continue;
            }
            ++ok;
            const auto conv =
                to_concentration(s.estimate, s.error_hat, cfg.theta, cfg.alpha, cfg.path_l);
            pt.c_hat_mean += conv.c_hat;
            pt.dc_mean += conv.dc_hat;
        }
        pt.failure_rate /= cfg.trials;
        if (ok > 0) {
            pt.c_hat_mean /= ok;
            pt.dc_mean /= ok;
        }
        out.push_back(pt);
    }
    return out;
}

// Depolarization sweep for phi estimation. Context probabilities are the
// depolarized mixtures; the likelihood stays the ideal pure family, and the
// per-point error is the RMS deviation of the estimate from the true phi
// over virtual-ensemble trials.
struct DepolPoint {
    double phi = 0.0;
    double lambda = 1.0;
    double mean_error = 0.0;
    double failure_rate = 0.0;
    double crb_bound = 0.0;
};

inline std::vector<DepolPoint> run_depolarization(const ExperimentConfig& cfg) {
    cfg.validate();
    const double fq_pure = quantum_fi(ProbeAngles(cfg.depol_theta, kPi / 2), ParamTag::Phi);
    const double bound = crb(fq_pure, 2.0 * static_cast<double>(cfg.n_s));
    std::vector<DepolPoint> out;
    ExperimentConfig vcfg = cfg;
    vcfg.sampling = SamplingModel::VirtualW;
    for (std::size_t li = 0; li < cfg.lambdas.size(); ++li) {
        for (int j = 0; j < cfg.depol_points; ++j) {
            const double ph = cfg.depol_points == 1
                                  ? cfg.depol_lo
                                  : cfg.depol_lo + (cfg.depol_hi - cfg.depol_lo) * j /
                                                       (cfg.depol_points - 1);
            const ProbeAngles probe(cfg.depol_theta, ph);
            if (analytic_oq(probe).min_entry() <= 1e-9) continue;
            const auto window = positivity_window(ph, 1e-6, kPi - 1e-6, cfg.depol_theta,
                                                  ParamTag::Phi);
            if (!window) continue;
            auto stats = detail::run_indexed<detail::TrialStat>(
                cfg.trials, cfg.threads, [&](int t) {
                    return detail::one_trial(vcfg, probe, cfg.lambdas[li], cfg.depol_theta,
                                             ParamTag::Phi, *window,
                                             li * 1000003ull + static_cast<std::uint64_t>(j),
                                             t);
                });
            const auto agg =
                detail::aggregate(stats, ph, bound, std::optional<double>(ph));
            DepolPoint pt;
            pt.phi = ph;
            pt.lambda = cfg.lambdas[li];
            pt.mean_error = agg.mean_error;
            pt.failure_rate = agg.failure_rate;
            pt.crb_bound = bound;
            out.push_back(pt);
        }
    }
    return out;
}

} // namespace coqm
