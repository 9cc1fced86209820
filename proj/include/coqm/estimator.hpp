#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "coqm/errors.hpp"
#include "coqm/fisher.hpp"
#include "coqm/oq.hpp"

namespace coqm {

enum class FailureReason { None, NegativeCount, Boundary, NoRoot };

// Outcome of a maximum-likelihood solve over the quasiprobability family.
struct EstimationResult {
    std::optional<double> estimate;     // absent when failed
    double f_observed = 0.0;            // observed information at the estimate
    std::optional<double> error_hat;    // 1/sqrt(n_s f_observed), when defined
    bool failed = false;
    FailureReason reason = FailureReason::None;
    int n_roots = 0;                    // score roots found in the interval

    static EstimationResult failure(FailureReason r) {
        EstimationResult e;
        e.failed = true;
        e.reason = r;
        return e;
    }
};

struct ConcentrationResult {
    double c_hat = 0.0;    // g/ml
    double dc_hat = 0.0;   // g/ml
    double alpha = 0.0;    // deg ml / (dm g)
    double path_l = 0.0;   // dm
    double theta0 = 0.0;   // rad
    bool negative_flagged = false;
};

namespace detail {

inline ProbeAngles family_point(double value, double fixed_angle, ParamTag tag) {
    return tag == ParamTag::Theta ? ProbeAngles(value, fixed_angle)
                                  : ProbeAngles(fixed_angle, value);
}

inline double min_w(double value, double fixed_angle, ParamTag tag) {
    return analytic_oq(family_point(value, fixed_angle, tag)).min_entry();
}

} // namespace detail

// Log-likelihood over real-valued derived counts:
//   l(x) = (1/n_s) sum N_W(a,b) log w(a,b|x).
// Requires all weights >= 0 and a strictly positive table at the evaluation
// point.
inline double log_likelihood_w(const std::array<double, 4>& n_w, double n_s, double value,
                               double fixed_angle, ParamTag tag) {
    for (double v : n_w)
        if (v < 0.0)
            throw std::invalid_argument("log_likelihood_w: negative derived count");
    const QuasiProb q = analytic_oq(detail::family_point(value, fixed_angle, tag));
    double l = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (q.w[i] <= kPositivityMargin)
            throw PositivityError("log_likelihood_w: w(a,b) <= 0 at evaluation point");
        if (n_w[i] > 0.0) l += n_w[i] * std::log(q.w[i]);
    }
    return l / n_s;
}

inline double log_likelihood_w(const CountTable& counts, double value, double fixed_angle,
                               ParamTag tag) {
    return log_likelihood_w(derived_w_counts(counts), static_cast<double>(counts.n_s), value,
                            fixed_angle, tag);
}

// The connected subinterval of [lo, hi] around `guess` on which every
// quasiprobability entry stays above `margin`. Empty optional when the guess
// itself is outside the positive region.
inline std::optional<std::pair<double, double>> positivity_window(double guess, double lo,
                                                                  double hi, double fixed_angle,
                                                                  ParamTag tag,
                                                                  double margin = 1e-9) {
    auto ok = [&](double v) { return detail::min_w(v, fixed_angle, tag) >= margin; };
    if (guess < lo || guess > hi || !ok(guess)) return std::nullopt;
    auto edge = [&](double good, double bad) {
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (good + bad);
            (ok(mid) ? good : bad) = mid;
        }
        return good;
    };
    const double wlo = ok(lo) ? lo : edge(guess, lo);
    const double whi = ok(hi) ? hi : edge(guess, hi);
    return std::make_pair(wlo, whi);
}

namespace detail {

struct Scored {
    double root;
    double loglik;
};

} // namespace detail

// Maximum-likelihood solve on real-valued derived counts (used directly when
// sampling the virtual ensemble; mle_solve below wraps it for raw counts).
// Finds the score-equation roots inside the positivity window around the
// interval midpoint, keeps the one with the largest likelihood, and attaches
// the observed information and error.
inline EstimationResult mle_solve_weights(const std::array<double, 4>& n_w, double n_s,
                                          std::pair<double, double> search_interval,
                                          double fixed_angle, ParamTag tag,
                                          double obs_info_step = 1e-4) {
    for (double v : n_w)
        if (v < 0.0) return EstimationResult::failure(FailureReason::NegativeCount);

    const double guess = 0.5 * (search_interval.first + search_interval.second);
    const auto window = positivity_window(guess, search_interval.first, search_interval.second,
                                          fixed_angle, tag);
    if (!window) return EstimationResult::failure(FailureReason::Boundary);
    const auto [lo, hi] = *window;
    if (hi - lo < 1e-12) return EstimationResult::failure(FailureReason::Boundary);

    auto score = [&](double v) {
        const ProbeAngles at = detail::family_point(v, fixed_angle, tag);
        const QuasiProb q = analytic_oq(at);
        const auto d1 = analytic_oq_d1(at, tag);
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i) s += n_w[i] * d1[i] / q.w[i];
        return s / n_s;
    };
    auto loglik = [&](double v) { return log_likelihood_w(n_w, n_s, v, fixed_angle, tag); };

    constexpr int kPanels = 96;
    std::vector<detail::Scored> roots;
    double prev_x = lo, prev_s = score(lo);
    for (int i = 1; i <= kPanels; ++i) {
        const double x = lo + (hi - lo) * i / kPanels;
        const double s = score(x);
        if (prev_s == 0.0) {
            roots.push_back({prev_x, loglik(prev_x)});
        } else if (prev_s * s < 0.0) {
            double a = prev_x, b = x, fa = prev_s;
            for (int it = 0; it < 80; ++it) {
                const double m = 0.5 * (a + b);
                const double fm = score(m);
                if (fa * fm <= 0.0) {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            const double r = 0.5 * (a + b);
            roots.push_back({r, loglik(r)});
        }
        prev_x = x;
        prev_s = s;
    }
    if (roots.empty()) return EstimationResult::failure(FailureReason::NoRoot);

    const auto best = std::max_element(roots.begin(), roots.end(),
                                       [](const auto& a, const auto& b) {
                                           return a.loglik < b.loglik;
                                       });
    EstimationResult res;
    res.estimate = best->root;
    res.n_roots = static_cast<int>(roots.size());
    double h = obs_info_step;
    h = std::min({h, (best->root - lo) / 2, (hi - best->root) / 2});
    if (h <= 0.0) h = obs_info_step * 1e-2;
    res.f_observed = observed_information(loglik, best->root, h);
    if (res.f_observed > 0.0)
        res.error_hat = 1.0 / std::sqrt(n_s * res.f_observed);
    return res;
}

inline EstimationResult mle_solve(const CountTable& counts,
                                  std::pair<double, double> search_interval, double fixed_angle,
                                  ParamTag tag) {
    return mle_solve_weights(derived_w_counts(counts), static_cast<double>(counts.n_s),
                             search_interval, fixed_angle, tag);
}

// 1/sqrt(n_s F) with the observed information; infinite when F <= 0.
inline double estimate_error(const EstimationResult& result, double n_s) {
    if (result.f_observed <= 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / std::sqrt(n_s * result.f_observed);
}

// Concentration from the rotation angle: c = (theta_hat - theta0) (180/pi) / (alpha l),
// with the error converted through the same chain. alpha stays in the
// degree-based units it is quoted in; angles are radians.
inline ConcentrationResult to_concentration(double theta_hat, double delta_theta, double theta0,
                                            double alpha, double path_l) {
    if (alpha <= 0.0 || path_l <= 0.0)
        throw std::invalid_argument("to_concentration: alpha and path length must be positive");
    constexpr double kDegPerRad = 180.0 / kPi;
    ConcentrationResult r;
    r.alpha = alpha;
    r.path_l = path_l;
    r.theta0 = theta0;
    r.c_hat = (theta_hat - theta0) * kDegPerRad / (alpha * path_l);
    r.dc_hat = delta_theta * kDegPerRad / (alpha * path_l);
    r.negative_flagged = r.c_hat < 0.0;
    return r;
}

} // namespace coqm
