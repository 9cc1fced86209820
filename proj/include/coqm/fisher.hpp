#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include "coqm/errors.hpp"
#include "coqm/oq.hpp"
#include "coqm/qubit.hpp"

namespace coqm {

inline constexpr double kFdStep = 1e-6;

// Classical Fisher information sum dp^2/p of a one-parameter distribution
// family, by central finite differences. Cells with p = 0 and dp = 0
// contribute nothing; p = 0 with dp != 0 flags divergence as +inf.
template <typename Family>
    requires std::invocable<Family, double>
double classical_fi(Family&& family, double value, double h = kFdStep) {
    if (h <= 0.0) throw std::invalid_argument("classical_fi: h must be positive");
    const std::vector<double> p = family(value);
    const std::vector<double> hi = family(value + h);
    const std::vector<double> lo = family(value - h);
    double fi = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double dp = (hi[i] - lo[i]) / (2 * h);
        if (p[i] <= 0.0) {
            if (std::abs(dp) > 1e-9) return std::numeric_limits<double>::infinity();
            continue;
        }
        fi += dp * dp / p[i];
    }
    return fi;
}

// Contextual Fisher information sum dw^2/w of a quasiprobability family.
// Defined only for strictly positive tables; entries at or below the margin
// raise PositivityError, matching the divergence restriction of the method.
inline constexpr double kPositivityMargin = 1e-12;

template <typename WFamily>
    requires std::invocable<WFamily, double>
double contextual_fi(WFamily&& w_family, double value, double h = kFdStep) {
    const QuasiProb q = w_family(value);
    const QuasiProb qh = w_family(value + h);
    const QuasiProb ql = w_family(value - h);
    double fi = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (q.w[i] <= kPositivityMargin)
            throw PositivityError("contextual_fi: quasiprobability entry <= 0");
        const double dw = (qh.w[i] - ql.w[i]) / (2 * h);
        fi += dw * dw / q.w[i];
    }
    return fi;
}

// Closed form for the standard configuration's analytic family.
inline double contextual_fi(const ProbeAngles& angles, ParamTag tag) {
    const QuasiProb q = analytic_oq(angles);
    const auto d1 = analytic_oq_d1(angles, tag);
    double fi = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (q.w[i] <= kPositivityMargin)
            throw PositivityError("contextual_fi: quasiprobability entry <= 0");
        fi += d1[i] * d1[i] / q.w[i];
    }
    return fi;
}

// Quantum Fisher information of the probe family. Pure probes: 1 for theta,
// sin^2 theta for phi. Depolarized probes use the two-level Bloch formula
// |dr|^2 + (r.dr)^2/(1-|r|^2); with the isotropic contraction the radial
// term vanishes and the result is the pure value scaled by the contraction
// squared.
inline double quantum_fi(const ProbeAngles& angles, ParamTag tag, double lambda = 1.0) {
    if (lambda < 0.25 - 1e-12 || lambda > 1.0 + 1e-12)
        throw std::invalid_argument("quantum_fi: lambda outside [0.25, 1]");
    const double pure = tag == ParamTag::Theta
                            ? 1.0
                            : std::sin(angles.theta) * std::sin(angles.theta);
    if (lambda >= 1.0 - 1e-12) return pure;
    const double k = (4.0 * lambda - 1.0) / 3.0;
    return k * k * pure;
}

// Cramer-Rao error bound 1/sqrt(n F); +inf when the information vanishes.
inline double crb(double fisher_information, double n_samples) {
    if (n_samples < 1.0) throw std::invalid_argument("crb: n_samples < 1");
    if (fisher_information < 0.0) throw std::invalid_argument("crb: negative information");
    if (fisher_information == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / std::sqrt(n_samples * fisher_information);
}

// R = log10(sqrt(2) err_co / err_q) = (1/2) log10(2 f_q / f_co); negative
// values mean the two-context method beats the doubled-budget conventional
// bound.
inline double error_ratio(double f_co, double f_q) {
    if (f_co <= 0.0 || f_q <= 0.0)
        throw std::invalid_argument("error_ratio: information must be positive");
    return 0.5 * std::log10(2.0 * f_q / f_co);
}

// Observed information -d^2/dx^2 log-likelihood at the estimate, by a
// central second difference.
template <typename LogLik>
    requires std::invocable<LogLik, double>
double observed_information(LogLik&& loglik, double at, double h = 1e-4) {
    if (h <= 0.0) throw std::invalid_argument("observed_information: h must be positive");
    const double c = loglik(at);
    const double p = loglik(at + h);
    const double m = loglik(at - h);
    return -(p - 2 * c + m) / (h * h);
}

// Summary of the Fisher quantities at one operating point.
struct FisherReport {
    double f_classical = 0.0;  // per-sample FI of p(a,b|AB)
    double f_contextual = 0.0; // per-sample FI of the quasiprobability family
    double f_quantum = 0.0;
    double crb_co = 0.0; // 1/sqrt(n_s f_contextual)
    double crb_q = 0.0;  // 1/sqrt(n_s f_quantum)
    double ratio_r = 0.0;
};

inline FisherReport fisher_report(const ProbeAngles& angles, ParamTag tag, double lambda,
                                  double n_samples) {
    FisherReport rep;
    const auto A = BinaryMeasurement::sharp_z();
    const auto B = BinaryMeasurement::sharp_x();
    auto joint_family = [&](double v) {
        const ProbeAngles pa = tag == ParamTag::Theta ? ProbeAngles(v, angles.phi)
                                                      : ProbeAngles(angles.theta, v);
        const BlochState st = depolarize(bloch_from_angles(pa), lambda);
        const JointDist j = consecutive_context_dist(st, A, B);
        return std::vector<double>(j.p.begin(), j.p.end());
    };
    const double at = tag == ParamTag::Theta ? angles.theta : angles.phi;
    rep.f_classical = classical_fi(joint_family, at);
    rep.f_contextual = contextual_fi(angles, tag);
    rep.f_quantum = quantum_fi(angles, tag, lambda);
    rep.crb_co = crb(rep.f_contextual, n_samples);
    rep.crb_q = crb(rep.f_quantum, n_samples);
    rep.ratio_r = error_ratio(rep.f_contextual, rep.f_quantum);
    return rep;
}

} // namespace coqm
