#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "coqm/qubit.hpp"

namespace coqm {

// Ensemble-selection probabilities of the mixing construction. The defaults
// are the canonical 1/2 values; p_r is the random-ensemble outcome weight.
struct MixingWeights {
    double p_w = 0.5;
    double p_b = 0.5;
    double p_ab = 0.5;
    double p_r = 0.5;
};

// The operational quasiprobability: a signed 2x2 table over (a, b) built from
// the single-context and consecutive-context statistics. Entries may be
// negative; the total is always 1.
struct QuasiProb {
    std::array<double, 4> w{0.25, 0.25, 0.25, 0.25};
    // source distributions, when built from them
    std::optional<OutcomeDist> source_single;
    std::optional<JointDist> source_joint;

    double operator()(int a, int b) const { return w[static_cast<std::size_t>(2 * a + b)]; }

    double marginal_b(int b) const { return (*this)(0, b) + (*this)(1, b); }

    double min_entry() const {
        double m = w[0];
        for (double v : w) m = std::min(m, v);
        return m;
    }
};

// w(a,b) = p(a,b|AB) + 1/2 (p(b|B) - p(b|AB)).
inline QuasiProb build_oq(const OutcomeDist& single, const JointDist& joint) {
    single.validate();
    joint.validate();
    QuasiProb q;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            q.w[static_cast<std::size_t>(2 * a + b)] =
                joint(a, b) + 0.5 * (single[b] - joint.marginal_b(b));
    q.source_single = single;
    q.source_joint = joint;
    return q;
}

// Generalization with configurable ensemble weights; reduces to build_oq at
// the default 1/2 values.
inline QuasiProb build_oq_weighted(const OutcomeDist& single, const JointDist& joint,
                                   const MixingWeights& mw) {
    single.validate();
    joint.validate();
    if (mw.p_w <= 0.0) throw std::invalid_argument("build_oq_weighted: p_w must be positive");
    QuasiProb q;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            q.w[static_cast<std::size_t>(2 * a + b)] =
                (mw.p_ab * joint(a, b) + mw.p_b * mw.p_r * single[b] -
                 mw.p_b * mw.p_r * joint.marginal_b(b)) /
                mw.p_w;
    q.source_single = single;
    q.source_joint = joint;
    return q;
}

// Closed form of the quasiprobability for the standard configuration
// (A along z, B along x, pure probe):
//   w(a,b) = (1 + (-1)^a cos theta + (-1)^b sin theta cos phi) / 4.
inline QuasiProb analytic_oq(const ProbeAngles& angles) {
    const double c = std::cos(angles.theta);
    const double sk = std::sin(angles.theta) * std::cos(angles.phi);
    QuasiProb q;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            q.w[static_cast<std::size_t>(2 * a + b)] =
                (1.0 + (a == 0 ? c : -c) + (b == 0 ? sk : -sk)) / 4.0;
    return q;
}

// First and second derivatives of the closed-form table with respect to the
// estimation target (the other angle held fixed).
enum class ParamTag { Theta, Phi };

inline std::array<double, 4> analytic_oq_d1(const ProbeAngles& angles, ParamTag tag) {
    const double c = std::cos(angles.theta), s = std::sin(angles.theta);
    const double k = std::cos(angles.phi), dk = -std::sin(angles.phi);
    std::array<double, 4> d{};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double sa = a == 0 ? 1.0 : -1.0;
            const double sb = b == 0 ? 1.0 : -1.0;
            d[static_cast<std::size_t>(2 * a + b)] =
                tag == ParamTag::Theta ? (-sa * s + sb * c * k) / 4.0 : sb * s * dk / 4.0;
        }
    return d;
}

inline std::array<double, 4> analytic_oq_d2(const ProbeAngles& angles, ParamTag tag) {
    const double c = std::cos(angles.theta), s = std::sin(angles.theta);
    const double k = std::cos(angles.phi);
    std::array<double, 4> d{};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double sa = a == 0 ? 1.0 : -1.0;
            const double sb = b == 0 ? 1.0 : -1.0;
            d[static_cast<std::size_t>(2 * a + b)] =
                tag == ParamTag::Theta ? (-sa * c - sb * s * k) / 4.0 : -sb * s * k / 4.0;
        }
    return d;
}

// Raw counts of one experiment: n_b from the B-only ensemble and n_ab from
// the consecutive ensemble, n_s samples each.
struct CountTable {
    std::array<std::int64_t, 2> n_b{0, 0};
    std::array<std::int64_t, 4> n_ab{0, 0, 0, 0};
    std::int64_t n_s = 0;

    void validate() const {
        if (n_s < 1) throw std::invalid_argument("CountTable: n_s < 1");
        std::int64_t sb = n_b[0] + n_b[1];
        std::int64_t sab = n_ab[0] + n_ab[1] + n_ab[2] + n_ab[3];
        for (auto v : n_b)
            if (v < 0) throw std::invalid_argument("CountTable: negative count");
        for (auto v : n_ab)
            if (v < 0) throw std::invalid_argument("CountTable: negative count");
        if (sb != n_s || sab != n_s)
            throw std::invalid_argument("CountTable: ensembles must hold n_s counts each");
    }
};

// Derived counts N_W(a,b) = N_AB(a,b) + (N_B(b) - N_AB(b))/2; half-integers,
// possibly negative.
inline std::array<double, 4> derived_w_counts(const CountTable& counts) {
    counts.validate();
    std::array<double, 4> nw{};
    const double nab_b0 = static_cast<double>(counts.n_ab[0] + counts.n_ab[2]);
    const double nab_b1 = static_cast<double>(counts.n_ab[1] + counts.n_ab[3]);
    for (int a = 0; a < 2; ++a) {
        nw[static_cast<std::size_t>(2 * a)] =
            static_cast<double>(counts.n_ab[2 * a]) +
            0.5 * (static_cast<double>(counts.n_b[0]) - nab_b0);
        nw[static_cast<std::size_t>(2 * a + 1)] =
            static_cast<double>(counts.n_ab[2 * a + 1]) +
            0.5 * (static_cast<double>(counts.n_b[1]) - nab_b1);
    }
    return nw;
}

// Empirical quasiprobability w(a,b) = N_W(a,b)/n_s. A strictly negative
// derived count invalidates the trial; nullopt signals that failure, which
// the caller must record.
inline std::optional<QuasiProb> build_oq_from_counts(const CountTable& counts) {
    const auto nw = derived_w_counts(counts);
    for (double v : nw)
        if (v < 0.0) return std::nullopt;
    QuasiProb q;
    for (std::size_t i = 0; i < 4; ++i) q.w[i] = nw[i] / static_cast<double>(counts.n_s);
    return q;
}

// Sum (|w| - w)/2: zero iff the table is a genuine probability.
inline double negativity(const QuasiProb& q) {
    double n = 0.0;
    for (double v : q.w) n += (std::abs(v) - v) / 2.0;
    return n;
}

// max_b |p(b|B) - p(b|AB)|: the no-signaling-in-time violation; zero iff the
// prediction for B is context-free.
inline double nsit_violation(const OutcomeDist& single, const JointDist& joint) {
    single.validate();
    joint.validate();
    double m = 0.0;
    for (int b = 0; b < 2; ++b) m = std::max(m, std::abs(single[b] - joint.marginal_b(b)));
    return m;
}

// Forward mixing: convex combination of distributions.
inline std::vector<double> forward_mix(
    const std::vector<std::pair<std::vector<double>, double>>& dists) {
    if (dists.empty()) throw std::invalid_argument("forward_mix: no distributions");
    double wsum = 0.0;
    for (const auto& [d, w] : dists) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-12)
        throw std::invalid_argument("forward_mix: weights must sum to 1");
    std::vector<double> out(dists.front().first.size(), 0.0);
    for (const auto& [d, w] : dists) {
        if (d.size() != out.size())
            throw std::invalid_argument("forward_mix: length mismatch");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * d[i];
    }
    return out;
}

// Backward mixing: recover the remaining component of a two-part mixture,
// p(x|A) = p(x|C)/p(A) - p(x|B) p(B)/p(A). Output is signed, normalized to 1.
inline std::vector<double> backward_mix(const std::vector<double>& p_c,
                                        const std::vector<double>& p_b, double pa_weight,
                                        double pb_weight) {
    if (pa_weight <= 0.0) throw std::invalid_argument("backward_mix: p(A) must be positive");
    if (p_c.size() != p_b.size()) throw std::invalid_argument("backward_mix: length mismatch");
    std::vector<double> out(p_c.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = p_c[i] / pa_weight - p_b[i] * pb_weight / pa_weight;
    return out;
}

} // namespace coqm
