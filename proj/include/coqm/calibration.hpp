#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "coqm/qubit.hpp"
#include "coqm/rng.hpp"

namespace coqm {

enum class MeasSel { A, B };

// Twelve-parameter systematic-error model: linear drift of the prepared
// state angles plus a biased/unsharp measurement pair with shifted axes.
// Angles in radians.
struct ErrorModelParams {
    double theta0 = 0.0;  // additive drift of the state polar angle
    double phi0 = 0.0;    // additive drift of the state azimuth
    double theta1 = 1.0;  // polar scaling
    double phi1 = 1.0;    // azimuth scaling
    double x_a = 0.0;     // bias of measurement A
    double mu_a = 1.0;    // sharpness of measurement A
    double theta_a = 0.0; // polar angle of the A axis
    double phi_a = 0.0;   // azimuth of the A axis
    double x_b = 0.0;
    double mu_b = 1.0;
    double theta_b = kPi / 2; // B axis nominally along x
    double phi_b = 0.0;

    static ErrorModelParams no_error() { return {}; }

    // Exemplary fitted values at n_s = 1e5; the A sharpness is held at
    // 1 - |x_a| so the POVM constraint is satisfiable.
    static ErrorModelParams experiment() {
        ErrorModelParams p;
        p.theta0 = 0.00023;
        p.phi0 = 0.0078;
        p.x_a = -0.0015;
        p.mu_a = 0.9985;
        p.x_b = 0.0016;
        p.mu_b = 0.99;
        return p;
    }

    std::array<double, 12> to_array() const {
        return {theta0, phi0, theta1, phi1, x_a, mu_a, theta_a, phi_a, x_b, mu_b, theta_b, phi_b};
    }

    static ErrorModelParams from_array(const std::array<double, 12>& v) {
        ErrorModelParams p;
        p.theta0 = v[0]; p.phi0 = v[1]; p.theta1 = v[2]; p.phi1 = v[3];
        p.x_a = v[4]; p.mu_a = v[5]; p.theta_a = v[6]; p.phi_a = v[7];
        p.x_b = v[8]; p.mu_b = v[9]; p.theta_b = v[10]; p.phi_b = v[11];
        return p;
    }

    bool feasible(double tol = 1e-12) const {
        auto povm = [tol](double x, double mu) {
            return mu >= -tol && mu <= 1.0 + tol && std::abs(x) <= 1.0 - mu + tol;
        };
        return povm(x_a, mu_a) && povm(x_b, mu_b) && theta1 >= 0.9 - tol &&
               theta1 <= 1.1 + tol && phi1 >= 0.9 - tol && phi1 <= 1.1 + tol;
    }
};

// Project (x, mu) onto {0 <= mu <= 1, |x| <= 1 - mu} and the scaling factors
// onto [0.9, 1.1].
inline ErrorModelParams project_feasible(ErrorModelParams p) {
    auto clamp_pair = [](double& x, double& mu) {
        mu = std::clamp(mu, 0.0, 1.0);
        const double cap = 1.0 - mu;
        if (std::abs(x) > cap) {
            // nearest point on the |x| = 1 - mu boundary in the (x, mu) plane
            const double s = x >= 0 ? 1.0 : -1.0;
            double u = 0.5 * (std::abs(x) + cap); // distance along the x axis
            u = std::clamp(u, 0.0, 1.0);
            x = s * u;
            mu = 1.0 - u;
        }
    };
    clamp_pair(p.x_a, p.mu_a);
    clamp_pair(p.x_b, p.mu_b);
    p.theta1 = std::clamp(p.theta1, 0.9, 1.1);
    p.phi1 = std::clamp(p.phi1, 0.9, 1.1);
    return p;
}

// Model probability of outcome `a` when the state prepared at the
// experimental setting (theta_s, phi_s) is measured by the selected
// drifted/deformed measurement.
inline double model_probability(double theta_s, double phi_s, const ErrorModelParams& t,
                                MeasSel which, int outcome) {
    const double th = t.theta0 + t.theta1 * theta_s;
    const double ph = t.phi0 + t.phi1 * phi_s;
    const double rx = std::sin(th) * std::cos(ph);
    const double ry = std::sin(th) * std::sin(ph);
    const double rz = std::cos(th);
    const double ta = which == MeasSel::A ? t.theta_a : t.theta_b;
    const double pa = which == MeasSel::A ? t.phi_a : t.phi_b;
    const double x = which == MeasSel::A ? t.x_a : t.x_b;
    const double mu = which == MeasSel::A ? t.mu_a : t.mu_b;
    const double rn = rx * std::sin(ta) * std::cos(pa) + ry * std::sin(ta) * std::sin(pa) +
                      rz * std::cos(ta);
    const double p0 = 0.5 * ((1.0 + x) + mu * rn);
    return outcome == 0 ? p0 : 1.0 - p0;
}

// Prior weights over an interior lattice theta_i = i pi/(n_theta+1),
// phi_j = 2 pi j/n_phi, proportional to sin(theta_i).
struct LatticePrior {
    std::vector<double> theta;
    std::vector<double> phi;
    std::vector<double> weight; // row-major (i, j), sums to 1

    double w(std::size_t i, std::size_t j) const { return weight[i * phi.size() + j]; }
};

inline LatticePrior build_lattice_prior(int n_theta, int n_phi) {
    if (n_theta < 2 || n_phi < 1)
        throw std::invalid_argument("build_lattice_prior: need n_theta >= 2, n_phi >= 1");
    LatticePrior lp;
    lp.theta.resize(static_cast<std::size_t>(n_theta));
    lp.phi.resize(static_cast<std::size_t>(n_phi));
    for (int i = 0; i < n_theta; ++i)
        lp.theta[static_cast<std::size_t>(i)] = (i + 1) * kPi / (n_theta + 1);
    for (int j = 0; j < n_phi; ++j)
        lp.phi[static_cast<std::size_t>(j)] = 2.0 * kPi * j / n_phi;
    lp.weight.resize(static_cast<std::size_t>(n_theta) * static_cast<std::size_t>(n_phi));
    double total = 0.0;
    for (int i = 0; i < n_theta; ++i)
        for (int j = 0; j < n_phi; ++j) {
            const double w = std::sin(lp.theta[static_cast<std::size_t>(i)]);
            lp.weight[static_cast<std::size_t>(i * n_phi + j)] = w;
            total += w;
        }
    for (double& w : lp.weight) w /= total;
    return lp;
}

// Empirical outcome frequencies per lattice cell and measurement.
struct FrequencyCell {
    double theta_s = 0.0;
    double phi_s = 0.0;
    MeasSel meas = MeasSel::A;
    double f0 = 0.0;          // frequency of outcome 0
    std::int64_t count = 0;   // total counts behind the frequency
};

struct FrequencyDataset {
    std::vector<FrequencyCell> cells;

    void validate() const {
        for (const auto& c : cells) {
            if (c.f0 < 0.0 || c.f0 > 1.0)
                throw std::invalid_argument("FrequencyDataset: frequency outside [0,1]");
            if (c.count < 1)
                throw std::invalid_argument("FrequencyDataset: count < 1");
        }
    }
};

// Noise-free dataset produced by the model itself on the given lattice.
inline FrequencyDataset synth_dataset(const LatticePrior& lp, const ErrorModelParams& t,
                                      std::int64_t count_per_cell) {
    FrequencyDataset ds;
    for (double th : lp.theta)
        for (double ph : lp.phi)
            for (MeasSel m : {MeasSel::A, MeasSel::B})
                ds.cells.push_back({th, ph, m, model_probability(th, ph, t, m, 0),
                                    count_per_cell});
    return ds;
}

// Binomially sampled dataset from the model.
inline FrequencyDataset sample_dataset(const LatticePrior& lp, const ErrorModelParams& t,
                                       std::int64_t count_per_cell, RngStream rng) {
    FrequencyDataset ds;
    std::uint64_t cell_id = 0;
    for (double th : lp.theta)
        for (double ph : lp.phi)
            for (MeasSel m : {MeasSel::A, MeasSel::B}) {
                RngStream sub = rng.substream(cell_id++);
                const double p0 = model_probability(th, ph, t, m, 0);
                const std::int64_t k = sample_binomial(sub, count_per_cell, p0);
                ds.cells.push_back(
                    {th, ph, m, static_cast<double>(k) / static_cast<double>(count_per_cell),
                     count_per_cell});
            }
    return ds;
}

namespace detail {

// Per-cell prior weights, proportional to sin(theta_s) and normalized per
// measurement block over the dataset's cells.
inline std::vector<double> cell_weights(const FrequencyDataset& ds) {
    std::vector<double> w(ds.cells.size());
    double tot_a = 0.0, tot_b = 0.0;
    for (std::size_t i = 0; i < ds.cells.size(); ++i) {
        w[i] = std::max(std::sin(ds.cells[i].theta_s), 0.0);
        (ds.cells[i].meas == MeasSel::A ? tot_a : tot_b) += w[i];
    }
    for (std::size_t i = 0; i < ds.cells.size(); ++i)
        w[i] /= ds.cells[i].meas == MeasSel::A ? tot_a : tot_b;
    return w;
}

} // namespace detail

// Prior-weighted KL divergence of observed frequencies from the model, summed
// over the A and B blocks. Zero iff the model matches every cell; +inf when a
// model probability vanishes where the data does not.
inline double kl_objective(const FrequencyDataset& ds, const ErrorModelParams& t) {
    ds.validate();
    const auto cw = detail::cell_weights(ds);
    double d = 0.0;
    for (std::size_t i = 0; i < ds.cells.size(); ++i) {
        const auto& c = ds.cells[i];
        const double p0 = model_probability(c.theta_s, c.phi_s, t, c.meas, 0);
        const std::array<double, 2> f{c.f0, 1.0 - c.f0};
        const std::array<double, 2> p{p0, 1.0 - p0};
        for (int a = 0; a < 2; ++a) {
            if (f[static_cast<std::size_t>(a)] <= 0.0) continue; // 0 log 0 := 0
            if (p[static_cast<std::size_t>(a)] <= 0.0)
                return std::numeric_limits<double>::infinity();
            d += cw[i] * f[static_cast<std::size_t>(a)] *
                 std::log(f[static_cast<std::size_t>(a)] / p[static_cast<std::size_t>(a)]);
        }
    }
    return d;
}

struct FitResult {
    ErrorModelParams params;
    double objective = 0.0;
    double projected_gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    // largest parameter distance between multi-start optima whose objectives
    // tie with the best; large values indicate a flat, non-identifiable fit
    double flatness = 0.0;
};

namespace detail {

// Weighted least-squares residuals: near a zero of the KL objective
//   D ~ (1/2) sum w (f - p)^2 / (p(1-p)),
// so Gauss-Newton steps on r_i = sqrt(w_i/(p_i(1-p_i))) (p_i - f_i) minimize
// the same objective with quadratic local convergence.
inline std::vector<double> fit_residuals(const FrequencyDataset& ds,
                                         const std::vector<double>& cw,
                                         const ErrorModelParams& t) {
    std::vector<double> r(ds.cells.size());
    for (std::size_t i = 0; i < ds.cells.size(); ++i) {
        const auto& c = ds.cells[i];
        const double p0 = model_probability(c.theta_s, c.phi_s, t, c.meas, 0);
        const double var = std::max(p0 * (1.0 - p0), 1e-9);
        r[i] = std::sqrt(cw[i] / var) * (p0 - c.f0);
    }
    return r;
}

inline void solve_linear12(std::array<std::array<double, 12>, 12>& m,
                           std::array<double, 12>& rhs) {
    // Gaussian elimination with partial pivoting on the 12x12 normal system.
    for (int col = 0; col < 12; ++col) {
        int best = col;
        for (int rr = col + 1; rr < 12; ++rr)
            if (std::abs(m[static_cast<std::size_t>(rr)][static_cast<std::size_t>(col)]) >
                std::abs(m[static_cast<std::size_t>(best)][static_cast<std::size_t>(col)]))
                best = rr;
        std::swap(m[static_cast<std::size_t>(col)], m[static_cast<std::size_t>(best)]);
        std::swap(rhs[static_cast<std::size_t>(col)], rhs[static_cast<std::size_t>(best)]);
        const double d = m[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
        if (std::abs(d) < 1e-300) continue;
        for (int rr = col + 1; rr < 12; ++rr) {
            const double f =
                m[static_cast<std::size_t>(rr)][static_cast<std::size_t>(col)] / d;
            if (f == 0.0) continue;
            for (int cc = col; cc < 12; ++cc)
                m[static_cast<std::size_t>(rr)][static_cast<std::size_t>(cc)] -=
                    f * m[static_cast<std::size_t>(col)][static_cast<std::size_t>(cc)];
            rhs[static_cast<std::size_t>(rr)] -= f * rhs[static_cast<std::size_t>(col)];
        }
    }
    for (int col = 11; col >= 0; --col) {
        double v = rhs[static_cast<std::size_t>(col)];
        for (int cc = col + 1; cc < 12; ++cc)
            v -= m[static_cast<std::size_t>(col)][static_cast<std::size_t>(cc)] *
                 rhs[static_cast<std::size_t>(cc)];
        const double d = m[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
        rhs[static_cast<std::size_t>(col)] = std::abs(d) < 1e-300 ? 0.0 : v / d;
    }
}

struct SingleFit {
    ErrorModelParams params;
    double objective = 0.0;
    double pg_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline SingleFit fit_single(const FrequencyDataset& ds, const std::vector<double>& cw,
                            ErrorModelParams init, int max_iter) {
    const std::size_t n = ds.cells.size();
    auto eval = [&](const ErrorModelParams& t) { return fit_residuals(ds, cw, t); };
    auto cost_of = [&](const std::vector<double>& r) {
        double c = 0.0;
        for (double v : r) c += v * v;
        return 0.5 * c;
    };

    ErrorModelParams cur = project_feasible(init);
    std::vector<double> r = eval(cur);
    double cost = cost_of(r);
    double lm = 1e-6;
    const double fd = 1e-6;
    SingleFit out;

    std::array<std::vector<double>, 12> jac;
    int it = 0;
    for (; it < max_iter; ++it) {
        // numerically estimated Jacobian (central differences per parameter)
        auto base = cur.to_array();
        for (int k = 0; k < 12; ++k) {
            auto hi = base, lo = base;
            hi[static_cast<std::size_t>(k)] += fd;
            lo[static_cast<std::size_t>(k)] -= fd;
            const auto rh = eval(ErrorModelParams::from_array(hi));
            const auto rl = eval(ErrorModelParams::from_array(lo));
            auto& col = jac[static_cast<std::size_t>(k)];
            col.resize(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = (rh[i] - rl[i]) / (2 * fd);
        }
        std::array<double, 12> grad{};
        for (int k = 0; k < 12; ++k) {
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i) g += jac[static_cast<std::size_t>(k)][i] * r[i];
            grad[static_cast<std::size_t>(k)] = g;
        }
        // projected gradient: zero out components pushing over an active bound
        std::array<double, 12> pg = grad;
        {
            auto arr = cur.to_array();
            auto kill_if = [&](int idx, bool active_low, bool active_high) {
                auto& g = pg[static_cast<std::size_t>(idx)];
                if ((active_low && g > 0) || (active_high && g < 0)) g = 0.0;
            };
            // mu in [0,1], |x| <= 1-mu, scalings in [0.9, 1.1]
            const double capA = 1.0 - arr[5], capB = 1.0 - arr[9];
            kill_if(2, arr[2] <= 0.9 + 1e-12, arr[2] >= 1.1 - 1e-12);
            kill_if(3, arr[3] <= 0.9 + 1e-12, arr[3] >= 1.1 - 1e-12);
            kill_if(5, arr[5] <= 1e-12, arr[5] >= 1.0 - 1e-12);
            kill_if(9, arr[9] <= 1e-12, arr[9] >= 1.0 - 1e-12);
            if (std::abs(std::abs(arr[4]) - capA) <= 1e-12) {
                // on the POVM edge: drop the outward normal component
                const double sx = arr[4] >= 0 ? 1.0 : -1.0;
                const double out_n = (sx * pg[4] + pg[5]) / 2.0;
                if (out_n < 0.0) { pg[4] -= sx * out_n; pg[5] -= out_n; }
            }
            if (std::abs(std::abs(arr[8]) - capB) <= 1e-12) {
                const double sx = arr[8] >= 0 ? 1.0 : -1.0;
                const double out_n = (sx * pg[8] + pg[9]) / 2.0;
                if (out_n < 0.0) { pg[8] -= sx * out_n; pg[9] -= out_n; }
            }
        }
        double pgn = 0.0;
        for (double g : pg) pgn += g * g;
        pgn = std::sqrt(pgn);
        out.pg_norm = pgn;
        if (pgn <= 1e-10 || cost <= 1e-26) {
            out.converged = true;
            break;
        }

        bool accepted = false;
        for (int tries = 0; tries < 25 && !accepted; ++tries) {
            std::array<std::array<double, 12>, 12> normal{};
            for (int a2 = 0; a2 < 12; ++a2)
                for (int b2 = a2; b2 < 12; ++b2) {
                    double v = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        v += jac[static_cast<std::size_t>(a2)][i] *
                             jac[static_cast<std::size_t>(b2)][i];
                    normal[static_cast<std::size_t>(a2)][static_cast<std::size_t>(b2)] = v;
                    normal[static_cast<std::size_t>(b2)][static_cast<std::size_t>(a2)] = v;
                }
            for (int k = 0; k < 12; ++k)
                normal[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] += lm;
            std::array<double, 12> step = grad;
            for (double& v : step) v = -v;
            solve_linear12(normal, step);
            auto trial = cur.to_array();
            for (int k = 0; k < 12; ++k)
                trial[static_cast<std::size_t>(k)] += step[static_cast<std::size_t>(k)];
            const ErrorModelParams cand = project_feasible(ErrorModelParams::from_array(trial));
            const auto rc = eval(cand);
            const double cc = cost_of(rc);
            if (cc < cost) {
                cur = cand;
                r = rc;
                cost = cc;
                lm = std::max(lm * 0.3, 1e-12);
                accepted = true;
            } else {
                lm *= 8.0;
            }
        }
        if (!accepted) break; // stalled; pg_norm already recorded
    }
    out.params = cur;
    out.objective = kl_objective(ds, cur);
    out.iterations = it;
    return out;
}

inline double param_distance(const ErrorModelParams& a, const ErrorModelParams& b) {
    const auto va = a.to_array(), vb = b.to_array();
    double d = 0.0;
    for (std::size_t i = 0; i < 12; ++i) d = std::max(d, std::abs(va[i] - vb[i]));
    return d;
}

} // namespace detail

// Constrained KL minimization by projected Levenberg-Marquardt with
// numerically estimated derivatives and eight perturbed restarts. The
// returned point is gauge-normalized: a global rotation about z leaves every
// model probability invariant (phi0, phi_a, phi_b shift together), so phi_b
// is pinned back to the initial value and phi_a is pinned when the fitted A
// axis sits at the pole, where its azimuth is meaningless.
inline FitResult fit_parameters(const FrequencyDataset& ds, const ErrorModelParams& init,
                                int max_iter = 120) {
    ds.validate();
    if (!init.feasible())
        throw std::invalid_argument("fit_parameters: infeasible initial point");
    const auto cw = detail::cell_weights(ds);

    RngStream rng(0x0c5a11b7);
    std::vector<detail::SingleFit> fits;
    fits.push_back(detail::fit_single(ds, cw, init, max_iter));
    for (int s = 1; s < 8; ++s) {
        RngStream sub = rng.substream(static_cast<std::uint64_t>(s));
        auto arr = init.to_array();
        const std::array<double, 12> scale{0.02, 0.02, 0.02, 0.02, 0.02, 0.02,
                                           0.05, 0.2,  0.02, 0.02, 0.05, 0.2};
        for (std::size_t k = 0; k < 12; ++k)
            arr[k] += scale[k] * (2.0 * sub.next_double() - 1.0);
        fits.push_back(detail::fit_single(
            ds, cw, project_feasible(ErrorModelParams::from_array(arr)), max_iter));
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < fits.size(); ++i)
        if (fits[i].objective < fits[best].objective) best = i;

    FitResult res;
    res.projected_gradient_norm = fits[best].pg_norm;
    res.iterations = fits[best].iterations;
    res.converged = fits[best].converged;

    ErrorModelParams p = fits[best].params;
    // z-rotation gauge: move the fitted phi_b back onto the reference value
    const double delta = p.phi_b - init.phi_b;
    p.phi0 -= delta;
    p.phi_b = init.phi_b;
    if (std::abs(p.theta_a) > 0.02)
        p.phi_a -= delta;
    else
        p.phi_a = init.phi_a;
    res.params = p;
    res.objective = kl_objective(ds, p);

    // flatness: spread of near-optimal restarts in parameter space
    const double tol = std::max(1e-12, 10.0 * std::abs(res.objective));
    for (const auto& f : fits)
        if (f.objective <= fits[best].objective + tol)
            res.flatness = std::max(res.flatness,
                                    detail::param_distance(f.params, fits[best].params));
    return res;
}

} // namespace coqm
