#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "coqm/estimator.hpp"
#include "coqm/simulator.hpp"

using namespace coqm;
using Catch::Approx;

namespace {

std::array<double, 4> exact_weights(const ProbeAngles& p, double n_s) {
    const auto w = analytic_oq(p);
    std::array<double, 4> nw{};
    for (std::size_t k = 0; k < 4; ++k) nw[k] = n_s * w.w[k];
    return nw;
}

double phi_op = 0.15 * kPi;

} // namespace

TEST_CASE("log_likelihood_w") {
    const ProbeAngles op(0.5 * kPi, phi_op);
    const double n_s = 1e5;
    const auto nw = exact_weights(op, n_s);

    SECTION("score vanishes at the generating parameter") {
        const double h = 1e-6;
        const double sc = (log_likelihood_w(nw, n_s, op.theta + h, phi_op, ParamTag::Theta) -
                           log_likelihood_w(nw, n_s, op.theta - h, phi_op, ParamTag::Theta)) /
                          (2 * h);
        CHECK(sc == Approx(0.0).margin(1e-9));
    }

    SECTION("uniform weights put the score zero at theta = pi/2") {
        const std::array<double, 4> uni{n_s / 4, n_s / 4, n_s / 4, n_s / 4};
        const double h = 1e-6;
        const double sc =
            (log_likelihood_w(uni, n_s, kPi / 2 + h, phi_op, ParamTag::Theta) -
             log_likelihood_w(uni, n_s, kPi / 2 - h, phi_op, ParamTag::Theta)) /
            (2 * h);
        CHECK(sc == Approx(0.0).margin(1e-9));
    }

    SECTION("evaluation outside the positive region throws") {
        CHECK_THROWS_AS(log_likelihood_w(nw, n_s, 0.3 * kPi, 0.0, ParamTag::Theta),
                        PositivityError);
    }

    SECTION("negative weights are rejected") {
        std::array<double, 4> bad = nw;
        bad[3] = -1.0;
        CHECK_THROWS_AS(log_likelihood_w(bad, n_s, op.theta, phi_op, ParamTag::Theta),
                        std::invalid_argument);
    }

    SECTION("count-table overload agrees with the weight form") {
        CountTable c;
        c.n_s = 100000;
        c.n_b = {94550, 5450};
        c.n_ab = {25000, 25000, 25000, 25000};
        const auto w1 = log_likelihood_w(c, 0.5 * kPi, phi_op, ParamTag::Theta);
        const auto w2 = log_likelihood_w(derived_w_counts(c), 1e5, 0.5 * kPi, phi_op,
                                         ParamTag::Theta);
        CHECK(w1 == Approx(w2).epsilon(1e-15));
    }
}

TEST_CASE("positivity_window") {
    const auto win = positivity_window(0.5 * kPi, 1e-6, kPi - 1e-6, phi_op, ParamTag::Theta);
    REQUIRE(win.has_value());
    CHECK(win->first == Approx(0.46335 * kPi).margin(1e-3));
    CHECK(win->second == Approx(0.53665 * kPi).margin(1e-3));
    CHECK_FALSE(positivity_window(0.2 * kPi, 1e-6, kPi - 1e-6, 0.0, ParamTag::Theta)
                    .has_value());
}

TEST_CASE("mle_solve self-consistency on exact frequencies") {
    // 50 (theta, phi) points inside the positive region
    RngStream rng(31);
    int tested = 0;
    while (tested < 50) {
        const double ph = rng.uniform(0.0, 2 * kPi);
        const double th = rng.uniform(0.35 * kPi, 0.65 * kPi);
        const ProbeAngles p(th, ph);
        if (analytic_oq(p).min_entry() < 1e-3) continue;
        ++tested;
        const auto nw = exact_weights(p, 1e5);
        const auto res =
            mle_solve_weights(nw, 1e5, {1e-6, kPi - 1e-6}, ph, ParamTag::Theta);
        REQUIRE_FALSE(res.failed);
        REQUIRE(res.estimate.has_value());
        CHECK(*res.estimate == Approx(th).margin(1e-9));
    }
}

TEST_CASE("mle_solve failure paths") {
    SECTION("negative derived count") {
        CountTable c;
        c.n_s = 10000;
        c.n_ab = {5000, 2000, 2900, 100};
        c.n_b = {9990, 10};
        const auto res = mle_solve(c, {1e-6, kPi - 1e-6}, phi_op, ParamTag::Theta);
        CHECK(res.failed);
        CHECK(res.reason == FailureReason::NegativeCount);
        CHECK_FALSE(res.estimate.has_value());
    }

    SECTION("no interior root when the data pulls outside the window") {
        // weights matching a probe far outside the positive window at phi=0.1pi
        std::array<double, 4> nw{0.40 * 1e4, 0.35 * 1e4, 0.15 * 1e4, 0.10 * 1e4};
        const auto res =
            mle_solve_weights(nw, 1e4, {1e-6, kPi - 1e-6}, 0.1 * kPi, ParamTag::Theta);
        CHECK(res.failed);
        CHECK((res.reason == FailureReason::NoRoot || res.reason == FailureReason::Boundary));
    }

    SECTION("midpoint guess outside the positive region") {
        const auto res = mle_solve_weights({1, 1, 1, 1}, 4, {1e-6, 0.2 * kPi}, 0.0,
                                           ParamTag::Theta);
        CHECK(res.failed);
        CHECK(res.reason == FailureReason::Boundary);
    }
}

TEST_CASE("estimate_error and error_hat") {
    EstimationResult r;
    r.f_observed = contextual_fi(ProbeAngles(0.5 * kPi, phi_op), ParamTag::Theta);
    CHECK(estimate_error(r, 1e5) == Approx(1.4356e-3).margin(2e-6));
    r.f_observed = 1.0;
    CHECK(estimate_error(r, 2e5) == Approx(2.2361e-3).margin(1e-6));
    r.f_observed = 0.0;
    CHECK(std::isinf(estimate_error(r, 1e5)));
}

TEST_CASE("observed information at the estimate tracks the contextual information") {
    const ProbeAngles op(0.5 * kPi, phi_op);
    const auto nw = exact_weights(op, 1e6);
    const auto res = mle_solve_weights(nw, 1e6, {1e-6, kPi - 1e-6}, phi_op, ParamTag::Theta);
    REQUIRE_FALSE(res.failed);
    CHECK(res.f_observed == Approx(contextual_fi(op, ParamTag::Theta)).margin(1e-4));
}

TEST_CASE("virtual-ensemble sampling: unbiasedness, efficiency and normality") {
    const ProbeAngles op(0.5 * kPi, phi_op);
    const double n_s = 1e5;
    const double fco = contextual_fi(op, ParamTag::Theta);
    const auto w = analytic_oq(op);
    const int trials = 500;

    std::vector<double> est;
    RngStream rng(2024);
    for (int t = 0; t < trials; ++t) {
        const auto nw = sample_virtual_w(w, static_cast<std::int64_t>(n_s),
                                         rng.substream(static_cast<std::uint64_t>(t)));
        const auto res =
            mle_solve_weights(nw, n_s, {1e-6, kPi - 1e-6}, phi_op, ParamTag::Theta);
        REQUIRE_FALSE(res.failed);
        est.push_back(*res.estimate);
    }
    const double mean = std::accumulate(est.begin(), est.end(), 0.0) / trials;
    double var = 0.0;
    for (double e : est) var += (e - mean) * (e - mean);
    var /= trials - 1;
    const double sd = std::sqrt(var);

    // unbiased within three empirical standard errors
    CHECK(std::abs(mean - op.theta) <= 3.0 * sd / std::sqrt(static_cast<double>(trials)));
    // efficient: scatter within 10% of the information bound
    CHECK(sd == Approx(1.0 / std::sqrt(n_s * fco)).epsilon(0.10));
    // standardized variance near one
    const double zvar = n_s * fco * var;
    CHECK(zvar > 0.85);
    CHECK(zvar < 1.15);
}

TEST_CASE("two-context sampling: expected score vanishes at the truth") {
    const ProbeAngles op(0.5 * kPi, phi_op);
    const auto dists = ideal_contexts(op, 1.0);
    const double n_s = 1e4;
    const int trials = 400;
    std::vector<double> scores;
    RngStream rng(77);
    const auto d1 = analytic_oq_d1(op, ParamTag::Theta);
    const auto w = analytic_oq(op);
    for (int t = 0; t < trials; ++t) {
        const auto counts = sample_contexts(dists, static_cast<std::int64_t>(n_s),
                                            rng.substream(static_cast<std::uint64_t>(t)));
        const auto nw = derived_w_counts(counts);
        double sc = 0.0;
        for (std::size_t k = 0; k < 4; ++k) sc += nw[k] * d1[k] / w.w[k];
        scores.push_back(sc / n_s);
    }
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / trials;
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= trials - 1;
    const double se = std::sqrt(var / trials);
    CHECK(std::abs(mean) <= 3.0 * se);
}

TEST_CASE("to_concentration") {
    SECTION("no rotation means zero concentration") {
        const auto r = to_concentration(0.5 * kPi, 0.0, 0.5 * kPi, 34.1, 0.1);
        CHECK(r.c_hat == Approx(0.0).margin(1e-15));
        CHECK_FALSE(r.negative_flagged);
    }

    SECTION("3.41 degrees of rotation is 1 g/ml at the reference constants") {
        const double rot = 3.41 * kPi / 180.0;
        const auto r = to_concentration(0.5 * kPi + rot, 0.0, 0.5 * kPi, 34.1, 0.1);
        CHECK(r.c_hat == Approx(1.0).epsilon(1e-12));
    }

    SECTION("error conversion chain") {
        const auto r = to_concentration(0.5 * kPi, 2.236e-3, 0.5 * kPi, 34.1, 0.1);
        CHECK(r.dc_hat == Approx(3.757e-2).margin(1e-4));
    }

    SECTION("negative concentration is flagged, not rejected") {
        const auto r = to_concentration(0.5 * kPi - 0.01, 1e-3, 0.5 * kPi, 34.1, 0.1);
        CHECK(r.negative_flagged);
    }

    SECTION("invalid constants are rejected") {
        CHECK_THROWS_AS(to_concentration(1.0, 0.0, 1.0, -1.0, 0.1), std::invalid_argument);
        CHECK_THROWS_AS(to_concentration(1.0, 0.0, 1.0, 34.1, 0.0), std::invalid_argument);
    }
}
