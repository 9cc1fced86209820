#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace coqm {

inline constexpr double kPi = std::numbers::pi;

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Probe-state angles: |psi> = cos(theta/2)|H> + e^{i phi} sin(theta/2)|V>.
// theta in [0, pi], phi normalized into [0, 2 pi).
struct ProbeAngles {
    double theta = 0.0;
    double phi = 0.0;

    ProbeAngles() = default;
    ProbeAngles(double theta_, double phi_) : theta(theta_), phi(phi_) {
        if (!(theta >= -1e-12 && theta <= kPi + 1e-12))
            throw std::invalid_argument("ProbeAngles: theta outside [0, pi]");
        theta = std::clamp(theta, 0.0, kPi);
        phi = std::fmod(phi, 2 * kPi);
        if (phi < 0) phi += 2 * kPi;
    }
};

// A qubit state as its Bloch vector, |r| <= 1.
struct BlochState {
    Vec3 r{0.0, 0.0, 0.0};

    BlochState() = default;
    explicit BlochState(const Vec3& r_) : r(r_) {
        if (norm(r) > 1.0 + 1e-12)
            throw std::invalid_argument("BlochState: |r| > 1");
    }

    bool is_pure(double tol = 1e-12) const { return std::abs(norm(r) - 1.0) <= tol; }
};

// Two-outcome measurement with unit axis, unsharpness mu in [0,1] and bias x;
// POVM validity requires |x| <= 1 - mu. mu = 1, x = 0 is a sharp projective pair.
struct BinaryMeasurement {
    Vec3 axis{0.0, 0.0, 1.0};
    double mu = 1.0;
    double x = 0.0;

    BinaryMeasurement() = default;
    BinaryMeasurement(const Vec3& axis_, double mu_ = 1.0, double x_ = 0.0)
        : axis(axis_), mu(mu_), x(x_) {
        const double n = norm(axis);
        if (std::abs(n - 1.0) > 1e-12)
            throw std::invalid_argument("BinaryMeasurement: |axis| != 1");
        if (mu < 0.0 || mu > 1.0)
            throw std::invalid_argument("BinaryMeasurement: mu outside [0,1]");
        if (std::abs(x) > 1.0 - mu + 1e-12)
            throw std::invalid_argument("BinaryMeasurement: |x| > 1 - mu");
    }

    bool sharp(double tol = 1e-12) const { return mu >= 1.0 - tol && std::abs(x) <= tol; }

    static BinaryMeasurement sharp_z() { return BinaryMeasurement{{0, 0, 1}}; }
    static BinaryMeasurement sharp_x() { return BinaryMeasurement{{1, 0, 0}}; }

    static BinaryMeasurement from_angles(double theta_ax, double phi_ax, double mu = 1.0,
                                         double x = 0.0) {
        return BinaryMeasurement{{std::sin(theta_ax) * std::cos(phi_ax),
                                  std::sin(theta_ax) * std::sin(phi_ax), std::cos(theta_ax)},
                                 mu, x};
    }
};

// Preparation wave plates: QWP(q1), HWP(p), QWP(q2 = pi/4 fixed).
struct WavePlateStack {
    double q1 = 0.0;
    double p = kPi / 8;
    double q2 = kPi / 4;
};

inline BlochState bloch_from_angles(const ProbeAngles& a) {
    const double s = std::sin(a.theta);
    BlochState st;
    st.r = {s * std::cos(a.phi), s * std::sin(a.phi), std::cos(a.theta)};
    return st;
}

// Wave-plate control relations: theta = pi/2 - 2 q1, phi = 4 p - 2 q1 - pi/2.
inline ProbeAngles prepare_with_waveplates(const WavePlateStack& stack) {
    if (std::abs(stack.q2 - kPi / 4) > 1e-12)
        throw std::invalid_argument("prepare_with_waveplates: q2 must be pi/4");
    double theta = kPi / 2 - 2 * stack.q1;
    double phi = 4 * stack.p - 2 * stack.q1 - kPi / 2;
    // canonical ranges: fold theta into [0, pi], shifting phi at a sign flip
    theta = std::fmod(theta, 2 * kPi);
    if (theta < 0) theta += 2 * kPi;
    if (theta > kPi) {
        theta = 2 * kPi - theta;
        phi += kPi;
    }
    return ProbeAngles(theta, phi);
}

// p(a) = ( [1 + (-1)^a x] + (-1)^a mu r.axis ) / 2; outcomes sum to 1 exactly.
inline double born_probability(const BlochState& state, const BinaryMeasurement& m,
                               int outcome) {
    const double p0 = 0.5 * ((1.0 + m.x) + m.mu * dot(state.r, m.axis));
    return outcome == 0 ? p0 : 1.0 - p0;
}

// Length-2 probability vector over the outcome b of a single measurement.
struct OutcomeDist {
    std::array<double, 2> p{0.5, 0.5};

    OutcomeDist() = default;
    explicit OutcomeDist(const std::array<double, 2>& p_) : p(p_) { validate(); }

    double operator[](int b) const { return p[static_cast<std::size_t>(b)]; }

    void validate() const {
        if (p[0] < -1e-12 || p[1] < -1e-12 || std::abs(p[0] + p[1] - 1.0) > 1e-12)
            throw std::invalid_argument("OutcomeDist: not a normalized distribution");
    }
};

// 2x2 probability table over (a, b), row-major with a, b in {0, 1}.
struct JointDist {
    std::array<double, 4> p{0.25, 0.25, 0.25, 0.25};

    JointDist() = default;
    explicit JointDist(const std::array<double, 4>& p_) : p(p_) { validate(); }

    double operator()(int a, int b) const { return p[static_cast<std::size_t>(2 * a + b)]; }

    double marginal_b(int b) const { return (*this)(0, b) + (*this)(1, b); }
    double marginal_a(int a) const { return (*this)(a, 0) + (*this)(a, 1); }

    void validate() const {
        double sum = 0.0;
        for (double v : p) {
            if (v < -1e-12) throw std::invalid_argument("JointDist: negative entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw std::invalid_argument("JointDist: not normalized");
    }
};

// State update for a consecutive measurement. The sharp case collapses onto
// the outcome eigenstate; the square-root rule extends this to unsharp
// measurements and must be enabled explicitly.
enum class StateUpdateRule { ProjectiveOnly, SquareRoot };

inline BlochState post_measurement_state(const BlochState& state, const BinaryMeasurement& m,
                                         int outcome, StateUpdateRule rule) {
    const double sign = outcome == 0 ? 1.0 : -1.0;
    if (m.sharp()) {
        return BlochState{{sign * m.axis[0], sign * m.axis[1], sign * m.axis[2]}};
    }
    if (rule != StateUpdateRule::SquareRoot)
        throw std::invalid_argument(
            "consecutive measurement with unsharp first measurement requires the "
            "square-root update rule");
    // sqrt(M) rho sqrt(M) with M = alpha I + beta n.sigma,
    // sqrt(M) = s I + t n.sigma, s,t from the eigenvalues alpha +- beta.
    const double alpha = 0.5 * (1.0 + sign * m.x);
    const double beta = 0.5 * sign * m.mu;
    const double ep = alpha + beta, em = alpha - beta;
    if (ep < -1e-14 || em < -1e-14)
        throw std::invalid_argument("post_measurement_state: measurement not a POVM");
    const double s = 0.5 * (std::sqrt(std::max(ep, 0.0)) + std::sqrt(std::max(em, 0.0)));
    const double t = 0.5 * (std::sqrt(std::max(ep, 0.0)) - std::sqrt(std::max(em, 0.0)));
    const double rn = dot(state.r, m.axis);
    const double w = s * s + t * t + 2 * s * t * rn;
    const double cr = s * s - t * t;
    const double cn = 2 * t * (s + t * rn);
    BlochState out;
    for (int i = 0; i < 3; ++i) out.r[i] = (cr * state.r[i] + cn * m.axis[i]) / w;
    return out;
}

// Statistics of measuring B alone: p(b|B).
inline OutcomeDist single_context_dist(const BlochState& state, const BinaryMeasurement& B) {
    const double p0 = born_probability(state, B, 0);
    OutcomeDist d;
    d.p = {p0, 1.0 - p0};
    return d;
}

// Statistics of the consecutive measurement, A first and B second: p(a,b|AB).
// A must be sharp unless the square-root update rule is enabled.
inline JointDist consecutive_context_dist(const BlochState& state, const BinaryMeasurement& A,
                                          const BinaryMeasurement& B,
                                          StateUpdateRule rule = StateUpdateRule::ProjectiveOnly) {
    JointDist out;
    for (int a = 0; a < 2; ++a) {
        const double pa = born_probability(state, A, a);
        const BlochState post = post_measurement_state(state, A, a, rule);
        const double pb0 = born_probability(post, B, 0);
        out.p[static_cast<std::size_t>(2 * a)] = pa * pb0;
        out.p[static_cast<std::size_t>(2 * a + 1)] = pa * (1.0 - pb0);
    }
    return out;
}

// Bloch contraction of the Pauli-twirl depolarizing mixture; purity
// lambda in [0.25, 1], lambda = 1 identity, lambda = 0.25 fully mixed.
inline BlochState depolarize(const BlochState& state, double lambda) {
    if (lambda < 0.25 - 1e-12 || lambda > 1.0 + 1e-12)
        throw std::invalid_argument("depolarize: lambda outside [0.25, 1]");
    const double k = (4.0 * lambda - 1.0) / 3.0;
    return BlochState{{k * state.r[0], k * state.r[1], k * state.r[2]}};
}

// The three Pauli-conjugated states sigma_i rho sigma_i, i = x, y, z.
inline std::array<BlochState, 3> pauli_conjugated(const BlochState& s) {
    const auto& r = s.r;
    return {BlochState{{r[0], -r[1], -r[2]}}, BlochState{{-r[0], r[1], -r[2]}},
            BlochState{{-r[0], -r[1], r[2]}}};
}

// Convex mixture lambda P0 + (1-lambda)/3 (Px + Py + Pz); equal to measuring
// the depolarized state directly.
inline JointDist mix_depolarized_probabilities(const JointDist& p0, const JointDist& px,
                                               const JointDist& py, const JointDist& pz,
                                               double lambda) {
    if (lambda < 0.25 - 1e-12 || lambda > 1.0 + 1e-12)
        throw std::invalid_argument("mix_depolarized_probabilities: lambda outside [0.25, 1]");
    p0.validate();
    px.validate();
    py.validate();
    pz.validate();
    const double c = (1.0 - lambda) / 3.0;
    JointDist out;
    for (std::size_t i = 0; i < 4; ++i)
        out.p[i] = lambda * p0.p[i] + c * (px.p[i] + py.p[i] + pz.p[i]);
    return out;
}

} // namespace coqm
