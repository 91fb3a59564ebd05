#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace netpred {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ============================================================================
// Errors
// ============================================================================

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct PreconditionError : std::logic_error {
    using std::logic_error::logic_error;
};

struct OrderingError : std::logic_error {
    using std::logic_error::logic_error;
};

struct ConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline bool all_finite(const Matrix& M) { return M.allFinite(); }

inline void require(bool cond, std::string_view what) {
    if (!cond) throw DomainError(std::string(what));
}

} // namespace detail

// ============================================================================
// Plant and gain
// ============================================================================

/// Linear time-invariant plant x' = A x + B u.
class LtiPlant {
public:
    LtiPlant(Matrix A, Matrix B) : A_(std::move(A)), B_(std::move(B)) {
        if (A_.rows() < 1 || A_.rows() != A_.cols())
            throw DimensionError("LtiPlant: A must be square with n >= 1");
        if (B_.rows() != A_.rows() || B_.cols() < 1)
            throw DimensionError("LtiPlant: B must have n rows and m >= 1 columns");
        if (!detail::all_finite(A_) || !detail::all_finite(B_))
            throw DomainError("LtiPlant: non-finite entry");
    }

    [[nodiscard]] const Matrix& A() const noexcept { return A_; }
    [[nodiscard]] const Matrix& B() const noexcept { return B_; }
    [[nodiscard]] Eigen::Index n() const noexcept { return A_.rows(); }
    [[nodiscard]] Eigen::Index m() const noexcept { return B_.cols(); }

private:
    Matrix A_;
    Matrix B_;
};

/// State-feedback gain u = K x, K is m x n.
class Gain {
public:
    explicit Gain(Matrix K) : K_(std::move(K)) {
        if (K_.rows() < 1 || K_.cols() < 1) throw DimensionError("Gain: empty K");
        if (!detail::all_finite(K_)) throw DomainError("Gain: non-finite entry");
    }
    Gain(Matrix K, const LtiPlant& plant) : Gain(std::move(K)) { check(plant); }

    void check(const LtiPlant& plant) const {
        if (K_.rows() != plant.m() || K_.cols() != plant.n())
            throw DimensionError("Gain: K must be m x n for the plant");
    }

    [[nodiscard]] const Matrix& K() const noexcept { return K_; }

    static Gain zero(const LtiPlant& plant) { return Gain(Matrix::Zero(plant.m(), plant.n())); }

private:
    Matrix K_;
};

// ============================================================================
// Delays
// ============================================================================

struct DelayBounds {
    double tau_bar;   // h + eta_max
    double tau_max;   // r0 + r1 + h + eta_max + mu_max
    double tau_tilde; // h + mu_max
};

/// Known transport delays r0 (sensor->controller) and r1 (controller->actuator),
/// bounds on their uncertain parts and the maximum sampling interval h.
struct DelayProfile {
    double r0 = 0.0;
    double r1 = 0.0;
    double eta_max = 0.0;
    double mu_max = 0.0;
    double h = 1.0;

    void validate() const {
        if (!(std::isfinite(r0) && std::isfinite(r1) && std::isfinite(eta_max) && std::isfinite(mu_max) &&
              std::isfinite(h)))
            throw DomainError("DelayProfile: non-finite field");
        if (r0 < 0 || r1 < 0 || eta_max < 0 || mu_max < 0)
            throw DomainError("DelayProfile: delays and bounds must be nonnegative");
        if (!(h > 0)) throw DomainError("DelayProfile: h must be positive");
    }
};

[[nodiscard]] inline DelayBounds derived_bounds(const DelayProfile& p) {
    p.validate();
    return {p.h + p.eta_max, p.r0 + p.r1 + p.h + p.eta_max + p.mu_max, p.h + p.mu_max};
}

/// tau_bar = h + eta_max <= r0 + r1; required by the sampled-measurement certificates.
[[nodiscard]] inline bool validate_assumption(const DelayProfile& p) {
    p.validate();
    return p.h + p.eta_max <= p.r0 + p.r1;
}

// ============================================================================
// Event triggering
// ============================================================================

inline constexpr double kPsdRelTol = 1e-12;

[[nodiscard]] inline bool is_symmetric(const Matrix& M, double tol = 0.0) {
    if (M.rows() != M.cols()) return false;
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, M.cwiseAbs().maxCoeff());
}

/// min eigenvalue >= -1e-12 * spectral norm
[[nodiscard]] inline bool is_psd(const Matrix& M) {
    if (!is_symmetric(M, 1e-14)) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double norm = ev.cwiseAbs().maxCoeff();
    return ev.minCoeff() >= -kPsdRelTol * norm;
}

[[nodiscard]] inline bool is_positive_definite(const Matrix& M) {
    if (!is_symmetric(M, 1e-14)) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > 0.0;
}

/// Weight Omega (m x m, PSD), relative threshold sigma in [0,1) and the
/// waiting time used by the switching trigger (equal to h in sampled scenarios).
///
/// The trigger rule itself only needs Omega >= 0. The "no triggering" regime
/// (sigma = 0) additionally needs Omega > 0 so that every change is sent;
/// `omega_positive_definite()` reports which of the two holds.
class TriggerParams {
public:
    TriggerParams(Matrix omega, double sigma, double wait) : omega_(std::move(omega)), sigma_(sigma), wait_(wait) {
        if (omega_.rows() < 1 || omega_.rows() != omega_.cols())
            throw DimensionError("TriggerParams: omega must be square");
        if (!is_psd(omega_)) throw DomainError("TriggerParams: omega must be symmetric positive semidefinite");
        if (!(sigma_ >= 0.0 && sigma_ < 1.0)) throw DomainError("TriggerParams: sigma must lie in [0,1)");
        if (!(wait_ > 0.0) || !std::isfinite(wait_)) throw DomainError("TriggerParams: wait must be positive");
    }

    /// sigma = 0 with Omega = I: every computed control value is sent.
    static TriggerParams periodic(Eigen::Index m, double wait) {
        return TriggerParams(Matrix::Identity(m, m), 0.0, wait);
    }

    [[nodiscard]] const Matrix& omega() const noexcept { return omega_; }
    [[nodiscard]] double sigma() const noexcept { return sigma_; }
    [[nodiscard]] double wait() const noexcept { return wait_; }
    [[nodiscard]] bool omega_positive_definite() const { return is_positive_definite(omega_); }

private:
    Matrix omega_;
    double sigma_;
    double wait_;
};

// ============================================================================
// Scenarios
// ============================================================================

enum class Scenario { SampledPredictor, SampledEventTriggered, ContinuousPredictor, SwitchingEventTriggered };

[[nodiscard]] inline std::string_view to_string(Scenario s) {
    switch (s) {
    case Scenario::SampledPredictor: return "sampled_predictor";
    case Scenario::SampledEventTriggered: return "sampled_event_triggered";
    case Scenario::ContinuousPredictor: return "continuous_predictor";
    case Scenario::SwitchingEventTriggered: return "switching_event_triggered";
    }
    return "?";
}

[[nodiscard]] inline Scenario scenario_from_string(std::string_view s) {
    if (s == "sampled_predictor") return Scenario::SampledPredictor;
    if (s == "sampled_event_triggered") return Scenario::SampledEventTriggered;
    if (s == "continuous_predictor") return Scenario::ContinuousPredictor;
    if (s == "switching_event_triggered") return Scenario::SwitchingEventTriggered;
    throw DomainError("unknown scenario '" + std::string(s) + "'");
}

[[nodiscard]] inline bool is_continuous(Scenario s) {
    return s == Scenario::ContinuousPredictor || s == Scenario::SwitchingEventTriggered;
}

/// Continuous-measurement scenarios have no sensor network: r0 = eta_max = 0.
inline void check_scenario(Scenario s, const DelayProfile& p) {
    p.validate();
    if (is_continuous(s) && (p.r0 != 0.0 || p.eta_max != 0.0))
        throw PreconditionError(std::string(to_string(s)) + " requires r0 = eta_max = 0");
}

// ============================================================================
// Event timeline
// ============================================================================

/// Realized sampling instants s_k, delays eta_k / mu_k, controller update
/// times xi_k and actuator update times t_k (all clamped nondecreasing).
struct EventTimeline {
    std::vector<double> s;
    std::vector<double> eta;
    std::vector<double> mu;
    std::vector<double> xi;
    std::vector<double> t;

    [[nodiscard]] std::size_t size() const noexcept { return xi.size(); }

    /// Checks the five ordering/causality invariants. Returns an empty string
    /// on success, else a description of the first violation.
    [[nodiscard]] std::string check(const DelayProfile& p, double tol = 1e-12) const {
        const std::size_t N = size();
        if (s.size() != N || eta.size() != N || mu.size() != N || t.size() != N) return "length mismatch";
        for (std::size_t k = 0; k < N; ++k) {
            if (eta[k] < -tol || eta[k] > p.eta_max + tol) return "eta out of range at k=" + std::to_string(k);
            if (mu[k] < -tol || mu[k] > p.mu_max + tol) return "mu out of range at k=" + std::to_string(k);
            if (xi[k] < s[k] + p.r0 - tol) return "xi < s + r0 at k=" + std::to_string(k);
            if (t[k] < xi[k] + p.r1 - tol) return "t < xi + r1 at k=" + std::to_string(k);
            if (k > 0) {
                if (s[k] - s[k - 1] > p.h + tol || s[k] <= s[k - 1])
                    return "sampling interval violated at k=" + std::to_string(k);
                if (xi[k] < xi[k - 1]) return "xi decreasing at k=" + std::to_string(k);
                if (t[k] < t[k - 1]) return "t decreasing at k=" + std::to_string(k);
            }
        }
        return {};
    }
};

} // namespace netpred
