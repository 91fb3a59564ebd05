#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "netpred/matexp.hpp"
#include "netpred/model.hpp"

namespace netpred {

struct TimedVector {
    double t;
    Vector v;
};

/// Cubic Lagrange interpolation on a sorted, timestamped sample sequence
/// (4-point stencil around theta, linear when fewer samples exist). theta
/// must lie within [front().t, back().t].
template <class Seq>
[[nodiscard]] Vector interpolate_samples(const Seq& s, double theta) {
    auto it = std::upper_bound(s.begin(), s.end(), theta, [](double x, const TimedVector& p) { return x < p.t; });
    if (it == s.begin()) return s.front().v;
    if (it == s.end()) return s.back().v;
    const auto N = static_cast<std::ptrdiff_t>(s.size());
    const std::ptrdiff_t hi = it - s.begin();
    if (N < 4) {
        const auto& a = s[static_cast<std::size_t>(hi - 1)];
        const auto& b = s[static_cast<std::size_t>(hi)];
        const double w = (theta - a.t) / (b.t - a.t);
        return (1.0 - w) * a.v + w * b.v;
    }
    const std::ptrdiff_t first = std::clamp<std::ptrdiff_t>(hi - 2, 0, N - 4);
    Vector out = Vector::Zero(s.front().v.size());
    for (std::ptrdiff_t i = first; i < first + 4; ++i) {
        double w = 1.0;
        const double ti = s[static_cast<std::size_t>(i)].t;
        for (std::ptrdiff_t j = first; j < first + 4; ++j)
            if (j != i) w *= (theta - s[static_cast<std::size_t>(j)].t) / (ti - s[static_cast<std::size_t>(j)].t);
        out += w * s[static_cast<std::size_t>(i)].v;
    }
    return out;
}

// ============================================================================
// Piecewise-constant control history v(.)
// ============================================================================

/// v(theta) = value of the last segment whose start is <= theta, 0 before the
/// first segment. Segments are left-closed: [xi_k, xi_{k+1}).
class ControlHistory {
public:
    struct Segment {
        double start;
        Vector value;
    };

    ControlHistory() = default;
    explicit ControlHistory(Eigen::Index m) : m_(m) {}

    void append(double xi, Vector value) {
        if (!std::isfinite(xi)) throw DomainError("ControlHistory: non-finite start time");
        if (!segments_.empty() && xi < segments_.back().start)
            throw OrderingError("ControlHistory: start times must be nondecreasing");
        if (m_ == 0) m_ = value.size();
        if (value.size() != m_) throw DimensionError("ControlHistory: value has wrong dimension");
        segments_.push_back({xi, std::move(value)});
    }

    [[nodiscard]] Vector lookup(double theta) const {
        auto it = std::upper_bound(segments_.begin(), segments_.end(), theta,
                                   [](double x, const Segment& s) { return x < s.start; });
        if (it == segments_.begin()) return Vector::Zero(m_);
        return std::prev(it)->value;
    }

    [[nodiscard]] const std::vector<Segment>& segments() const noexcept { return segments_; }
    [[nodiscard]] bool empty() const noexcept { return segments_.empty(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return m_; }

    /// Values at times < known_until() are final. Appends after this point may
    /// still change v, so predictions must not read beyond it.
    [[nodiscard]] double known_until() const noexcept { return known_until_; }
    void set_known_until(double t) noexcept { known_until_ = t; }

    /// Maximal constant pieces of v on [lo, hi).
    [[nodiscard]] std::vector<std::pair<std::pair<double, double>, Vector>> panels(double lo, double hi) const {
        std::vector<std::pair<std::pair<double, double>, Vector>> out;
        if (!(lo < hi)) return out;
        double left = lo;
        Vector value = lookup(lo);
        auto it = std::upper_bound(segments_.begin(), segments_.end(), lo,
                                   [](double x, const Segment& s) { return x < s.start; });
        for (; it != segments_.end() && it->start < hi; ++it) {
            // later entries with the same start overwrite earlier ones
            if (it->start > left) {
                out.push_back({{left, it->start}, value});
                left = it->start;
            }
            value = it->value;
        }
        out.push_back({{left, hi}, value});
        return out;
    }

private:
    std::vector<Segment> segments_;
    Eigen::Index m_ = 0;
    double known_until_ = std::numeric_limits<double>::infinity();
};

[[nodiscard]] inline ControlHistory append_control(ControlHistory history, double xi, Vector value) {
    history.append(xi, std::move(value));
    return history;
}

// ============================================================================
// Sampled predictor
// ============================================================================

/// z(s_k) = e^{A(r0+r1)} x(s_k) + int_{s_k-r1}^{s_k+r0} e^{A(s_k+r0-theta)} B v(theta) dtheta,
/// with the window split exactly at the segment boundaries of v.
[[nodiscard]] inline Vector predict_state_sampled(const LtiPlant& plant, const DelayProfile& profile,
                                                  const Vector& x_sk, double s_k, double eta_k,
                                                  const ControlHistory& history) {
    profile.validate();
    if (x_sk.size() != plant.n()) throw DimensionError("predict_sampled: state has wrong dimension");
    if (!(eta_k >= 0.0 && eta_k <= profile.eta_max))
        throw DomainError("predict_sampled: eta_k outside [0, eta_max]");
    if (!history.empty() && history.dim() != plant.m())
        throw DimensionError("predict_sampled: history dimension does not match plant input");

    const double xi_k = s_k + profile.r0 + eta_k;
    const double hi = xi_k - eta_k; // = s_k + r0
    const double lo = hi - profile.r0 - profile.r1;
    if (hi > history.known_until())
        throw ConsistencyError("predict_sampled: integration window extends past the committed history");

    Vector z = expm(plant.A(), profile.r0 + profile.r1) * x_sk;
    for (const auto& [span, v] : history.panels(lo, hi)) {
        if (v.isZero(0.0)) continue;
        z.noalias() += input_integral(plant, span.first, span.second, hi) * v;
    }
    return z;
}

[[nodiscard]] inline Vector predict_sampled(const LtiPlant& plant, const Gain& gain, const DelayProfile& profile,
                                            const Vector& x_sk, double s_k, double eta_k,
                                            const ControlHistory& history) {
    gain.check(plant);
    return gain.K() * predict_state_sampled(plant, profile, x_sk, s_k, eta_k, history);
}

// ============================================================================
// Continuous predictor ODE
// ============================================================================

/// Precomputed matrices of
///   z'(t) = (A+BK) z(t) + e^{A r1} B K [z(xi_k) - z(t - r1)]
/// (the bracket reads -z(t - r1) before the first actuator update).
struct PredictorDynamics {
    Matrix Acl;
    Matrix EBK;
    double r1;

    PredictorDynamics(const LtiPlant& plant, const Gain& gain, double r1_)
        : Acl(plant.A() + plant.B() * gain.K()), EBK(expm(plant.A(), r1_) * plant.B() * gain.K()), r1(r1_) {
        gain.check(plant);
        if (!(r1 >= 0.0)) throw DomainError("PredictorDynamics: r1 must be >= 0");
    }
};

/// z(t) plus the timestamped samples of z needed for the delayed read z(t - r1).
class PredictorState {
public:
    PredictorState(double t0, Vector z0, double r1) : t_(t0), z_(std::move(z0)), r1_(r1) {
        buffer_.push_back({{t_, z_}, {}, {}});
    }

    /// z(0) = e^{A r1} x(0); z(theta) = 0 for theta < 0.
    static PredictorState initial(const LtiPlant& plant, const Vector& x0, double r1) {
        return PredictorState(0.0, expm(plant.A(), r1) * x0, r1);
    }

    [[nodiscard]] double t() const noexcept { return t_; }
    [[nodiscard]] const Vector& z() const noexcept { return z_; }
    /// Buffered samples with one-sided derivatives (dl from the step that
    /// ended there, dr from the step that starts there).
    struct Sample : TimedVector {
        Vector dl;
        Vector dr;
    };

    [[nodiscard]] const std::deque<Sample>& buffer() const noexcept { return buffer_; }

    /// z(theta) for theta <= t(): zero before 0, cubic interpolation in the buffer.
    [[nodiscard]] Vector read(double theta) const {
        if (theta < 0.0) return Vector::Zero(z_.size());
        if (theta >= buffer_.back().t) return buffer_.back().v;
        if (theta <= buffer_.front().t) {
            if (buffer_.front().t > 0.0 && theta < buffer_.front().t)
                throw ConsistencyError("PredictorState: delayed read before the buffered history");
            return buffer_.front().v;
        }
        auto it = std::upper_bound(buffer_.begin(), buffer_.end(), theta,
                                   [](double x, const Sample& s) { return x < s.t; });
        const auto& b = *it;
        const auto& a = *std::prev(it);
        if (a.dr.size() == 0 || b.dl.size() == 0) return interpolate_samples(buffer_, theta);
        // cubic Hermite inside one step, so kinks at step ends are never straddled
        const double H = b.t - a.t;
        const double s = (theta - a.t) / H;
        const double s2 = s * s, s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * a.v + (s3 - 2 * s2 + s) * H * a.dr + (3 * s2 - 2 * s3) * b.v +
               (s3 - s2) * H * b.dl;
    }

    /// v = K z on the buffered grid.
    [[nodiscard]] std::vector<TimedVector> v_history(const Gain& gain) const {
        std::vector<TimedVector> out;
        out.reserve(buffer_.size());
        for (const auto& s : buffer_) out.push_back({s.t, gain.K() * s.v});
        return out;
    }

    /// Replace the current value (the delayed history is kept).
    void reset_current(Vector z) {
        if (z.size() != z_.size()) throw DimensionError("PredictorState: wrong dimension");
        z_ = std::move(z);
        buffer_.back().v = z_;
    }

    void advance(const PredictorDynamics& dyn, const std::optional<Vector>& z_xi, double dt) {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("step_continuous: dt must be positive");
        if (dyn.r1 > 0.0 && dt > dyn.r1 * (1.0 + 1e-12))
            throw DomainError("step_continuous: dt must not exceed r1");
        const Vector latched = z_xi ? *z_xi : Vector::Zero(z_.size());
        // z(theta) jumps at theta = 0: the first stage takes the right limit,
        // the others the left one (within round-off of the jump)
        constexpr double kJumpTol = 1e-12;
        auto rhs = [&](double tau, const Vector& zs, bool right) -> Vector {
            if (dyn.r1 == 0.0) return dyn.Acl * zs + dyn.EBK * (latched - zs);
            const double theta = tau - dyn.r1;
            const bool past = right ? theta > -kJumpTol : theta > kJumpTol;
            const Vector delayed = past ? read(std::max(theta, 0.0)) : Vector::Zero(zs.size());
            return dyn.Acl * zs + dyn.EBK * (latched - delayed);
        };
        const double h = dt;
        const Vector k1 = rhs(t_, z_, true);
        const Vector k2 = rhs(t_ + 0.5 * h, z_ + 0.5 * h * k1, false);
        const Vector k3 = rhs(t_ + 0.5 * h, z_ + 0.5 * h * k2, false);
        const Vector k4 = rhs(t_ + h, z_ + h * k3, false);
        buffer_.back().dr = k1;
        z_ += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t_ += h;
        buffer_.push_back({{t_, z_}, {}, {}});
        buffer_.back().dl = rhs(t_, z_, false);
        buffer_.back().dr = buffer_.back().dl;
        // keep two samples at or before t - r1 for the interpolation stencil
        const double oldest_needed = t_ - dyn.r1;
        while (buffer_.size() > 3 && buffer_[2].t <= oldest_needed) buffer_.pop_front();
    }

private:
    double t_;
    Vector z_;
    double r1_;
    std::deque<Sample> buffer_;
};

/// One classical RK4 step of the continuous predictor ODE. `z_xi` is the
/// latched z(xi_k) while t in [t_k, t_{k+1}); absent before t_0.
[[nodiscard]] inline PredictorState step_continuous(PredictorState state, const LtiPlant& plant, const Gain& gain,
                                                    double r1, const std::optional<Vector>& z_xi, double dt) {
    state.advance(PredictorDynamics(plant, gain, r1), z_xi, dt);
    return state;
}

namespace detail {

/// e^{A r1} x + int_{lo}^{t} e^{A(t-theta)} B v(theta) dtheta by Simpson's
/// rule on every interval between consecutive nodes (nodes span [lo, t]).
template <class ValueAt>
Vector simpson_integral_form(const LtiPlant& plant, const Vector& x, const std::vector<double>& nodes,
                             ValueAt&& value_at, double r1) {
    Vector z = expm(plant.A(), r1) * x;
    std::map<double, Matrix> half_cache;
    auto half_exp = [&](double len) -> const Matrix& {
        auto it = half_cache.find(len);
        if (it == half_cache.end()) it = half_cache.emplace(len, expm(plant.A(), 0.5 * len)).first;
        return it->second;
    };
    Matrix E = Matrix::Identity(plant.n(), plant.n()); // e^{A(t - right end)}
    Vector acc = Vector::Zero(plant.n());
    for (std::size_t i = nodes.size() - 1; i > 0; --i) {
        const double a = nodes[i - 1], b = nodes[i];
        const double len = b - a;
        if (len <= 0.0) continue;
        const Matrix& H = half_exp(len);
        const Matrix Em = E * H;
        const Matrix Ea = Em * H;
        acc += (len / 6.0) * (E * (plant.B() * value_at(b)) + 4.0 * (Em * (plant.B() * value_at(0.5 * (a + b)))) +
                              Ea * (plant.B() * value_at(a)));
        E = Ea;
    }
    return z + acc;
}

} // namespace detail

/// e^{A r1} x + int_{t-r1}^{t} e^{A(t-theta)} B v(theta) dtheta, with v
/// interpolated between its samples (zero before time 0) and Simpson's rule on
/// every sample interval.
[[nodiscard]] inline Vector integral_form(const LtiPlant& plant, const Vector& x, std::span<const TimedVector> v,
                                          double t, double r1) {
    const double lo = std::max(0.0, t - r1);
    if (!(t > lo) || v.size() < 2) return expm(plant.A(), r1) * x;
    std::vector<double> nodes{lo};
    for (const auto& s : v)
        if (s.t > lo && s.t < t) nodes.push_back(s.t);
    nodes.push_back(t);
    return detail::simpson_integral_form(
        plant, x, nodes, [&](double th) { return interpolate_samples(v, th); }, r1);
}

/// Same, with v = K z read from the predictor's own buffer (Hermite
/// interpolation, so the quadrature keeps the integrator's order).
[[nodiscard]] inline Vector integral_form(const LtiPlant& plant, const Gain& gain, const Vector& x,
                                          const PredictorState& state, double r1) {
    const double t = state.t();
    const double lo = std::max(0.0, t - r1);
    if (!(t > lo) || state.buffer().size() < 2) return expm(plant.A(), r1) * x;
    std::vector<double> nodes{lo};
    for (const auto& s : state.buffer())
        if (s.t > lo && s.t < t) nodes.push_back(s.t);
    nodes.push_back(t);
    return detail::simpson_integral_form(
        plant, x, nodes, [&](double th) -> Vector { return gain.K() * state.read(th); }, r1);
}

/// Relative mismatch between the integrated predictor and its integral form
///   e^{A r1} x(t) + int_{t-r1}^{t} e^{A(t-theta)} B v(theta) dtheta.
[[nodiscard]] inline double consistency_residual(const PredictorState& state, const LtiPlant& plant,
                                                 const Vector& measured_x, std::span<const TimedVector> history_v,
                                                 double r1) {
    const Vector z_int = integral_form(plant, measured_x, history_v, state.t(), r1);
    return (state.z() - z_int).norm() / std::max(1.0, z_int.norm());
}

} // namespace netpred
