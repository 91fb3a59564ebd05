#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "netpred/matexp.hpp"
#include "netpred/model.hpp"
#include "netpred/predictor.hpp"

namespace netpred {

// ============================================================================
// Random numbers
// ============================================================================

/// splitmix64 (Steele, Lea, Flood). Stream for seed s: state = s, then each
/// draw adds 0x9e3779b97f4a7c15 and mixes. uniform() takes the top 53 bits.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// uniform on [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

// ============================================================================
// Configuration and results
// ============================================================================

/// Which signal the sampled predictor integrates.
///   Transmitted: v = u_hat, the value held at the actuators (mu_max = 0 case)
///   Computed:    v = u, the value computed by the controller (mu_max > 0 case)
///   Auto:        Transmitted if mu_max == 0, else Computed
enum class PredictorVariant { Auto, Transmitted, Computed };

struct SimConfig {
    double horizon = 20.0;
    Vector x0;
    std::uint64_t seed = 1;
    double log_step = 0.01;
    PredictorVariant variant = PredictorVariant::Auto;
    bool compute_z = true; // fill the z column of sampled runs

    void validate(Eigen::Index n) const {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("SimConfig: horizon must be > 0");
        if (!(log_step > 0.0) || !std::isfinite(log_step)) throw DomainError("SimConfig: log_step must be > 0");
        if (x0.size() != n) throw DimensionError("SimConfig: x0 has wrong dimension");
    }
};

struct TrajectorySample {
    double t;
    Vector x;
    std::optional<Vector> z;
    Vector u; // applied input on [t, next sample)
    bool transmitted = false;
};

struct SimResult {
    std::vector<TrajectorySample> trajectory;
    int scs = 0;
    int measurements_sent = 0;
    EventTimeline timeline;
    std::vector<bool> triggers;        // transmit decision per controller evaluation
    std::vector<Vector> u_computed;    // u(xi_k)
    std::vector<Vector> u_sent;        // u_hat(xi_k) after the decision
    std::vector<Vector> predictions;   // z(s_k) used by the controller (sampled runs)
    ControlHistory history;            // v(.) used by the predictor
    bool diverged = false;
    std::vector<std::string> warnings;

    /// u_hat(xi_k) - u(xi_k) at each controller evaluation (the triggering error)
    [[nodiscard]] std::vector<TimedVector> trigger_errors() const {
        std::vector<TimedVector> out;
        for (std::size_t k = 0; k < u_computed.size() && k < timeline.xi.size(); ++k)
            out.push_back({timeline.xi[k], u_sent[k] - u_computed[k]});
        return out;
    }
};

/// x(t) from the logged trajectory: exact ZOH from the last sample at or before t.
[[nodiscard]] inline Vector state_at(const SimResult& r, const LtiPlant& plant, double t) {
    if (r.trajectory.empty()) throw PreconditionError("state_at: empty trajectory");
    auto it = std::upper_bound(r.trajectory.begin(), r.trajectory.end(), t,
                               [](double x, const TrajectorySample& s) { return x < s.t; });
    if (it == r.trajectory.begin()) throw DomainError("state_at: time before the start of the run");
    const auto& s = *std::prev(it);
    if (t == s.t) return s.x;
    const ZohPair zp = zoh_discretize(plant, t - s.t);
    return zp.Ad * s.x + zp.Bd * s.u;
}

// ============================================================================
// Timeline and trigger
// ============================================================================

/// s_k = k h for k = 0..floor(T/h); eta_k then mu_k drawn per k from one stream.
[[nodiscard]] inline EventTimeline generate_timeline(const DelayProfile& p, double T, std::uint64_t seed) {
    p.validate();
    if (!(T >= 0.0)) throw DomainError("generate_timeline: negative horizon");
    SplitMix64 rng(seed);
    EventTimeline tl;
    const auto K = static_cast<std::size_t>(std::floor(T / p.h + 1e-9));
    for (std::size_t k = 0; k <= K; ++k) {
        const double s = static_cast<double>(k) * p.h;
        const double eta = p.eta_max > 0.0 ? rng.uniform(0.0, p.eta_max) : 0.0;
        const double mu = p.mu_max > 0.0 ? rng.uniform(0.0, p.mu_max) : 0.0;
        double xi = s + p.r0 + eta;
        double t = xi + p.r1 + mu;
        if (k > 0) {
            xi = std::max(xi, tl.xi.back());
            t = std::max(t, tl.t.back());
        }
        tl.s.push_back(s);
        tl.eta.push_back(eta);
        tl.mu.push_back(mu);
        tl.xi.push_back(xi);
        tl.t.push_back(t);
    }
    return tl;
}

/// TRANSMIT iff (u_hat_prev - u)^T Omega (u_hat_prev - u) > sigma u^T Omega u.
[[nodiscard]] inline bool trigger_decide(const TriggerParams& params, const Vector& u_hat_prev, const Vector& u_k) {
    if (u_hat_prev.size() != params.omega().rows() || u_k.size() != params.omega().rows())
        throw DimensionError("trigger_decide: vector size does not match omega");
    const Vector e = u_hat_prev - u_k;
    return e.dot(params.omega() * e) > params.sigma() * u_k.dot(params.omega() * u_k);
}

// ============================================================================
// Sampled loops
// ============================================================================

namespace detail {

enum EventType { Measure = 0, Control = 1, Actuate = 2, Log = 3 };

struct Event {
    double time;
    int type;
    std::size_t k;
    friend bool operator<(const Event& a, const Event& b) {
        return std::tie(a.time, a.type, a.k) < std::tie(b.time, b.type, b.k);
    }
};

inline constexpr double kDivergenceNorm = 1e12;

/// Shared event loop; `control(k, x_sk, history)` returns u(xi_k).
template <class Controller>
SimResult run_event_loop(const LtiPlant& plant, const DelayProfile& profile, const TriggerParams& trigger,
                         const SimConfig& cfg, bool store_transmitted, Controller&& control) {
    const double T = cfg.horizon;
    SimResult res;
    res.timeline = generate_timeline(profile, T, cfg.seed);
    const EventTimeline& tl = res.timeline;
    const std::size_t N = tl.size();
    res.measurements_sent = static_cast<int>(N);
    if (T < profile.r0 + profile.r1) res.warnings.push_back("horizon shorter than r0 + r1");

    std::vector<Event> events;
    events.reserve(4 * N + static_cast<std::size_t>(T / cfg.log_step) + 2);
    for (std::size_t k = 0; k < N; ++k) {
        events.push_back({tl.s[k], Measure, k});
        events.push_back({tl.xi[k], Control, k});
        if (tl.t[k] <= T) events.push_back({tl.t[k], Actuate, k});
    }
    const auto L = static_cast<std::size_t>(std::floor(T / cfg.log_step + 1e-9));
    for (std::size_t j = 0; j <= L; ++j) events.push_back({std::min(T, static_cast<double>(j) * cfg.log_step), Log, j});
    events.push_back({T, Log, L + 1});
    std::sort(events.begin(), events.end());

    const Eigen::Index m = plant.m();
    Vector x = cfg.x0;
    Vector u_app = Vector::Zero(m);
    Vector u_hat = Vector::Zero(m);
    double t_now = 0.0;
    std::vector<Vector> x_meas(N);
    res.u_computed.assign(N, Vector::Zero(m));
    res.u_sent.assign(N, Vector::Zero(m));
    res.triggers.assign(N, false);
    res.history = ControlHistory(m);
    bool transmitted_now = false;

    auto record = [&] {
        if (!res.trajectory.empty() && res.trajectory.back().t == t_now) {
            res.trajectory.back().x = x;
            res.trajectory.back().u = u_app;
            res.trajectory.back().transmitted = res.trajectory.back().transmitted || transmitted_now;
        } else {
            res.trajectory.push_back({t_now, x, std::nullopt, u_app, transmitted_now});
        }
        transmitted_now = false;
    };

    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& ev = events[i];
        if (ev.time <= T && ev.time > t_now && !res.diverged) {
            const ZohPair zp = zoh_discretize(plant, ev.time - t_now);
            x = zp.Ad * x + zp.Bd * u_app;
            t_now = ev.time;
            if (!x.allFinite() || x.norm() > kDivergenceNorm) {
                res.diverged = true;
                res.warnings.push_back("state norm overflow; run truncated");
                record();
                break;
            }
        }
        switch (ev.type) {
        case Measure:
            x_meas[ev.k] = x;
            break;
        case Control: {
            const std::size_t k = ev.k;
            // values appended from now on start at or after xi_k
            res.history.set_known_until(tl.xi[k]);
            const Vector u = control(k, x_meas[k], res.history, res);
            res.history.set_known_until(std::numeric_limits<double>::infinity());
            const bool send = trigger_decide(trigger, u_hat, u);
            if (send) {
                u_hat = u;
                ++res.scs;
                transmitted_now = ev.time <= T;
            }
            res.triggers[k] = send;
            res.u_computed[k] = u;
            res.u_sent[k] = u_hat;
            res.history.append(tl.xi[k], store_transmitted ? u_hat : u);
            break;
        }
        case Actuate:
            if (res.triggers[ev.k]) u_app = res.u_sent[ev.k];
            break;
        default:
            break;
        }
        const bool last_at_time = i + 1 == events.size() || events[i + 1].time != ev.time;
        if (last_at_time && ev.time <= T && !res.diverged) record();
    }
    return res;
}

inline bool use_transmitted(PredictorVariant v, const DelayProfile& p) {
    if (v == PredictorVariant::Auto) return p.mu_max == 0.0;
    return v == PredictorVariant::Transmitted;
}

/// z(t) on every logged sample, from the stored history (exact panels).
inline void fill_sampled_z(SimResult& res, const LtiPlant& plant, const DelayProfile& p) {
    DelayProfile q = p;
    q.eta_max = 0.0;
    for (auto& s : res.trajectory) s.z = predict_state_sampled(plant, q, s.x, s.t, 0.0, res.history);
}

} // namespace detail

[[nodiscard]] inline SimResult run_sampled(const LtiPlant& plant, const Gain& gain, const DelayProfile& profile,
                                           const TriggerParams& trigger, Scenario scenario, const SimConfig& cfg) {
    gain.check(plant);
    cfg.validate(plant.n());
    if (is_continuous(scenario)) throw PreconditionError("run_sampled: continuous scenario");
    check_scenario(scenario, profile);
    const TriggerParams trig =
        scenario == Scenario::SampledPredictor ? TriggerParams::periodic(plant.m(), profile.h) : trigger;
    const bool transmitted = detail::use_transmitted(cfg.variant, profile);
    auto control = [&](std::size_t k, const Vector& x_sk, const ControlHistory& hist, SimResult& res) -> Vector {
        const Vector z = predict_state_sampled(plant, profile, x_sk, res.timeline.s[k], res.timeline.eta[k], hist);
        res.predictions.push_back(z);
        return gain.K() * z;
    };
    SimResult res = detail::run_event_loop(plant, profile, trig, cfg, transmitted, control);
    if (cfg.compute_z && !res.diverged) detail::fill_sampled_z(res, plant, profile);
    return res;
}

/// Same loop, but the controller sends K x(s_k) with no prediction.
[[nodiscard]] inline SimResult run_unpredicted(const LtiPlant& plant, const Gain& gain, const DelayProfile& profile,
                                               const SimConfig& cfg) {
    gain.check(plant);
    cfg.validate(plant.n());
    const TriggerParams trig = TriggerParams::periodic(plant.m(), profile.h);
    auto control = [&](std::size_t, const Vector& x_sk, const ControlHistory&, SimResult&) -> Vector {
        return gain.K() * x_sk;
    };
    return detail::run_event_loop(plant, profile, trig, cfg, false, control);
}

// ============================================================================
// Continuous measurements: predictor ODE and switching trigger
// ============================================================================

/// First xi >= xi_k + wait with g(xi) >= 0, where
///   g = (u_k - u)^T Omega (u_k - u) - sigma u^T Omega u,  u_k = u(xi_k), u = u(xi).
/// A zero change (u = u_k) is never an event: there is nothing new to send.
/// Scans in steps of wait/50 and bisects to 1e-9 wait; +inf if nothing
/// happens up to `horizon`.
template <class UOf>
[[nodiscard]] double detect_switch_event(UOf&& u_of, double xi_k, const TriggerParams& params,
                                         double horizon = std::numeric_limits<double>::infinity()) {
    const Vector u_k = u_of(xi_k);
    const Matrix& W = params.omega();
    auto fires = [&](double xi) {
        const Vector u = u_of(xi);
        const Vector e = u_k - u;
        const double change = e.dot(W * e);
        return change > 0.0 && change - params.sigma() * u.dot(W * u) >= 0.0;
    };
    const double wait = params.wait();
    const double first = xi_k + wait;
    if (first > horizon) return std::numeric_limits<double>::infinity();
    if (fires(first)) return first;
    const double step = wait / 50.0;
    double lo = first;
    for (long j = 1;; ++j) {
        double hi = first + static_cast<double>(j) * step;
        if (hi > horizon) {
            if (lo >= horizon || !fires(horizon)) return std::numeric_limits<double>::infinity();
            hi = horizon;
        } else if (!fires(hi)) {
            lo = hi;
            continue;
        }
        while (hi - lo > 1e-9 * wait) {
            const double mid = 0.5 * (lo + hi);
            if (fires(mid))
                hi = mid;
            else
                lo = mid;
        }
        return hi;
    }
}

namespace detail {

/// Plant + predictor co-simulation between transmissions.
struct ContinuousLoop {
    const LtiPlant* plant;
    const Gain* gain;
    const PredictorDynamics* dyn;
    double dz; // predictor step
    Vector x;
    Vector u_app;
    PredictorState zs;
    std::optional<Vector> z_latched; // z(xi_k) for the update currently applied
    // transmissions that have not reached the actuators yet: (t_k, z(xi_k))
    std::vector<std::pair<double, Vector>> pending;
    std::size_t next_pending = 0;

    [[nodiscard]] double t() const { return zs.t(); }

    void apply_due(double now) {
        while (next_pending < pending.size() && pending[next_pending].first <= now) {
            z_latched = pending[next_pending].second;
            u_app = gain->K() * *z_latched;
            ++next_pending;
        }
    }

    /// integrate to `target`, stopping exactly at actuator updates
    template <class OnStep>
    void advance_to(double target, OnStep&& on_step) {
        apply_due(t());
        while (t() < target) {
            double edge = target;
            if (next_pending < pending.size()) edge = std::min(edge, pending[next_pending].first);
            double stop = std::min(edge, t() + dz);
            if (edge - stop < 1e-9) stop = edge; // no sliver steps from round-off
            if (stop <= t()) {
                apply_due(t());
                continue;
            }
            const double dt = stop - t();
            const ZohPair zp = zoh_discretize(*plant, dt);
            x = zp.Ad * x + zp.Bd * u_app;
            zs.advance(*dyn, z_latched, dt);
            apply_due(t());
            on_step(*this);
        }
    }
    void advance_to(double target) {
        advance_to(target, [](const ContinuousLoop&) {});
    }
};

} // namespace detail

[[nodiscard]] inline SimResult run_continuous(const LtiPlant& plant, const Gain& gain, double r1, double mu_max,
                                              const TriggerParams& trigger, Scenario scenario, const SimConfig& cfg) {
    gain.check(plant);
    cfg.validate(plant.n());
    if (!is_continuous(scenario)) throw PreconditionError("run_continuous: sampled scenario");
    if (!(r1 >= 0.0) || !(mu_max >= 0.0)) throw DomainError("run_continuous: delays must be >= 0");
    const TriggerParams trig = scenario == Scenario::ContinuousPredictor
                                   ? TriggerParams(trigger.omega(), 0.0, trigger.wait())
                                   : trigger;
    const double T = cfg.horizon;
    const double wait = trig.wait();
    const double dz = (r1 > 0.0 ? std::min(wait, r1) : wait) / 200.0;
    const PredictorDynamics dyn(plant, gain, r1);
    SplitMix64 rng(cfg.seed);

    SimResult res;
    if (T < r1) res.warnings.push_back("horizon shorter than r1");
    res.history = ControlHistory(plant.m());
    detail::ContinuousLoop loop{&plant, &gain, &dyn, dz, cfg.x0, Vector::Zero(plant.m()),
                                PredictorState::initial(plant, cfg.x0, r1), std::nullopt, {}, 0};

    double next_log = 0.0;
    std::size_t log_index = 0;
    bool transmitted_now = false;
    std::size_t applied = 0;
    auto record = [&](const detail::ContinuousLoop& L) {
        if (!res.trajectory.empty() && res.trajectory.back().t == L.t()) {
            auto& b = res.trajectory.back();
            b.x = L.x;
            b.z = L.zs.z();
            b.u = L.u_app;
            b.transmitted = b.transmitted || transmitted_now;
        } else {
            res.trajectory.push_back({L.t(), L.x, L.zs.z(), L.u_app, transmitted_now});
        }
        transmitted_now = false;
    };
    // advance the main loop to `target`, logging on the log grid and at every step
    auto run_to = [&](double target) {
        while (loop.t() < target) {
            while (next_log <= loop.t() && next_log <= T) next_log = static_cast<double>(++log_index) * cfg.log_step;
            const double stop = std::min({target, next_log, T});
            if (stop <= loop.t()) break;
            // log at actuator updates and at the end of the stretch
            loop.advance_to(stop, [&](const detail::ContinuousLoop& L) {
                if (L.next_pending != applied) {
                    applied = L.next_pending;
                    record(L);
                }
            });
            record(loop);
            if (!loop.x.allFinite() || loop.x.norm() > detail::kDivergenceNorm) {
                res.diverged = true;
                res.warnings.push_back("state norm overflow; run truncated");
                return;
            }
        }
    };

    record(loop);
    double xi = 0.0;
    while (xi <= T && !res.diverged) {
        // transmission at xi. The predictor ODE is open loop in the unstable
        // modes of A, so z is re-anchored to its integral form on the measured
        // state first; otherwise integration error grows like e^{At}.
        if (r1 > 0.0) {
            loop.zs.reset_current(integral_form(plant, gain, loop.x, loop.zs, r1));
        } else {
            loop.zs.reset_current(loop.x);
        }
        const Vector z_xi = loop.zs.z();
        const Vector u = gain.K() * z_xi;
        const double mu = mu_max > 0.0 ? rng.uniform(0.0, mu_max) : 0.0;
        double tk = xi + r1 + mu;
        if (!res.timeline.t.empty()) tk = std::max(tk, res.timeline.t.back());
        res.timeline.s.push_back(xi);
        res.timeline.eta.push_back(0.0);
        res.timeline.mu.push_back(mu);
        res.timeline.xi.push_back(xi);
        res.timeline.t.push_back(tk);
        res.triggers.push_back(true);
        res.u_computed.push_back(u);
        res.u_sent.push_back(u);
        res.history.append(xi, u);
        ++res.scs;
        loop.pending.push_back({tk, z_xi});
        transmitted_now = true;
        record(loop);

        // next transmission along a probe copy of the loop
        detail::ContinuousLoop anchor = loop, probe = loop;
        auto u_of = [&](double q) -> Vector {
            if (q < probe.t()) {
                probe = anchor;
            } else {
                anchor = probe;
            }
            probe.advance_to(q);
            return gain.K() * probe.zs.z();
        };
        const double next = detect_switch_event(u_of, xi, trig, T);
        run_to(std::isfinite(next) ? next : T);
        if (!std::isfinite(next)) break;
        xi = next;
    }
    if (!res.diverged) run_to(T);
    res.measurements_sent = 0;
    return res;
}

// ============================================================================
// Decay-rate fit
// ============================================================================

/// -(slope of log|x| fitted over [T/2, T]) - alpha; >= 0 means decay at rate >= alpha.
[[nodiscard]] inline double fit_decay(const SimResult& r, double alpha) {
    if (r.trajectory.size() < 2) throw PreconditionError("fit_decay: trajectory too short");
    const double T = r.trajectory.back().t;
    double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& s : r.trajectory) {
        if (s.t < 0.5 * T) continue;
        const double y = std::log(std::max(s.x.norm(), 1e-300));
        n += 1;
        st += s.t;
        sy += y;
        stt += s.t * s.t;
        sty += s.t * y;
    }
    if (n < 2) throw PreconditionError("fit_decay: not enough samples in [T/2, T]");
    const double slope = (n * sty - st * sy) / (n * stt - st * st);
    return -slope - alpha;
}

// ============================================================================
// CSV exports
// ============================================================================

inline void write_trajectory_csv(const SimResult& r, std::ostream& os) {
    if (r.trajectory.empty()) return;
    const Eigen::Index n = r.trajectory.front().x.size();
    const Eigen::Index m = r.trajectory.front().u.size();
    os << "t";
    for (Eigen::Index i = 1; i <= n; ++i) os << ",x" << i;
    for (Eigen::Index i = 1; i <= n; ++i) os << ",z" << i;
    for (Eigen::Index i = 1; i <= m; ++i) os << ",u" << i;
    os << ",transmitted\n";
    os.precision(17);
    for (const auto& s : r.trajectory) {
        os << s.t;
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << s.x[i];
        for (Eigen::Index i = 0; i < n; ++i) {
            os << ',';
            if (s.z) os << (*s.z)[i];
        }
        for (Eigen::Index i = 0; i < m; ++i) os << ',' << s.u[i];
        os << ',' << (s.transmitted ? 1 : 0) << '\n';
    }
}

inline void write_timeline_csv(const SimResult& r, std::ostream& os) {
    const auto& tl = r.timeline;
    os << "k,s,eta,mu,xi,t,transmitted\n";
    os.precision(17);
    for (std::size_t k = 0; k < tl.size(); ++k)
        os << k << ',' << tl.s[k] << ',' << tl.eta[k] << ',' << tl.mu[k] << ',' << tl.xi[k] << ',' << tl.t[k] << ','
           << (k < r.triggers.size() && r.triggers[k] ? 1 : 0) << '\n';
}

} // namespace netpred
