#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "netpred/lmi.hpp"
#include "netpred/simulator.hpp"

namespace netpred::lmi {

/// One piece of the Lyapunov-Krasovskii functional.
///   single: int_{t-b}^{t-a} e^{2alpha(s-t)} z^T M z ds
///   double: coef * int_{-b}^{-a} int_{t+theta}^{t} e^{2alpha(s-t)} zdot^T M zdot ds dtheta
struct FunctionalTerm {
    std::string var;
    bool derivative = false;
    double a = 0.0;
    double b = 0.0;
    double coef = 1.0;
};

/// Terms of V besides z^T P z, and the window length they need.
[[nodiscard]] inline std::vector<FunctionalTerm> functional_terms(const Certificate& c) {
    switch (c.family) {
    case Family::Lemma1: {
        const double tb = c.param("tau_bar"), tm = c.param("tau_max");
        const double r = c.param("r0") + c.param("r1");
        return {{"S0", false, 0.0, tb, 1.0},
                {"R0", true, 0.0, tb, tb},
                {"S", false, tb, r, 1.0},
                {"S1", false, r, tm, 1.0},
                {"R1", true, r, tm, tm - r}};
    }
    case Family::Prop1: {
        const double tb = c.param("tau_bar");
        return {{"S", false, 0.0, tb, 1.0}, {"R", true, 0.0, tb, tb}};
    }
    case Family::Lemma2: {
        const double r1 = c.param("r1"), mu = c.param("mu_max"), tt = c.param("tau_tilde"), h = c.param("h");
        return {{"S", false, 0.0, r1, 1.0},
                {"S0", false, r1, r1 + mu, 1.0},
                {"R0", true, r1, r1 + mu, mu},
                {"S1", false, r1 + mu, r1 + tt, 1.0},
                {"R1", true, r1 + mu, r1 + tt, h}};
    }
    case Family::Prop3: {
        const double h = c.param("h");
        return {{"S", false, 0.0, h, 1.0}, {"R", true, 0.0, h, h}};
    }
    case Family::Custom: break;
    }
    throw DomainError("evaluate_V: certificate family has no functional");
}

/// Earliest time at which V is defined (the longest delay in the functional).
[[nodiscard]] inline double functional_window(const Certificate& c) {
    double w = 0.0;
    for (const auto& term : functional_terms(c)) w = std::max(w, term.b);
    return w;
}

namespace detail {

struct ZSample {
    double t;
    Vector z;
    Vector zd;
};

/// z on the log grid (duplicated instants dropped) with central differences.
inline std::vector<ZSample> z_with_derivative(const SimResult& r) {
    std::vector<ZSample> out;
    for (const auto& s : r.trajectory) {
        if (!s.z) throw PreconditionError("evaluate_V: trajectory has no predictor state");
        if (!out.empty() && s.t - out.back().t < 1e-12) {
            out.back().z = *s.z;
            continue;
        }
        out.push_back({s.t, *s.z, Vector()});
    }
    const std::size_t N = out.size();
    if (N < 3) throw PreconditionError("evaluate_V: trajectory too short");
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t lo = i == 0 ? 0 : i - 1;
        const std::size_t hi = i + 1 == N ? N - 1 : i + 1;
        out[i].zd = (out[hi].z - out[lo].z) / (out[hi].t - out[lo].t);
    }
    return out;
}

inline ZSample interpolate(const std::vector<ZSample>& g, double t) {
    auto it = std::lower_bound(g.begin(), g.end(), t, [](const ZSample& s, double v) { return s.t < v; });
    if (it == g.end()) return g.back();
    if (it == g.begin() || it->t == t) return *it;
    const auto& a = *std::prev(it);
    const auto& b = *it;
    const double w = (t - a.t) / (b.t - a.t);
    return {t, (1.0 - w) * a.z + w * b.z, (1.0 - w) * a.zd + w * b.zd};
}

} // namespace detail

/// V(t) along a simulated trajectory, using the certificate's matrices.
/// Trapezoid quadrature on the log grid plus the window breakpoints; the
/// double integrals are reduced to a single weighted integral,
///   int_{-b}^{-a} int_{t+theta}^{t} f ds dtheta = int_{t-b}^{t} min(b-a, s-t+b) f(s) ds.
[[nodiscard]] inline double evaluate_V(const Certificate& cert, const SimResult& result, double t) {
    const auto terms = functional_terms(cert);
    const double window = functional_window(cert);
    const double alpha = cert.param("alpha");
    if (t < window - 1e-12) throw PreconditionError("evaluate_V: t is below the functional's delay window");
    const auto grid = detail::z_with_derivative(result);
    if (grid.front().t > t - window + 1e-12 || grid.back().t < t - 1e-12)
        throw PreconditionError("evaluate_V: insufficient history on [t - window, t]");

    const Matrix& P = cert.at("P");
    const Vector zt = detail::interpolate(grid, t).z;
    double V = zt.dot(P * zt);

    for (const auto& term : terms) {
        if (term.b <= term.a) continue;
        const Matrix& M = cert.at(term.var);
        const double lo = t - term.b;
        const double hi = term.derivative ? t : t - term.a;
        std::vector<double> nodes{lo, hi};
        if (term.derivative && term.a > 0.0) nodes.push_back(t - term.a);
        for (const auto& s : grid)
            if (s.t > lo && s.t < hi) nodes.push_back(s.t);
        std::sort(nodes.begin(), nodes.end());
        auto f = [&](double s) {
            const auto zs = detail::interpolate(grid, s);
            const Vector& v = term.derivative ? zs.zd : zs.z;
            double w = std::exp(2.0 * alpha * (s - t));
            if (term.derivative) w *= term.coef * std::min(term.b - term.a, s - lo);
            return w * v.dot(M * v);
        };
        double acc = 0.0;
        double f_prev = f(nodes.front());
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            const double f_cur = f(nodes[i]);
            acc += 0.5 * (nodes[i] - nodes[i - 1]) * (f_prev + f_cur);
            f_prev = f_cur;
        }
        V += term.derivative ? acc : term.coef * acc;
    }
    return V;
}

} // namespace netpred::lmi
