#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "netpred/design.hpp"

namespace netpred::bench {

struct PendulumSpec {
    double M = 10.0; // cart mass, kg
    double m = 1.0;  // bob mass, kg
    double l = 3.0;  // arm length, m
    double g = 10.0; // m/s^2

    void validate() const {
        if (!(M > 0.0 && m > 0.0 && l > 0.0 && g > 0.0)) throw DomainError("PendulumSpec: all constants must be > 0");
    }
};

struct Pendulum {
    LtiPlant plant;
    Gain gain;
};

/// Linearized inverted pendulum on a cart, state (y, y', theta, theta').
[[nodiscard]] inline Pendulum pendulum(const PendulumSpec& s = {}) {
    s.validate();
    Matrix A = Matrix::Zero(4, 4);
    A(0, 1) = 1.0;
    A(1, 2) = -s.m * s.g / s.M;
    A(2, 3) = 1.0;
    A(3, 2) = s.g / s.l;
    Matrix B(4, 1);
    B << 0.0, 1.0 / s.M, 0.0, -1.0 / (s.M * s.l);
    Matrix K(1, 4);
    K << 2.0, 12.0, 378.0, 210.0;
    return {LtiPlant(A, B), Gain(K)};
}

[[nodiscard]] inline Vector pendulum_x0() {
    Vector x0(4);
    x0 << 0.98, 0.0, 0.2, 0.0;
    return x0;
}

// ============================================================================
// Table of sent control signals
// ============================================================================

struct Cell {
    std::string strategy;
    std::string column; // "r0=0.2" or "r0=0"
    bool applicable = true;
    design::FamilyParams params; // h = reference value used for simulation
    double scs_reference = 0.0;
    std::optional<double> h_certified; // bisection result
    std::optional<std::string> note;
    std::vector<int> scs_runs;
    int periodic_scs = 0; // floor(T/h)+1 at the same h

    [[nodiscard]] double scs_mean() const {
        double s = 0.0;
        for (int v : scs_runs) s += v;
        return scs_runs.empty() ? 0.0 : s / static_cast<double>(scs_runs.size());
    }
};

struct Report {
    std::vector<Cell> cells;
    std::uint64_t seed_base = 1;
    int runs_per_cell = 0;
};

struct Table1Options {
    bool bisect = true;
    design::BisectionOptions bisection{};
    std::ostream* log = nullptr;
};

/// Cells of the comparison (alpha = 0.01, r1 = 0.2, mu_max = 0.01).
[[nodiscard]] inline std::vector<Cell> table1_cells() {
    using F = lmi::Family;
    auto cell = [](std::string strategy, std::string col, F fam, DelayProfile p, double sigma, double scs) {
        Cell c;
        c.strategy = std::move(strategy);
        c.column = std::move(col);
        c.params = {fam, p, 0.01, sigma};
        c.scs_reference = scs;
        return c;
    };
    std::vector<Cell> cells{
        cell("sampled predictor", "r0=0.2", F::Lemma1, {0.2, 0.2, 0.01, 0.01, 0.0369}, 0.0, 543),
        cell("sampled event-triggering", "r0=0.2", F::Lemma1, {0.2, 0.2, 0.01, 0.01, 0.0315}, 0.01, 116),
        cell("continuous predictor", "r0=0.2", F::Lemma2, {0.2, 0.2, 0.01, 0.01, 0.105}, 0.0, 0),
        cell("switching event-triggering", "r0=0.2", F::Lemma2, {0.2, 0.2, 0.01, 0.01, 0.105}, 0.13, 0),
        cell("sampled predictor", "r0=0", F::Lemma1, {0.0, 0.2, 0.0, 0.01, 0.0646}, 0.0, 310),
        cell("sampled event-triggering", "r0=0", F::Lemma1, {0.0, 0.2, 0.0, 0.01, 0.046}, 0.07, 56),
        cell("continuous predictor", "r0=0", F::Lemma2, {0.0, 0.2, 0.0, 0.01, 0.105}, 0.0, 191),
        cell("switching event-triggering", "r0=0", F::Lemma2, {0.0, 0.2, 0.0, 0.01, 0.105}, 0.13, 48),
    };
    // continuous measurements do not apply with a sensor-side delay
    cells[2].applicable = cells[3].applicable = false;
    return cells;
}

[[nodiscard]] inline Report table1(std::uint64_t seed_base, int runs_per_cell, const Table1Options& o = {}) {
    if (runs_per_cell < 1) throw DomainError("table1: runs_per_cell must be >= 1");
    const auto pd = pendulum();
    Report rep;
    rep.seed_base = seed_base;
    rep.runs_per_cell = runs_per_cell;
    for (Cell c : table1_cells()) {
        if (!c.applicable) {
            rep.cells.push_back(std::move(c));
            continue;
        }
        if (o.log) *o.log << c.strategy << " (" << c.column << ")\n";
        if (o.bisect) {
            if (auto b = design::max_h_bisection(pd.plant, pd.gain, c.params, o.bisection))
                c.h_certified = b->h;
            else
                c.note = "not certifiable at h_lo";
        }
        Matrix omega = Matrix::Identity(pd.plant.m(), pd.plant.m());
        if (c.params.sigma > 0.0) {
            if (auto cert = design::feasible_at(pd.plant, pd.gain, c.params, c.params.profile.h, o.bisection.feasibility))
                omega = cert->at("Omega");
            else
                c.note = "reference h not certified; Omega = I";
        }
        SimConfig cfg;
        cfg.x0 = pendulum_x0();
        cfg.horizon = 20.0;
        cfg.compute_z = false;
        for (int i = 0; i < runs_per_cell; ++i) {
            cfg.seed = seed_base + static_cast<std::uint64_t>(i);
            c.scs_runs.push_back(design::simulate(pd.plant, pd.gain, c.params, omega, cfg).scs);
        }
        c.periodic_scs = static_cast<int>(std::floor(cfg.horizon / c.params.profile.h + 1e-9)) + 1;
        rep.cells.push_back(std::move(c));
    }
    return rep;
}

namespace detail {

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

} // namespace detail

inline void write_report_text(const Report& r, std::ostream& os) {
    char line[256];
    std::snprintf(line, sizeof line, "%-28s %-7s %6s %8s %9s %8s %6s %6s %6s %6s\n", "strategy", "column", "sigma",
                  "h_ref", "h_cert", "scs_mean", "min", "max", "ref", "period");
    os << line;
    for (const auto& c : r.cells) {
        if (!c.applicable) {
            std::snprintf(line, sizeof line, "%-28s %-7s %6s %8s %9s %8s %6s %6s %6s %6s\n", c.strategy.c_str(),
                          c.column.c_str(), "-", "-", "-", "-", "-", "-", "-", "-");
            os << line;
            continue;
        }
        const int mn = *std::min_element(c.scs_runs.begin(), c.scs_runs.end());
        const int mx = *std::max_element(c.scs_runs.begin(), c.scs_runs.end());
        std::snprintf(line, sizeof line, "%-28s %-7s %6.2f %8.4f %9s %8.2f %6d %6d %6.0f %6d\n", c.strategy.c_str(),
                      c.column.c_str(), c.params.sigma, c.params.profile.h,
                      c.h_certified ? detail::fmt("%.5f", *c.h_certified).c_str() : "none", c.scs_mean(), mn, mx,
                      c.scs_reference, c.periodic_scs);
        os << line;
        if (c.note) os << "    note: " << *c.note << "\n";
    }
    os << "seeds " << r.seed_base << ".." << r.seed_base + static_cast<std::uint64_t>(r.runs_per_cell) - 1 << "\n";
}

inline void write_report_csv(const Report& r, std::ostream& os) {
    os << "strategy,column,sigma,h_ref,h_certified,scs_mean,scs_min,scs_max,scs_reference,periodic_scs\n";
    for (const auto& c : r.cells) {
        os << c.strategy << ',' << c.column << ',';
        if (!c.applicable) {
            os << ",,,,,,,\n";
            continue;
        }
        const int mn = *std::min_element(c.scs_runs.begin(), c.scs_runs.end());
        const int mx = *std::max_element(c.scs_runs.begin(), c.scs_runs.end());
        os << sdp::format_double(c.params.sigma) << ',' << sdp::format_double(c.params.profile.h) << ','
           << (c.h_certified ? sdp::format_double(*c.h_certified) : std::string()) << ','
           << sdp::format_double(c.scs_mean()) << ',' << mn << ',' << mx << ',' << c.scs_reference << ','
           << c.periodic_scs << '\n';
    }
}

} // namespace netpred::bench
