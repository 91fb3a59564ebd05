#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "netpred/lmi.hpp"
#include "netpred/simulator.hpp"

namespace netpred::design {

using lmi::Family;

/// Everything a family's builder needs apart from the plant and gain.
/// Lemma 2 and Prop. 3 read r1, mu_max and use h as the waiting time.
struct FamilyParams {
    Family family = Family::Lemma1;
    DelayProfile profile{};
    double alpha = 0.01;
    double sigma = 0.0;
};

[[nodiscard]] inline lmi::LmiProblem build(const LtiPlant& plant, const Gain& gain, const FamilyParams& fp) {
    const auto& p = fp.profile;
    switch (fp.family) {
    case Family::Lemma1: return lmi::build_lemma1(plant, gain, p, fp.alpha, fp.sigma);
    case Family::Prop1: return lmi::build_prop1(plant, gain, p, fp.alpha, fp.sigma);
    case Family::Lemma2: return lmi::build_lemma2(plant, gain, p.r1, p.mu_max, p.h, fp.alpha, fp.sigma);
    case Family::Prop3: return lmi::build_prop3(plant, gain, p.h, fp.alpha, fp.sigma, p.mu_max);
    case Family::Custom: break;
    }
    throw DomainError("design: no builder for a custom family");
}

/// Scenario simulated for a family at a given sigma.
[[nodiscard]] inline Scenario scenario_for(Family f, double sigma) {
    const bool et = sigma > 0.0;
    switch (f) {
    case Family::Lemma1:
    case Family::Prop1: return et ? Scenario::SampledEventTriggered : Scenario::SampledPredictor;
    case Family::Lemma2:
    case Family::Prop3: return et ? Scenario::SwitchingEventTriggered : Scenario::ContinuousPredictor;
    case Family::Custom: break;
    }
    throw DomainError("design: no scenario for a custom family");
}

[[nodiscard]] inline SimResult simulate(const LtiPlant& plant, const Gain& gain, const FamilyParams& fp,
                                        const Matrix& omega, const SimConfig& cfg) {
    const Scenario sc = scenario_for(fp.family, fp.sigma);
    const TriggerParams tp(omega, fp.sigma, fp.profile.h);
    if (is_continuous(sc)) return run_continuous(plant, gain, fp.profile.r1, fp.profile.mu_max, tp, sc, cfg);
    return run_sampled(plant, gain, fp.profile, tp, sc, cfg);
}

// ============================================================================
// Gain synthesis
// ============================================================================

[[nodiscard]] inline std::vector<double> logspace(double lo, double hi, int count) {
    if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw DomainError("logspace: need 0 < lo <= hi, count >= 1");
    std::vector<double> out;
    for (int i = 0; i < count; ++i) {
        const double w = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
        out.push_back(lo * std::pow(hi / lo, w));
    }
    return out;
}

struct DesignParams {
    std::vector<double> eps1_grid = logspace(0.05, 20.0, 20);
    std::vector<double> eps2_grid = logspace(1e-3, 1e3, 20);
    FamilyParams problem{Family::Prop3, {0.0, 0.0, 0.0, 0.0, 0.02}, 0.01, 0.0};

    void validate() const {
        if (eps1_grid.empty() || eps2_grid.empty()) throw DomainError("DesignParams: empty grid");
        for (double e : eps1_grid)
            if (!(e > 0.0)) throw DomainError("DesignParams: eps1 must be positive");
        for (double e : eps2_grid)
            if (!(e > 0.0)) throw DomainError("DesignParams: eps2 must be positive");
    }
};

/// Congruence-transformed problem for one (eps1, eps2).
[[nodiscard]] inline lmi::LmiProblem build_synthesis(const LtiPlant& plant, const FamilyParams& fp, double eps1,
                                                     double eps2) {
    lmi::LmiProblem prob(fp.family);
    lmi::DesignSymbols s(prob, plant, eps1, eps2);
    const auto& p = fp.profile;
    switch (fp.family) {
    case Family::Lemma1: lmi::lemma1_into(s, plant, p, fp.alpha, fp.sigma); break;
    case Family::Prop1:
        if (p.mu_max != 0.0) throw PreconditionError("prop1 requires mu_max = 0");
        lmi::prop1_into(s, plant, p, fp.alpha, fp.sigma);
        break;
    case Family::Lemma2: lmi::lemma2_into(s, plant, p.r1, p.mu_max, p.h, fp.alpha, fp.sigma); break;
    case Family::Prop3:
        if (p.mu_max != 0.0) throw PreconditionError("prop3 requires mu_max = 0");
        lmi::prop3_into(s, plant, p.h, fp.alpha, fp.sigma);
        break;
    case Family::Custom: throw DomainError("design: no builder for a custom family");
    }
    // the builders reset params
    prob.params["eps1"] = eps1;
    prob.params["eps2"] = eps2;
    return prob;
}

struct Synthesis {
    Gain gain;
    double eps1 = 0.0;
    double eps2 = 0.0;
    lmi::Certificate certificate; // of the transformed problem
    int tried = 0;
    std::vector<std::string> warnings;
};

/// Walks the (eps1, eps2) grid; the first feasible point gives K = Y P2bar^{-1}.
[[nodiscard]] inline std::optional<Synthesis> synthesize_gain(const LtiPlant& plant, const DesignParams& d,
                                                              const lmi::FeasibilityOptions& opt = {},
                                                              std::vector<std::string>* warnings = nullptr) {
    d.validate();
    std::vector<std::string> notes;
    int tried = 0;
    for (double e1 : d.eps1_grid) {
        for (double e2 : d.eps2_grid) {
            ++tried;
            const auto prob = build_synthesis(plant, d.problem, e1, e2);
            auto r = lmi::check_feasible(prob, opt);
            if (r.verdict != lmi::Verdict::Feasible) continue;
            const Matrix& Q = r.certificate->at("P2bar");
            const Eigen::JacobiSVD<Matrix> svd(Q);
            const auto& sv = svd.singularValues();
            const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                        : std::numeric_limits<double>::infinity();
            if (!(cond <= 1e12)) {
                notes.push_back("eps1=" + sdp::format_double(e1) + " eps2=" + sdp::format_double(e2) +
                                ": P2bar ill-conditioned, skipped");
                continue;
            }
            const Matrix K = r.certificate->at("Y") * Q.inverse();
            Synthesis out{Gain(K), e1, e2, std::move(*r.certificate), tried, notes};
            if (warnings) *warnings = notes;
            return out;
        }
    }
    if (warnings) *warnings = notes;
    return std::nullopt;
}

// ============================================================================
// Maximum sampling period
// ============================================================================

struct BisectionOptions {
    double h_lo = 1e-4;
    double h_hi = 1.0;
    double tol = 1e-4;
    lmi::FeasibilityOptions feasibility{};
    std::ostream* log = nullptr;
};

struct BisectionResult {
    double h = 0.0;                        // largest certified h
    std::optional<lmi::Certificate> certificate; // at h
    bool above_infeasible = false;         // h + 2 tol re-checked infeasible
    int solves = 0;
};

/// Feasible at h? Precondition failures (e.g. the Lemma 1 delay assumption)
/// and Unknown both count as no.
[[nodiscard]] inline std::optional<lmi::Certificate> feasible_at(const LtiPlant& plant, const Gain& gain,
                                                                 FamilyParams fp, double h,
                                                                 const lmi::FeasibilityOptions& opt) {
    fp.profile.h = h;
    lmi::LmiProblem prob;
    try {
        prob = build(plant, gain, fp);
    } catch (const PreconditionError&) {
        return std::nullopt;
    }
    auto r = lmi::check_feasible(prob, opt);
    if (r.verdict != lmi::Verdict::Feasible) return std::nullopt;
    return std::move(r.certificate);
}

[[nodiscard]] inline std::optional<BisectionResult> max_h_bisection(const LtiPlant& plant, const Gain& gain,
                                                                    const FamilyParams& base,
                                                                    const BisectionOptions& o = {}) {
    if (!(o.h_lo > 0.0) || !(o.h_lo < o.h_hi) || !(o.tol > 0.0)) throw DomainError("bisection: bad bracket");
    BisectionResult res;
    auto probe = [&](double h) {
        ++res.solves;
        auto c = feasible_at(plant, gain, base, h, o.feasibility);
        if (o.log) *o.log << "  h=" << sdp::format_double(h) << (c ? " feasible" : " not feasible") << "\n";
        return c;
    };
    auto lo_cert = probe(o.h_lo);
    if (!lo_cert) return std::nullopt;
    double lo = o.h_lo, hi = o.h_hi;
    if (auto c = probe(hi)) {
        lo = hi;
        lo_cert = std::move(c);
    } else {
        while (hi - lo > o.tol) {
            const double mid = 0.5 * (lo + hi);
            if (auto c = probe(mid)) {
                lo = mid;
                lo_cert = std::move(c);
            } else {
                hi = mid;
            }
        }
    }
    res.h = lo;
    res.certificate = std::move(lo_cert);
    res.above_infeasible = !probe(lo + 2.0 * o.tol).has_value();
    return res;
}

// ============================================================================
// Sigma sweep
// ============================================================================

struct SweepRow {
    double sigma = 0.0;
    std::optional<double> h_max;
    std::vector<int> scs_runs;

    [[nodiscard]] bool feasible() const { return h_max.has_value(); }
    [[nodiscard]] double scs_mean() const {
        if (scs_runs.empty()) return std::numeric_limits<double>::quiet_NaN();
        double s = 0.0;
        for (int v : scs_runs) s += v;
        return s / static_cast<double>(scs_runs.size());
    }
    [[nodiscard]] int scs_min() const { return scs_runs.empty() ? 0 : *std::min_element(scs_runs.begin(), scs_runs.end()); }
    [[nodiscard]] int scs_max() const { return scs_runs.empty() ? 0 : *std::max_element(scs_runs.begin(), scs_runs.end()); }
};

struct SweepOptions {
    int runs_per_point = 20;
    std::uint64_t seed_base = 1; // seeds seed_base .. seed_base + runs - 1
    SimConfig sim{};
    BisectionOptions bisection{};
};

struct SweepTable {
    std::vector<SweepRow> rows;
    std::optional<std::size_t> best; // argmin mean SCS over feasible rows
};

[[nodiscard]] inline SweepTable sweep_sigma(const LtiPlant& plant, const Gain& gain, const FamilyParams& base,
                                            const std::vector<double>& sigma_grid, const SweepOptions& o = {}) {
    SweepTable out;
    for (double sigma : sigma_grid) {
        FamilyParams fp = base;
        fp.sigma = sigma;
        SweepRow row{sigma, std::nullopt, {}};
        if (auto b = max_h_bisection(plant, gain, fp, o.bisection)) {
            row.h_max = b->h;
            fp.profile.h = b->h;
            const Matrix omega = sigma > 0.0 ? b->certificate->at("Omega") : Matrix::Identity(plant.m(), plant.m());
            for (int i = 0; i < o.runs_per_point; ++i) {
                SimConfig cfg = o.sim;
                cfg.seed = o.seed_base + static_cast<std::uint64_t>(i);
                cfg.compute_z = false;
                row.scs_runs.push_back(simulate(plant, gain, fp, omega, cfg).scs);
            }
        }
        out.rows.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        const auto& r = out.rows[i];
        if (!r.feasible() || r.scs_runs.empty()) continue;
        if (!out.best || r.scs_mean() < out.rows[*out.best].scs_mean()) out.best = i;
    }
    return out;
}

inline void write_sweep_csv(const SweepTable& t, std::ostream& os) {
    os << "sigma,h_max,scs_mean,scs_min,scs_max,feasible\n";
    for (const auto& r : t.rows) {
        os << sdp::format_double(r.sigma) << ',';
        if (r.feasible()) {
            os << sdp::format_double(*r.h_max) << ',' << sdp::format_double(r.scs_mean()) << ',' << r.scs_min() << ','
               << r.scs_max() << ",1\n";
        } else {
            os << ",,,,0\n";
        }
    }
}

} // namespace netpred::design
