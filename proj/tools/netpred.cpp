// netpred command line: certify, design, simulate, sweep, bench.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "netpred/bench.hpp"
#include "netpred/config.hpp"
#include "netpred/design.hpp"
#include "netpred/lmi.hpp"
#include "netpred/simulator.hpp"

namespace fs = std::filesystem;
using namespace netpred;

namespace {

void print_matrix(std::ostream& os, const std::string& name, const Matrix& M) {
    os << name << " =";
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        os << (i ? "\n    " : " ") << "[";
        for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? ", " : "") << sdp::format_double(M(i, j));
        os << "]";
    }
    os << "\n";
}

void print_result(const lmi::FeasibilityResult& r) {
    std::cout << "verdict: " << lmi::to_string(r.verdict) << "\n";
    std::cout << "solver: " << r.diagnostic << " (" << r.iterations << " iterations, margin "
              << sdp::format_double(r.margin) << ")\n";
    if (!r.certificate) return;
    for (const auto& m : r.certificate->margins)
        std::cout << "  " << m.name << " [" << m.kind << "] min eig " << sdp::format_double(m.value) << "\n";
    std::cout << "max violation " << sdp::format_double(r.certificate->max_violation) << "\n";
}

int cmd_certify(const std::string& family, const std::string& cfg_path, bool bisect, const std::string& out,
                const std::string& sdpa) {
    const auto cfg = config::load(cfg_path);
    const auto fam = lmi::family_from_string(family);
    const auto fp = cfg.family_params(fam);
    const auto& plant = cfg.require_plant();
    const auto& gain = cfg.require_gain();
    const auto prob = design::build(plant, gain, fp);
    for (const auto& w : prob.warnings) std::cerr << "warning: " << w << "\n";
    if (!sdpa.empty()) {
        lmi::export_sdpa(prob, sdpa);
        std::cout << "wrote " << sdpa << "\n";
    }
    const auto r = lmi::check_feasible(prob);
    std::cout << lmi::to_string(fam) << " at h=" << sdp::format_double(fp.profile.h)
              << " sigma=" << sdp::format_double(fp.sigma) << " alpha=" << sdp::format_double(fp.alpha) << "\n";
    print_result(r);
    if (r.certificate && !out.empty()) {
        lmi::save_certificate(*r.certificate, out);
        std::cout << "wrote " << out << "\n";
    }
    if (bisect) {
        design::BisectionOptions bo;
        bo.log = &std::cerr;
        const auto b = design::max_h_bisection(plant, gain, fp, bo);
        if (b)
            std::cout << "h* = " << sdp::format_double(b->h) << " (" << b->solves << " solves, h*+2tol "
                      << (b->above_infeasible ? "infeasible" : "NOT infeasible") << ")\n";
        else
            std::cout << "h* = none (infeasible at h_lo)\n";
    }
    return r.verdict == lmi::Verdict::Feasible ? 0 : 2;
}

int cmd_design(const std::string& cfg_path) {
    const auto cfg = config::load(cfg_path);
    const auto& plant = cfg.require_plant();
    design::DesignParams d;
    d.problem = cfg.family_params(cfg.method);
    std::vector<std::string> warnings;
    const auto s = design::synthesize_gain(plant, d, {}, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    if (!s) {
        std::cout << "no gain found on the eps grid\n";
        return 2;
    }
    std::cout << "eps1 = " << sdp::format_double(s->eps1) << ", eps2 = " << sdp::format_double(s->eps2) << " ("
              << s->tried << " grid points tried)\n";
    print_matrix(std::cout, "K", s->gain.K());
    const auto r = lmi::check_feasible(design::build(plant, s->gain, d.problem));
    std::cout << "analysis re-check: " << lmi::to_string(r.verdict) << "\n";
    return r.verdict == lmi::Verdict::Feasible ? 0 : 3;
}

void write_columns(const SimResult& r, const fs::path& dir) {
    const auto& tr = r.trajectory;
    if (tr.empty()) return;
    auto dump = [&](const std::string& name, auto&& value) {
        std::ofstream f(dir / name);
        for (const auto& s : tr) f << sdp::format_double(s.t) << ' ' << sdp::format_double(value(s)) << '\n';
    };
    for (Eigen::Index i = 0; i < tr.front().x.size(); ++i)
        dump("x" + std::to_string(i + 1) + ".dat", [i](const TrajectorySample& s) { return s.x(i); });
    for (Eigen::Index i = 0; i < tr.front().u.size(); ++i)
        dump("u" + std::to_string(i + 1) + ".dat", [i](const TrajectorySample& s) { return s.u(i); });
}

int cmd_simulate(const std::string& cfg_path, const std::string& out) {
    auto cfg = config::load(cfg_path);
    const auto& plant = cfg.require_plant();
    const auto& gain = cfg.require_gain();
    SimResult r;
    if (cfg.scenario == "unpredicted") {
        r = run_unpredicted(plant, gain, cfg.delays, cfg.sim);
    } else {
        const Scenario sc = scenario_from_string(cfg.scenario);
        if (is_continuous(sc))
            r = run_continuous(plant, gain, cfg.delays.r1, cfg.delays.mu_max, cfg.trigger(), sc, cfg.sim);
        else
            r = run_sampled(plant, gain, cfg.delays, cfg.trigger(), sc, cfg.sim);
    }
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    const fs::path dir(out);
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "trajectory.csv");
        write_trajectory_csv(r, f);
    }
    {
        std::ofstream f(dir / "timeline.csv");
        write_timeline_csv(r, f);
    }
    write_columns(r, dir);
    std::cout << "scenario " << cfg.scenario << ": SCS " << r.scs << ", measurements " << r.measurements_sent
              << ", |x(T)| " << sdp::format_double(r.trajectory.back().x.norm()) << (r.diverged ? " (diverged)" : "")
              << "\n";
    if (!r.diverged && cfg.sim.x0.norm() > 0.0)
        std::cout << "decay margin vs alpha=" << sdp::format_double(cfg.alpha) << ": "
                  << sdp::format_double(fit_decay(r, cfg.alpha)) << "\n";
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& family, double from, double to, double step, const std::string& cfg_path, int runs,
              const std::string& csv) {
    if (!(step > 0.0) || to < from) throw DomainError("sweep: need step > 0 and sigma-to >= sigma-from");
    const auto fam = lmi::family_from_string(family);
    LtiPlant plant = bench::pendulum().plant;
    Gain gain = bench::pendulum().gain;
    design::FamilyParams base;
    SimConfig sim;
    sim.x0 = bench::pendulum_x0();
    if (!cfg_path.empty()) {
        const auto cfg = config::load(cfg_path);
        plant = cfg.require_plant();
        gain = cfg.require_gain();
        base = cfg.family_params(fam);
        sim = cfg.sim;
    } else {
        // pendulum defaults (alpha = 0.01, r1 = 0.2, mu_max = 0.01)
        const bool sampled = fam == lmi::Family::Lemma1;
        base = {fam, {sampled ? 0.2 : 0.0, 0.2, sampled ? 0.01 : 0.0, fam == lmi::Family::Prop1 || fam == lmi::Family::Prop3 ? 0.0 : 0.01, 0.1}, 0.01, 0.0};
    }
    std::vector<double> grid;
    for (int i = 0;; ++i) {
        const double s = from + i * step;
        if (s > to + 1e-12 || s >= 1.0) break;
        grid.push_back(s);
    }
    design::SweepOptions so;
    so.runs_per_point = runs;
    so.sim = sim;
    const auto t = design::sweep_sigma(plant, gain, base, grid, so);
    std::printf("%8s %10s %10s %6s %6s\n", "sigma", "h_max", "scs_mean", "min", "max");
    for (const auto& r : t.rows) {
        if (r.feasible())
            std::printf("%8.4f %10.5f %10.2f %6d %6d\n", r.sigma, *r.h_max, r.scs_mean(), r.scs_min(), r.scs_max());
        else
            std::printf("%8.4f %10s\n", r.sigma, "infeasible");
    }
    if (t.best) std::printf("best: sigma=%.4f h=%.5f mean SCS %.2f\n", t.rows[*t.best].sigma, *t.rows[*t.best].h_max,
                            t.rows[*t.best].scs_mean());
    if (!csv.empty()) {
        std::ofstream f(csv);
        design::write_sweep_csv(t, f);
        std::cout << "wrote " << csv << "\n";
    } else {
        design::write_sweep_csv(t, std::cout);
    }
    return 0;
}

int cmd_table1(int runs, std::uint64_t seed, bool bisect, const std::string& csv) {
    bench::Table1Options o;
    o.bisect = bisect;
    o.log = &std::cerr;
    const auto rep = bench::table1(seed, runs, o);
    bench::write_report_text(rep, std::cout);
    if (!csv.empty()) {
        std::ofstream f(csv);
        bench::write_report_csv(rep, f);
        std::cout << "wrote " << csv << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predictor-based networked control: certificates, design and simulation"};
    app.require_subcommand(1);

    std::string family, cfg_path, out, sdpa, csv;
    bool bisect = false;
    auto* certify = app.add_subcommand("certify", "check a certificate family's LMIs for a config");
    certify->add_option("--family", family, "lemma1 | prop1 | lemma2 | prop3")->required();
    certify->add_option("--config", cfg_path, "config file (JSON)")->required()->check(CLI::ExistingFile);
    certify->add_flag("--bisect-h", bisect, "also search the largest certified h");
    certify->add_option("--out", out, "write the certificate (JSON)");
    certify->add_option("--sdpa", sdpa, "export the SDP in sparse SDPA format");

    auto* dsg = app.add_subcommand("design", "synthesize a gain (family from certify.method)");
    dsg->add_option("--config", cfg_path, "config file (JSON)")->required()->check(CLI::ExistingFile);

    auto* sim = app.add_subcommand("simulate", "simulate the closed loop and write CSV / plot data");
    sim->add_option("--config", cfg_path, "config file (JSON)")->required()->check(CLI::ExistingFile);
    sim->add_option("--out", out, "output directory")->required();

    double from = 0.0, to = 0.0, step = 0.01;
    int runs = 20;
    auto* sweep = app.add_subcommand("sweep", "largest h and SCS statistics over a sigma grid");
    sweep->add_option("--family", family, "lemma1 | prop1 | lemma2 | prop3")->required();
    sweep->add_option("--sigma-from", from)->required();
    sweep->add_option("--sigma-to", to)->required();
    sweep->add_option("--step", step)->required();
    sweep->add_option("--config", cfg_path, "config file (default: pendulum)")->check(CLI::ExistingFile);
    sweep->add_option("--runs", runs, "simulations per sigma")->check(CLI::PositiveNumber);
    sweep->add_option("--csv", csv, "write the sweep CSV here instead of stdout");

    std::uint64_t seed = 1;
    bool no_bisect = false;
    auto* bench_cmd = app.add_subcommand("bench", "benchmarks");
    bench_cmd->require_subcommand(1);
    auto* t1 = bench_cmd->add_subcommand("table1", "sent control signals for the pendulum strategies");
    t1->add_option("--runs", runs, "seeded runs per cell")->check(CLI::PositiveNumber);
    t1->add_option("--seed", seed, "first seed");
    t1->add_option("--csv", csv, "also write the report as CSV");
    t1->add_flag("--no-bisect", no_bisect, "skip the certified-h column");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*certify) return cmd_certify(family, cfg_path, bisect, out, sdpa);
        if (*dsg) return cmd_design(cfg_path);
        if (*sim) return cmd_simulate(cfg_path, out);
        if (*sweep) return cmd_sweep(family, from, to, step, cfg_path, runs, csv);
        if (*t1) return cmd_table1(runs, seed, !no_bisect, csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
