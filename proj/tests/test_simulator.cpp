#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"

using namespace netpred;
using nptest::rel;

namespace {

const DelayProfile kSec5{0.2, 0.2, 0.01, 0.01, 0.0369};

TriggerParams et(double sigma, double wait) { return TriggerParams(Matrix::Identity(1, 1), sigma, wait); }

} // namespace

TEST(Timeline, NoJitter) {
    const DelayProfile p{0.2, 0.3, 0.0, 0.0, 0.05};
    const auto tl = generate_timeline(p, 1.0, 7);
    ASSERT_EQ(tl.size(), 21u);
    for (std::size_t k = 0; k < tl.size(); ++k) {
        EXPECT_DOUBLE_EQ(tl.xi[k], 0.05 * static_cast<double>(k) + 0.2);
        EXPECT_DOUBLE_EQ(tl.t[k], 0.05 * static_cast<double>(k) + 0.5);
    }
    EXPECT_EQ(tl.check(p), "");
}

TEST(Timeline, SamplingInstantCount) {
    EXPECT_EQ(generate_timeline(kSec5, 20.0, 1).size(), 543u);
    EXPECT_EQ(generate_timeline({0.0, 0.2, 0.0, 0.01, 0.0646}, 20.0, 1).size(), 310u);
}

TEST(Timeline, ClampingProperty) {
    const DelayProfile p{0.2, 0.2, 0.08, 0.06, 0.0369}; // eta_max, mu_max > h
    bool clamped_xi = false, clamped_t = false;
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        const auto tl = generate_timeline(p, 2.0, seed);
        ASSERT_EQ(tl.check(p), "") << "seed " << seed;
        for (std::size_t k = 0; k < tl.size(); ++k) {
            clamped_xi = clamped_xi || tl.xi[k] > tl.s[k] + p.r0 + tl.eta[k];
            clamped_t = clamped_t || tl.t[k] > tl.xi[k] + p.r1 + tl.mu[k];
        }
    }
    EXPECT_TRUE(clamped_xi);
    EXPECT_TRUE(clamped_t);
}

TEST(Timeline, SeedDeterminism) {
    const auto a = generate_timeline(kSec5, 5.0, 11);
    const auto b = generate_timeline(kSec5, 5.0, 11);
    const auto c = generate_timeline(kSec5, 5.0, 12);
    EXPECT_EQ(a.xi, b.xi);
    EXPECT_EQ(a.t, b.t);
    EXPECT_NE(a.xi, c.xi);
}

TEST(Trigger, Examples) {
    const Vector one = Vector::Constant(1, 1.0);
    EXPECT_TRUE(trigger_decide(et(0.0, 0.1), one, Vector::Constant(1, 1.0 + 1e-9)));
    EXPECT_FALSE(trigger_decide(et(0.0, 0.1), one, one));
    EXPECT_FALSE(trigger_decide(et(0.5, 0.1), one, one));
    EXPECT_FALSE(trigger_decide(et(0.04, 0.1), one, Vector::Constant(1, 1.1)));
    EXPECT_TRUE(trigger_decide(et(0.04, 0.1), one, Vector::Constant(1, 1.3)));
    EXPECT_THROW((void)trigger_decide(et(0.04, 0.1), Vector::Zero(2), one), DimensionError);
}

TEST(SwitchEvent, ZeroThreshold) {
    auto u = [](double t) { return Vector::Constant(1, std::cos(t)); };
    EXPECT_DOUBLE_EQ(detect_switch_event(u, 0.3, et(0.0, 0.105)), 0.3 + 0.105);
}

TEST(SwitchEvent, ConstantSignal) {
    auto u = [](double) { return Vector::Constant(1, 2.0); };
    EXPECT_TRUE(std::isinf(detect_switch_event(u, 0.0, et(0.13, 0.105), 50.0)));
    EXPECT_TRUE(std::isinf(detect_switch_event(u, 0.0, et(0.0, 0.105), 50.0)));
}

TEST(SwitchEvent, ClosedFormRoot) {
    auto u = [](double t) { return Vector::Constant(1, std::exp(-t)); };
    const double root = std::log(1.0 + std::sqrt(0.13));
    EXPECT_NEAR(detect_switch_event(u, 0.0, et(0.13, 0.105)), root, 1e-8);
}

TEST(SwitchEvent, NoCrossingBeforeHorizon) {
    auto u = [](double t) { return Vector::Constant(1, std::exp(-t)); };
    EXPECT_TRUE(std::isinf(detect_switch_event(u, 0.0, et(0.13, 0.105), 0.2)));
}

TEST(RunSampled, ZeroGainAtEquilibrium) {
    const auto p = nptest::pendulum_plant();
    const Gain K(Matrix::Zero(1, 4));
    auto cfg = nptest::pendulum_cfg(2.0);
    cfg.x0 = Vector::Zero(4);
    for (auto sc : {Scenario::SampledPredictor, Scenario::SampledEventTriggered}) {
        const auto r = run_sampled(p, K, kSec5, et(0.01, kSec5.h), sc, cfg);
        EXPECT_EQ(r.scs, 0);
        EXPECT_EQ(r.measurements_sent, static_cast<int>(r.timeline.size()));
        for (const auto& s : r.trajectory) EXPECT_EQ(s.x.norm(), 0.0);
    }
}

TEST(RunSampled, PeriodicCount) {
    const auto pd = bench::pendulum();
    auto cfg = nptest::pendulum_cfg();
    cfg.compute_z = false;
    const auto r = run_sampled(pd.plant, pd.gain, kSec5, et(0.0, kSec5.h), Scenario::SampledPredictor, cfg);
    EXPECT_EQ(r.scs, 543);
    EXPECT_EQ(r.measurements_sent, 543);
    EXPECT_FALSE(r.diverged);
    EXPECT_LT(r.trajectory.back().x.norm(), 0.2 * cfg.x0.norm());
}

TEST(RunSampled, AppliedInputChangesOnlyAtActuatorTimes) {
    const auto pd = bench::pendulum();
    auto cfg = nptest::pendulum_cfg(3.0, 4);
    const auto r = run_sampled(pd.plant, pd.gain, kSec5, et(0.01, 0.0315), Scenario::SampledEventTriggered, cfg);
    std::vector<double> tk;
    for (std::size_t k = 0; k < r.timeline.size(); ++k)
        if (r.triggers[k]) tk.push_back(r.timeline.t[k]);
    for (std::size_t i = 1; i < r.trajectory.size(); ++i) {
        if (r.trajectory[i].u == r.trajectory[i - 1].u) continue;
        const double t = r.trajectory[i].t;
        EXPECT_TRUE(std::any_of(tk.begin(), tk.end(), [&](double v) { return v == t; })) << "u changed at " << t;
    }
    EXPECT_LE(r.scs, static_cast<int>(r.timeline.size()));
}

TEST(RunSampled, Determinism) {
    const auto pd = bench::pendulum();
    const auto cfg = nptest::pendulum_cfg(5.0, 9);
    const auto a = run_sampled(pd.plant, pd.gain, kSec5, et(0.01, 0.0315), Scenario::SampledEventTriggered, cfg);
    const auto b = run_sampled(pd.plant, pd.gain, kSec5, et(0.01, 0.0315), Scenario::SampledEventTriggered, cfg);
    ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
    EXPECT_EQ(a.scs, b.scs);
    EXPECT_EQ(a.triggers, b.triggers);
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
        EXPECT_EQ(a.trajectory[i].t, b.trajectory[i].t);
        EXPECT_TRUE(a.trajectory[i].x == b.trajectory[i].x);
    }
}

TEST(RunSampled, EventTriggeredNeverExceedsPeriodic) {
    const auto pd = bench::pendulum();
    DelayProfile p = kSec5;
    p.h = 0.0315;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = nptest::pendulum_cfg(20.0, seed);
        cfg.compute_z = false;
        const auto r = run_sampled(pd.plant, pd.gain, p, et(0.01, p.h), Scenario::SampledEventTriggered, cfg);
        EXPECT_LE(r.scs, 635);
        EXPECT_GT(r.scs, 0);
    }
}

TEST(RunSampled, ScenarioChecks) {
    const auto pd = bench::pendulum();
    const auto cfg = nptest::pendulum_cfg(1.0);
    EXPECT_THROW((void)run_sampled(pd.plant, pd.gain, kSec5, et(0.0, 0.1), Scenario::ContinuousPredictor, cfg),
                 PreconditionError);
    auto bad = cfg;
    bad.x0 = Vector::Zero(3);
    EXPECT_THROW((void)run_sampled(pd.plant, pd.gain, kSec5, et(0.0, 0.1), Scenario::SampledPredictor, bad),
                 DimensionError);
}

TEST(RunSampled, ShortHorizonWarns) {
    const auto pd = bench::pendulum();
    const auto r =
        run_sampled(pd.plant, pd.gain, kSec5, et(0.0, 0.1), Scenario::SampledPredictor, nptest::pendulum_cfg(0.3));
    EXPECT_FALSE(r.warnings.empty());
}

namespace {

// max_k |z(s_k) - x(s_k + r0 + r1)| / |x(s_k + r0 + r1)| over predictions landing inside the run
double prediction_error(const SimResult& r, const LtiPlant& plant, const DelayProfile& p, double T) {
    double worst = 0.0;
    for (std::size_t k = 0; k < r.predictions.size(); ++k) {
        const double target = r.timeline.s[k] + p.r0 + p.r1;
        if (target > T) break;
        const Vector x = state_at(r, plant, target);
        worst = std::max(worst, (r.predictions[k] - x).norm() / x.norm());
    }
    return worst;
}

} // namespace

TEST(PredictorExactness, TransmittedVariant) {
    const auto pd = bench::pendulum();
    const DelayProfile p{0.2, 0.2, 0.0, 0.0, 0.0315};
    auto cfg = nptest::pendulum_cfg(10.0, 3);
    cfg.variant = PredictorVariant::Transmitted;
    const auto r = run_sampled(pd.plant, pd.gain, p, et(0.01, p.h), Scenario::SampledEventTriggered, cfg);
    EXPECT_LT(r.scs, static_cast<int>(r.timeline.size())); // some updates held back
    EXPECT_LE(prediction_error(r, pd.plant, p, 10.0), 1e-8);
}

TEST(PredictorExactness, ComputedVariant) {
    const auto pd = bench::pendulum();
    const DelayProfile p{0.2, 0.2, 0.0, 0.0, 0.0369};
    auto cfg = nptest::pendulum_cfg(10.0, 3);
    cfg.variant = PredictorVariant::Computed;
    const auto r = run_sampled(pd.plant, pd.gain, p, et(0.0, p.h), Scenario::SampledPredictor, cfg);
    EXPECT_LE(prediction_error(r, pd.plant, p, 10.0), 1e-8);
}

TEST(PredictorExactness, LoggedZLeadsTheState) {
    // with no jitter z(t) = x(t + r0 + r1) on the whole log grid
    const auto pd = bench::pendulum();
    const DelayProfile p{0.1, 0.2, 0.0, 0.0, 0.05};
    const auto r =
        run_sampled(pd.plant, pd.gain, p, et(0.0, p.h), Scenario::SampledPredictor, nptest::pendulum_cfg(6.0));
    double worst = 0.0;
    for (const auto& s : r.trajectory) {
        if (s.t + 0.3 > 6.0) break;
        ASSERT_TRUE(s.z.has_value());
        const Vector x = state_at(r, pd.plant, s.t + 0.3);
        worst = std::max(worst, (*s.z - x).norm() / std::max(1e-3, x.norm()));
    }
    EXPECT_LE(worst, 1e-8);
}

TEST(RunContinuous, ZeroGain) {
    const auto p = nptest::pendulum_plant();
    const Gain K(Matrix::Zero(1, 4));
    auto cfg = nptest::pendulum_cfg(3.0);
    cfg.x0 *= 1e-3;
    const auto r = run_continuous(p, K, 0.2, 0.01, et(0.13, 0.105), Scenario::SwitchingEventTriggered, cfg);
    EXPECT_EQ(r.scs, 1);
    EXPECT_LT(rel(r.trajectory.back().x, expm(p.A(), 3.0) * cfg.x0), 1e-10);
}

TEST(RunContinuous, PeriodicCountAndDecay) {
    const auto pd = bench::pendulum();
    const auto r = run_continuous(pd.plant, pd.gain, 0.2, 0.01, et(0.0, 0.105), Scenario::ContinuousPredictor,
                                  nptest::pendulum_cfg());
    EXPECT_NEAR(r.scs, 191, 1);
    EXPECT_FALSE(r.diverged);
    EXPECT_GE(fit_decay(r, 0.01), 0.0);
    EXPECT_EQ(r.timeline.check({0.0, 0.2, 0.0, 0.01, 0.105}), "");
}

TEST(RunContinuous, SwitchingSendsLess) {
    const auto pd = bench::pendulum();
    const auto r = run_continuous(pd.plant, pd.gain, 0.2, 0.01, et(0.13, 0.105), Scenario::SwitchingEventTriggered,
                                  nptest::pendulum_cfg(20.0, 2));
    EXPECT_LT(r.scs, 191);
    EXPECT_GT(r.scs, 10);
    for (std::size_t k = 1; k < r.timeline.size(); ++k)
        EXPECT_GE(r.timeline.xi[k] - r.timeline.xi[k - 1], 0.105 - 1e-12);
}

TEST(RunContinuous, RejectsSampledScenario) {
    const auto pd = bench::pendulum();
    EXPECT_THROW((void)run_continuous(pd.plant, pd.gain, 0.2, 0.0, et(0.0, 0.1), Scenario::SampledPredictor,
                                      nptest::pendulum_cfg(1.0)),
                 PreconditionError);
}

TEST(RunUnpredicted, SmallPeriodIsStable) {
    const auto pd = bench::pendulum();
    const auto cfg = nptest::pendulum_cfg(20.0);
    const auto r = run_unpredicted(pd.plant, pd.gain, {0.0, 0.0, 0.0, 0.0, 1e-3}, cfg);
    EXPECT_FALSE(r.diverged);
    const Matrix Acl = pd.plant.A() + pd.plant.B() * pd.gain.K();
    // sampled-data loop approaches the continuous one as h -> 0
    EXPECT_LT(rel(r.trajectory.back().x, expm(Acl, 20.0) * cfg.x0), 1e-2);
    EXPECT_LT(r.trajectory.back().x.norm(), cfg.x0.norm());
}

TEST(RunUnpredicted, ZeroStateStaysZero) {
    const auto pd = bench::pendulum();
    auto cfg = nptest::pendulum_cfg(5.0);
    cfg.x0.setZero();
    const auto r = run_unpredicted(pd.plant, pd.gain, {0.1, 0.1, 0.0, 0.0, 0.0369}, cfg);
    EXPECT_EQ(r.trajectory.back().x.norm(), 0.0);
}

TEST(RunUnpredicted, LargerDelayDiverges) {
    const auto pd = bench::pendulum();
    const auto r = run_unpredicted(pd.plant, pd.gain, {0.12, 0.12, 0.0, 0.0, 0.0369}, nptest::pendulum_cfg());
    EXPECT_GT(r.trajectory.back().x.norm(), 10.0 * nptest::pendulum_cfg().x0.norm());
    EXPECT_LT(fit_decay(r, 0.01), 0.0);
}

TEST(FitDecay, ScalarExponential) {
    const LtiPlant p(Matrix::Constant(1, 1, -1.0), Matrix::Identity(1, 1));
    const Gain K(Matrix::Zero(1, 1));
    SimConfig cfg;
    cfg.x0 = Vector::Constant(1, 1.0);
    cfg.horizon = 10.0;
    const auto r = run_sampled(p, K, {0.0, 0.0, 0.0, 0.0, 0.1}, et(0.0, 0.1), Scenario::SampledPredictor, cfg);
    EXPECT_NEAR(fit_decay(r, 0.5), 0.5, 1e-9);
}

TEST(Csv, Headers) {
    const auto pd = bench::pendulum();
    const auto r =
        run_sampled(pd.plant, pd.gain, kSec5, et(0.0, kSec5.h), Scenario::SampledPredictor, nptest::pendulum_cfg(1.0));
    std::ostringstream a, b;
    write_trajectory_csv(r, a);
    write_timeline_csv(r, b);
    EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "t,x1,x2,x3,x4,z1,z2,z3,z4,u1,transmitted");
    EXPECT_EQ(b.str().substr(0, b.str().find('\n')), "k,s,eta,mu,xi,t,transmitted");
    const std::string tl = b.str();
    const auto lines = std::count(tl.begin(), tl.end(), '\n');
    EXPECT_EQ(static_cast<std::size_t>(lines), r.timeline.size() + 1);
}

TEST(PredictorExactness, ReducedEquation) {
    // eta = mu = 0, sigma = 0: z solves z' = A z + B K z(s_k) on [s_k, s_k+1),
    // z(0) = e^{A(r0+r1)} x0; integrate that directly and compare at the s_k
    const auto pd = bench::pendulum();
    const DelayProfile p{0.2, 0.2, 0.0, 0.0, 0.0369};
    const double T = 10.0;
    const auto r =
        run_sampled(pd.plant, pd.gain, p, et(0.0, p.h), Scenario::SampledPredictor, nptest::pendulum_cfg(T));
    const ZohPair zp = zoh_discretize(pd.plant, p.h);
    const Matrix step = zp.Ad + zp.Bd * pd.gain.K();
    Vector z = expm(pd.plant.A(), 0.4) * bench::pendulum_x0();
    double worst = 0.0;
    for (std::size_t k = 0; k < r.predictions.size(); ++k) {
        worst = std::max(worst, (r.predictions[k] - z).norm() / z.norm());
        z = step * z;
    }
    EXPECT_LE(worst, 1e-6);
}
