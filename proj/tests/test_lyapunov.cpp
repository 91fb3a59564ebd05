#include <gtest/gtest.h>

#include "helpers.hpp"
#include "netpred/lyapunov.hpp"

using namespace netpred;
using namespace netpred::lmi;

namespace {

// scalar lemma1-shaped certificate; tau_bar = 0.1, r0 + r1 = 0.2, tau_max = 0.3
Certificate scalar_cert(double alpha, double P, double S0, double R0, double S, double S1, double R1) {
    Certificate c;
    c.family = Family::Lemma1;
    c.params = {{"alpha", alpha}, {"tau_bar", 0.1}, {"tau_max", 0.3}, {"r0", 0.1}, {"r1", 0.1}};
    auto sc = [](double v) { return Matrix::Constant(1, 1, v); };
    c.values = {{"P", sc(P)}, {"S0", sc(S0)}, {"R0", sc(R0)}, {"S", sc(S)}, {"S1", sc(S1)}, {"R1", sc(R1)}};
    return c;
}

SimResult scalar_run(double T, double dt, const std::function<double(double)>& z) {
    SimResult r;
    for (int i = 0; i * dt <= T + 1e-12; ++i) {
        const double t = i * dt;
        r.trajectory.push_back({t, Vector::Zero(1), Vector::Constant(1, z(t)), Vector::Zero(1), false});
    }
    return r;
}

} // namespace

TEST(Functional, Window) {
    const auto c = scalar_cert(0.01, 1, 1, 1, 1, 1, 1);
    EXPECT_DOUBLE_EQ(functional_window(c), 0.3);
    EXPECT_EQ(functional_terms(c).size(), 5u);
    Certificate custom;
    EXPECT_THROW((void)functional_terms(custom), DomainError);
}

TEST(Functional, ZeroTrajectory) {
    const auto c = scalar_cert(0.01, 2, 1, 3, 1, 1, 4);
    const auto r = scalar_run(1.0, 0.01, [](double) { return 0.0; });
    EXPECT_EQ(evaluate_V(c, r, 0.5), 0.0);
}

TEST(Functional, OnlyPSurvives) {
    const auto c = scalar_cert(0.0, 2.5, 0, 0, 0, 0, 0);
    const auto r = scalar_run(1.0, 0.01, [](double t) { return std::sin(3 * t); });
    EXPECT_DOUBLE_EQ(evaluate_V(c, r, 0.5), 2.5 * std::sin(1.5) * std::sin(1.5));
}

TEST(Functional, SingleIntegralWeights) {
    // constant z = 2: S0 term = 4 (1 - e^{-2 alpha tau_bar}) / (2 alpha)
    const double a = 0.5;
    const auto c = scalar_cert(a, 0, 1, 0, 0, 0, 0);
    const auto r = scalar_run(1.0, 1e-3, [](double) { return 2.0; });
    const double exact = 4.0 * (1.0 - std::exp(-2.0 * a * 0.1)) / (2.0 * a);
    EXPECT_NEAR(evaluate_V(c, r, 0.6), exact, 1e-7 * exact);
}

TEST(Functional, DoubleIntegralReduction) {
    // z(s) = s, zdot = 1, alpha = 0: R0 term = tau_bar * int_{-tb}^0 int_{t+th}^t ds dth = tb * tb^2 / 2
    const auto c = scalar_cert(0.0, 0, 0, 1, 0, 0, 0);
    const auto r = scalar_run(1.0, 1e-3, [](double t) { return t; });
    EXPECT_NEAR(evaluate_V(c, r, 0.7), 0.1 * 0.01 / 2.0, 1e-12);
    // R1 over [r, tau_max] = [0.2, 0.3], coef 0.1: coef * int_{-0.3}^{-0.2} (-th) dth = 0.1 * 0.025
    const auto d = scalar_cert(0.0, 0, 0, 0, 0, 0, 1);
    EXPECT_NEAR(evaluate_V(d, r, 0.7), 0.1 * 0.025, 1e-12);
}

TEST(Functional, InsufficientHistory) {
    const auto c = scalar_cert(0.01, 1, 1, 1, 1, 1, 1);
    const auto r = scalar_run(1.0, 0.01, [](double t) { return t; });
    EXPECT_THROW((void)evaluate_V(c, r, 0.2), PreconditionError);
    EXPECT_THROW((void)evaluate_V(c, r, 1.5), PreconditionError);
    SimResult nz = r;
    for (auto& s : nz.trajectory) s.z.reset();
    EXPECT_THROW((void)evaluate_V(c, nz, 0.5), PreconditionError);
}

TEST(Functional, CertifiedRunDecays) {
    const auto pd = bench::pendulum();
    const DelayProfile p{0.2, 0.2, 0.01, 0.01, 0.034};
    const auto res = check_feasible(build_lemma1(pd.plant, pd.gain, p, 0.01, 0.0));
    ASSERT_TRUE(res.certificate) << res.diagnostic;
    const auto run = run_sampled(pd.plant, pd.gain, p, TriggerParams::periodic(1, p.h), Scenario::SampledPredictor,
                                 nptest::pendulum_cfg(6.0, 2));
    const double alpha = 0.01, t0 = functional_window(*res.certificate);
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 20; ++i) {
        const double t = t0 + (6.0 - t0) * i / 19.0;
        const double w = evaluate_V(*res.certificate, run, t) * std::exp(2 * alpha * t);
        EXPECT_LE(w, prev * (1 + 1e-3)) << "t = " << t;
        prev = w;
    }
}
