#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"

using namespace netpred;
using namespace netpred::lmi;

namespace {

const DelayProfile kSec5{0.2, 0.2, 0.01, 0.01, 0.0369};

Values random_values(const LmiProblem& P, std::mt19937_64& g) {
    Values v;
    for (const auto& var : P.variables()) {
        Matrix M = nptest::random_matrix(g, var.rows, var.cols);
        if (var.shape == Shape::Symmetric) M = (M + M.transpose()).eval();
        v[var.name] = M;
    }
    return v;
}

std::string sdpa(const LmiProblem& P) {
    std::ostringstream os;
    export_sdpa(P, os);
    return os.str();
}

LmiProblem toy() {
    LmiProblem P;
    BlockTable T({1});
    T.set(0, 0, Expr::constant(Matrix::Identity(1, 1)));
    P.add_constraint("one", std::move(T), Sense::NegSemidef);
    return P;
}

} // namespace

TEST(Families, Names) {
    for (auto f : {Family::Lemma1, Family::Prop1, Family::Lemma2, Family::Prop3, Family::Custom})
        EXPECT_EQ(family_from_string(to_string(f)), f);
    EXPECT_THROW((void)family_from_string("lemma3"), DomainError);
}

TEST(Lemma1, Dimensions) {
    const auto pd = bench::pendulum();
    const auto P = build_lemma1(pd.plant, pd.gain, kSec5, 0.01, 0.0);
    ASSERT_FALSE(P.constraints().empty());
    EXPECT_EQ(P.constraints().front().table.dim(), 33);
    // Phi plus the R0/G0 couple and three R1/Gi couples
    EXPECT_EQ(P.constraints().size(), 5u);
    for (const char* v : {"P", "S", "S0", "S1", "R0", "R1", "Omega", "P2", "P3", "G0", "G1", "G2", "G3"})
        EXPECT_TRUE(P.find(v).has_value()) << v;
    EXPECT_NEAR(P.params.at("tau_bar"), 0.0469, 1e-15);
    EXPECT_NEAR(P.params.at("tau_max"), 0.4569, 1e-15);
}

TEST(Lemma1, PreconditionNamesTheInequality) {
    const auto pd = bench::pendulum();
    try {
        (void)build_lemma1(pd.plant, pd.gain, {0.01, 0.01, 0.01, 0.0, 0.05}, 0.01, 0.0);
        FAIL();
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("h + eta_max <= r0 + r1"), std::string::npos);
    }
    EXPECT_THROW((void)build_lemma1(pd.plant, pd.gain, kSec5, 0.0, 0.0), PreconditionError);
    EXPECT_THROW((void)build_lemma1(pd.plant, pd.gain, kSec5, 0.01, 1.0), PreconditionError);
}

TEST(Lemma1, GoldenCornerBlock) {
    // Phi_11 = 2 alpha P + S0 - rho_bar R0 + P2^T A + A^T P2
    const auto pd = bench::pendulum();
    const auto P = build_lemma1(pd.plant, pd.gain, kSec5, 0.01, 0.0);
    std::mt19937_64 g(1);
    const auto v = random_values(P, g);
    const Matrix Phi = evaluate_constraint(P, P.constraints().front(), v);
    const Matrix& A = pd.plant.A();
    const double rb = std::exp(-2.0 * 0.01 * 0.0469);
    const Matrix expect =
        2.0 * 0.01 * v.at("P") + v.at("S0") - rb * v.at("R0") + v.at("P2").transpose() * A + A.transpose() * v.at("P2");
    EXPECT_LT((Phi.topLeftCorner(4, 4) - expect).norm(), 1e-12);
    // Phi_99 = -Omega
    EXPECT_EQ(Phi(32, 32), -v.at("Omega")(0, 0));
}

TEST(Builders, SymmetricByConstruction) {
    const auto pd = bench::pendulum();
    std::mt19937_64 g(7);
    const std::vector<LmiProblem> problems{
        build_lemma1(pd.plant, pd.gain, kSec5, 0.01, 0.01),
        build_prop1(pd.plant, pd.gain, {0.0, 0.2, 0.0, 0.0, 0.046}, 0.01, 0.07),
        build_lemma2(pd.plant, pd.gain, 0.2, 0.01, 0.105, 0.01, 0.13),
        build_prop3(pd.plant, pd.gain, 0.105, 0.01, 0.1),
    };
    for (const auto& P : problems)
        for (int trial = 0; trial < 5; ++trial) {
            const auto v = random_values(P, g);
            for (const auto& c : P.constraints()) {
                const Matrix M = evaluate_constraint(P, c, v);
                EXPECT_EQ((M - M.transpose()).norm(), 0.0) << to_string(P.family) << " " << c.name;
            }
        }
}

TEST(Builders, BlockSizes) {
    const auto pd = bench::pendulum();
    const auto p1 = build_prop1(pd.plant, pd.gain, {0.0, 0.2, 0.0, 0.0, 0.046}, 0.01, 0.07);
    EXPECT_EQ(p1.constraints().front().table.dim(), 17);
    const auto l2 = build_lemma2(pd.plant, pd.gain, 0.2, 0.01, 0.105, 0.01, 0.13);
    EXPECT_EQ(l2.constraints()[0].table.dim(), 24);
    EXPECT_EQ(l2.constraints()[1].table.dim(), 25);
    const auto p3 = build_prop3(pd.plant, pd.gain, 0.105, 0.01, 0.1);
    EXPECT_EQ(p3.constraints()[0].table.dim(), 16);
    EXPECT_EQ(p3.constraints()[1].table.dim(), 13);
}

TEST(Prop1, IndependentOfTransportDelays) {
    const auto pd = bench::pendulum();
    const auto a = build_prop1(pd.plant, pd.gain, {0.0, 0.2, 0.0, 0.0, 0.046}, 0.01, 0.07);
    const auto b = build_prop1(pd.plant, pd.gain, {0.3, 0.7, 0.0, 0.0, 0.046}, 0.01, 0.07);
    EXPECT_EQ(sdpa(a), sdpa(b));
    EXPECT_EQ(a.params, b.params);
    EXPECT_THROW((void)build_prop1(pd.plant, pd.gain, {0.0, 0.2, 0.0, 0.01, 0.046}, 0.01, 0.07), PreconditionError);
}

TEST(Prop3, NoTransportDelay) {
    const auto pd = bench::pendulum();
    EXPECT_THROW((void)build_prop3(pd.plant, pd.gain, 0.105, 0.01, 0.0, 0.01), PreconditionError);
    EXPECT_EQ(build_prop3(pd.plant, pd.gain, 0.105, 0.01, 0.0).params.count("r1"), 0u);
}

TEST(Lemma2, ZeroJitterWarns) {
    const auto pd = bench::pendulum();
    EXPECT_FALSE(build_lemma2(pd.plant, pd.gain, 0.2, 0.0, 0.105, 0.01, 0.0).warnings.empty());
    EXPECT_TRUE(build_lemma2(pd.plant, pd.gain, 0.2, 0.01, 0.105, 0.01, 0.0).warnings.empty());
}

TEST(Feasibility, ToyInfeasible) {
    const auto r = check_feasible(toy());
    EXPECT_EQ(r.verdict, Verdict::Infeasible);
    EXPECT_FALSE(r.certificate.has_value());
}

TEST(Feasibility, StableScalarNoInput) {
    const LtiPlant p(Matrix::Constant(1, 1, -1.0), Matrix::Identity(1, 1));
    const Gain K(Matrix::Zero(1, 1));
    const auto r = check_feasible(build_prop3(p, K, 0.5, 0.1, 0.0));
    ASSERT_EQ(r.verdict, Verdict::Feasible) << r.diagnostic;
    EXPECT_GT(r.certificate->at("P")(0, 0), 0.0);
}

TEST(Feasibility, UnstableScalarNoInput) {
    const LtiPlant p(Matrix::Constant(1, 1, 1.0), Matrix::Identity(1, 1));
    const Gain K(Matrix::Zero(1, 1));
    EXPECT_EQ(check_feasible(build_prop3(p, K, 0.5, 0.1, 0.0)).verdict, Verdict::Infeasible);
}

TEST(Feasibility, PendulumLemma1ReferencePeriod) {
    // the published period; it sits on the numerical feasibility boundary here
    const auto pd = bench::pendulum();
    const auto r = check_feasible(build_lemma1(pd.plant, pd.gain, kSec5, 0.01, 0.0));
    ASSERT_EQ(r.verdict, Verdict::Feasible) << r.diagnostic;
    EXPECT_LE(r.certificate->max_violation, 1e-7);
}

TEST(Feasibility, PendulumLemma1) {
    const auto pd = bench::pendulum();
    DelayProfile p = kSec5;
    p.h = 0.034;
    const auto ok = check_feasible(build_lemma1(pd.plant, pd.gain, p, 0.01, 0.0));
    ASSERT_EQ(ok.verdict, Verdict::Feasible) << ok.diagnostic;
    EXPECT_LE(ok.certificate->max_violation, 1e-7);
    for (const auto& m : ok.certificate->margins) EXPECT_GE(m.value, -1e-7) << m.name;
    const Eigen::SelfAdjointEigenSolver<Matrix> es(ok.certificate->at("P"));
    EXPECT_GE(es.eigenvalues().minCoeff(), 1e-6 - 1e-7);
    p.h = 0.2;
    EXPECT_EQ(check_feasible(build_lemma1(pd.plant, pd.gain, p, 0.01, 0.0)).verdict, Verdict::Infeasible);
}

TEST(Feasibility, PendulumProp1) {
    const auto pd = bench::pendulum();
    EXPECT_EQ(check_feasible(build_prop1(pd.plant, pd.gain, {0.0, 0.2, 0.0, 0.0, 0.046}, 0.01, 0.07)).verdict,
              Verdict::Feasible);
    EXPECT_EQ(check_feasible(build_prop1(pd.plant, pd.gain, {0.0, 0.2, 0.0, 0.0, 0.2}, 0.01, 0.07)).verdict,
              Verdict::Infeasible);
}

TEST(Feasibility, PendulumLemma2AndProp3) {
    const auto pd = bench::pendulum();
    EXPECT_EQ(check_feasible(build_lemma2(pd.plant, pd.gain, 0.2, 0.01, 0.105, 0.01, 0.0)).verdict,
              Verdict::Feasible);
    EXPECT_EQ(check_feasible(build_lemma2(pd.plant, pd.gain, 0.2, 0.01, 0.105, 0.01, 0.13)).verdict,
              Verdict::Feasible);
    EXPECT_EQ(check_feasible(build_prop3(pd.plant, pd.gain, 0.105, 0.01, 0.0)).verdict, Verdict::Feasible);
    EXPECT_EQ(check_feasible(build_prop3(pd.plant, pd.gain, 1.0, 0.01, 0.0)).verdict, Verdict::Infeasible);
}

TEST(Feasibility, SmallDelayAnchor) {
    const auto pd = bench::pendulum();
    const DelayProfile tiny{1e-6, 1e-6, 1e-6, 1e-6, 1e-6};
    const auto r = check_feasible(build_lemma1(pd.plant, pd.gain, tiny, 1e-6, 0.0));
    EXPECT_EQ(r.verdict, Verdict::Feasible) << r.diagnostic;
}

TEST(Sdpa, ToyFileLayout) {
    const std::string a = sdpa(toy());
    EXPECT_EQ(a, sdpa(toy()));
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 7);
    std::istringstream in(a);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 7u);
    EXPECT_EQ(lines[1], "1");
    EXPECT_EQ(lines[2], "1");
    EXPECT_EQ(lines[3], "1");
    EXPECT_EQ(lines[4], "-1");
    EXPECT_EQ(lines[5], "0 1 1 1 1");
    EXPECT_EQ(lines[6], "1 1 1 1 -1");
}

TEST(Sdpa, RefusesEmptyProblem) {
    std::ostringstream os;
    EXPECT_THROW(export_sdpa(LmiProblem{}, os), PreconditionError);
}

TEST(Sdpa, PendulumRoundTrip) {
    const auto pd = bench::pendulum();
    const std::string a = sdpa(build_lemma1(pd.plant, pd.gain, kSec5, 0.01, 0.0));
    std::istringstream in(a);
    const auto Q = sdp::read_sdpa(in);
    std::ostringstream b;
    sdp::write_sdpa(Q, b, a.substr(1, a.find('\n') - 1));
    EXPECT_EQ(a, b.str());
    // file export matches the stream export
    const auto path = std::filesystem::temp_directory_path() / "netpred_test_lemma1.dat-s";
    export_sdpa(build_lemma1(pd.plant, pd.gain, kSec5, 0.01, 0.0), path.string());
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    EXPECT_EQ(ss.str(), a);
    std::filesystem::remove(path);
}

TEST(Certificate, JsonRoundTrip) {
    const auto pd = bench::pendulum();
    DelayProfile p = kSec5;
    p.h = 0.034;
    const auto r = check_feasible(build_lemma1(pd.plant, pd.gain, p, 0.01, 0.0));
    ASSERT_TRUE(r.certificate);
    const auto path = std::filesystem::temp_directory_path() / "netpred_test_cert.json";
    save_certificate(*r.certificate, path.string());
    const Certificate c = load_certificate(path.string());
    std::filesystem::remove(path);
    EXPECT_EQ(c.family, Family::Lemma1);
    EXPECT_EQ(c.params, r.certificate->params);
    ASSERT_EQ(c.values.size(), r.certificate->values.size());
    for (const auto& [name, M] : r.certificate->values) EXPECT_TRUE(c.at(name) == M) << name;
    EXPECT_EQ(c.max_violation, r.certificate->max_violation);
    EXPECT_EQ(c.margins.size(), r.certificate->margins.size());
    EXPECT_THROW((void)c.at("nope"), DomainError);
}
