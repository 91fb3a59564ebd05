#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "netpred/lmi_expr.hpp"
#include "netpred/matexp.hpp"
#include "netpred/model.hpp"
#include "netpred/sdp.hpp"

namespace netpred::lmi {

enum class Family { Lemma1, Prop1, Lemma2, Prop3, Custom };

[[nodiscard]] inline std::string_view to_string(Family f) {
    switch (f) {
    case Family::Lemma1: return "lemma1";
    case Family::Prop1: return "prop1";
    case Family::Lemma2: return "lemma2";
    case Family::Prop3: return "prop3";
    case Family::Custom: return "custom";
    }
    return "?";
}

[[nodiscard]] inline Family family_from_string(std::string_view s) {
    if (s == "lemma1") return Family::Lemma1;
    if (s == "prop1") return Family::Prop1;
    if (s == "lemma2") return Family::Lemma2;
    if (s == "prop3") return Family::Prop3;
    if (s == "custom") return Family::Custom;
    throw DomainError("unknown LMI family '" + std::string(s) + "'");
}

enum class Sense { NegSemidef, PosSemidef };

struct Constraint {
    std::string name;
    BlockTable table;
    Sense sense;
};

// ============================================================================
// Problem
// ============================================================================

class LmiProblem {
public:
    LmiProblem() = default;
    explicit LmiProblem(Family f) : family(f) {}

    Family family = Family::Custom;
    std::map<std::string, double> params;
    std::vector<std::string> warnings;

    VarId add_symmetric(std::string name, Eigen::Index k, Cone cone = Cone::Free) {
        return add({std::move(name), k, k, Shape::Symmetric, cone});
    }
    VarId add_full(std::string name, Eigen::Index rows, Eigen::Index cols) {
        return add({std::move(name), rows, cols, Shape::Full, Cone::Free});
    }

    [[nodiscard]] Expr operator()(VarId v) const { return Expr::of(v, var(v)); }
    [[nodiscard]] const Variable& var(VarId v) const { return vars_.at(static_cast<std::size_t>(v.index)); }
    [[nodiscard]] const std::vector<Variable>& variables() const { return vars_; }
    [[nodiscard]] const std::vector<Constraint>& constraints() const { return cons_; }

    [[nodiscard]] std::optional<VarId> find(std::string_view name) const {
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i].name == name) return VarId{static_cast<int>(i)};
        return std::nullopt;
    }

    void add_constraint(std::string name, BlockTable table, Sense sense) {
        for (const auto& [key, e] : table.blocks())
            for (const auto& t : e.terms())
                if (t.var.index < 0 || t.var.index >= static_cast<int>(vars_.size()))
                    throw DimensionError("LmiProblem: constraint '" + name + "' uses an unknown variable");
        cons_.push_back({std::move(name), std::move(table), sense});
    }

    [[nodiscard]] Eigen::Index total_dofs() const {
        Eigen::Index d = 0;
        for (const auto& v : vars_) d += v.dofs();
        return d;
    }

    /// true when no constraint has a constant term
    [[nodiscard]] bool homogeneous() const {
        for (const auto& c : cons_)
            for (const auto& [key, e] : c.table.blocks())
                if (!e.constant_part().isZero(0.0)) return false;
        return true;
    }

private:
    VarId add(Variable v) {
        if (v.rows < 1 || v.cols < 1) throw DimensionError("LmiProblem: empty variable");
        if (find(v.name)) throw DomainError("LmiProblem: duplicate variable name '" + v.name + "'");
        vars_.push_back(std::move(v));
        return VarId{static_cast<int>(vars_.size()) - 1};
    }

    std::vector<Variable> vars_;
    std::vector<Constraint> cons_;
};

/// Full symmetric matrix of a block table; diagonal blocks are symmetrized.
template <class Lookup>
[[nodiscard]] Matrix assemble(const BlockTable& table, const Lookup& value_of) {
    const Eigen::Index N = table.dim();
    Matrix M = Matrix::Zero(N, N);
    for (const auto& [key, e] : table.blocks()) {
        const auto [i, j] = key;
        const Matrix B = e.evaluate(value_of);
        const Eigen::Index oi = table.offset(i), oj = table.offset(j);
        if (i == j) {
            M.block(oi, oi, B.rows(), B.cols()) = (B + B.transpose()) * 0.5;
        } else {
            M.block(oi, oj, B.rows(), B.cols()) = B;
            M.block(oj, oi, B.cols(), B.rows()) = B.transpose();
        }
    }
    return M;
}

using Values = std::map<std::string, Matrix>;

[[nodiscard]] inline Matrix evaluate_constraint(const LmiProblem& P, const Constraint& c, const Values& values) {
    return assemble(c.table, [&](VarId v) -> const Matrix& { return values.at(P.var(v).name); });
}

// ============================================================================
// Builders
//
// The block tables are written once against a symbol policy. AnalysisSymbols
// gives the plain analysis LMIs; DesignSymbols gives the congruence-transformed
// synthesis LMIs (P3 = eps1 P2, Omega = eps2 I, Y = K P2bar).
// ============================================================================

class AnalysisSymbols {
public:
    AnalysisSymbols(LmiProblem& prob, const LtiPlant& plant, const Gain& gain, double sigma)
        : prob_(prob), K_(gain.K()), n_(plant.n()), m_(plant.m()) {
        gain.check(plant);
        P2_ = prob_.add_full("P2", n_, n_);
        P3_ = prob_.add_full("P3", n_, n_);
        // sigma = 0 is the "no triggering" regime, which needs Omega > 0
        Om_ = prob_.add_symmetric("Omega", m_, sigma == 0.0 ? Cone::PsdStrict : Cone::Psd);
    }

    [[nodiscard]] Eigen::Index n() const { return n_; }
    [[nodiscard]] Eigen::Index m() const { return m_; }
    LmiProblem& problem() { return prob_; }

    Expr sym(const std::string& name, Cone cone) { return prob_(prob_.add_symmetric(name, n_, cone)); }
    Expr full(const std::string& name) { return prob_(prob_.add_full(name, n_, n_)); }

    // P2^T C, P2^T C K, P2^T C with C n x m
    Expr p2t(const Matrix& C) { return prob_(P2_).T() * C; }
    Expr p2t_k(const Matrix& C) { return prob_(P2_).T() * Matrix(C * K_); }
    Expr p2t_m(const Matrix& C) { return prob_(P2_).T() * C; }
    Expr p3t(const Matrix& C) { return prob_(P3_).T() * C; }
    Expr p3t_k(const Matrix& C) { return prob_(P3_).T() * Matrix(C * K_); }
    Expr p3t_m(const Matrix& C) { return prob_(P3_).T() * C; }
    Expr omega() { return prob_(Om_); }

    /// sigma K^T Omega K on the diagonal block `slot`
    void trigger(BlockTable& T, std::size_t slot, double sigma) {
        if (sigma == 0.0) return;
        T.add(slot, slot, sigma * (K_.transpose() * (prob_(Om_) * K_)));
    }

private:
    LmiProblem& prob_;
    Matrix K_;
    Eigen::Index n_, m_;
    VarId P2_, P3_, Om_;
};

class DesignSymbols {
public:
    DesignSymbols(LmiProblem& prob, const LtiPlant& plant, double eps1, double eps2)
        : prob_(prob), n_(plant.n()), m_(plant.m()), eps1_(eps1), eps2_(eps2) {
        if (!(eps1 > 0.0) || !(eps2 > 0.0)) throw DomainError("design: eps1, eps2 must be positive");
        Q_ = prob_.add_full("P2bar", n_, n_);
        Y_ = prob_.add_full("Y", m_, n_);
        prob_.params["eps1"] = eps1;
        prob_.params["eps2"] = eps2;
    }

    [[nodiscard]] Eigen::Index n() const { return n_; }
    [[nodiscard]] Eigen::Index m() const { return m_; }
    LmiProblem& problem() { return prob_; }

    Expr sym(const std::string& name, Cone cone) { return prob_(prob_.add_symmetric(name, n_, cone)); }
    Expr full(const std::string& name) { return prob_(prob_.add_full(name, n_, n_)); }

    Expr p2t(const Matrix& C) { return C * prob_(Q_); }
    Expr p2t_k(const Matrix& C) { return C * prob_(Y_); }
    Expr p2t_m(const Matrix& C) { return Expr::constant(C); }
    Expr p3t(const Matrix& C) { return eps1_ * p2t(C); }
    Expr p3t_k(const Matrix& C) { return eps1_ * p2t_k(C); }
    Expr p3t_m(const Matrix& C) { return Expr::constant(eps1_ * C); }
    Expr omega() { return Expr::constant(eps2_ * Matrix::Identity(m_, m_)); }

    /// sigma Y^T (eps2 I) Y by a Schur complement on an extra block row
    void trigger(BlockTable& T, std::size_t slot, double sigma) {
        if (sigma == 0.0) return;
        const std::size_t extra = T.append_slot(m_);
        T.set(extra, slot, std::sqrt(sigma) * prob_(Y_));
        T.set(extra, extra, Expr::constant(-(1.0 / eps2_) * Matrix::Identity(m_, m_)));
    }

    [[nodiscard]] VarId Q() const { return Q_; }
    [[nodiscard]] VarId Y() const { return Y_; }

private:
    LmiProblem& prob_;
    Eigen::Index n_, m_;
    double eps1_, eps2_;
    VarId Q_, Y_;
};

namespace detail {

inline void require_alpha(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw PreconditionError("decay rate alpha must be > 0");
}

inline void require_sigma(double sigma) {
    if (!(sigma >= 0.0 && sigma < 1.0)) throw PreconditionError("sigma must lie in [0, 1)");
}

inline BlockTable couple(const Expr& R, const Expr& G) {
    BlockTable T({R.rows(), R.rows()});
    T.set(0, 0, R);
    T.set(0, 1, G);
    T.set(1, 1, R);
    return T;
}

} // namespace detail

template <class Sym>
void lemma1_into(Sym& s, const LtiPlant& plant, const DelayProfile& p, double alpha, double sigma) {
    p.validate();
    detail::require_alpha(alpha);
    detail::require_sigma(sigma);
    if (!validate_assumption(p)) throw PreconditionError("lemma1 requires h + eta_max <= r0 + r1");
    const auto b = derived_bounds(p);
    const double r = p.r0 + p.r1;
    const double rb = std::exp(-2.0 * alpha * b.tau_bar);
    const double rM = std::exp(-2.0 * alpha * b.tau_max);
    const Eigen::Index n = s.n(), m = s.m();
    const Matrix& A = plant.A();
    const Matrix& B = plant.B();
    const Matrix I = Matrix::Identity(n, n);
    const Matrix EB = expm(A, r) * B;

    auto& prob = s.problem();
    prob.params = {{"alpha", alpha}, {"sigma", sigma}, {"h", p.h}, {"r0", p.r0}, {"r1", p.r1},
                   {"eta_max", p.eta_max}, {"mu_max", p.mu_max}, {"tau_bar", b.tau_bar},
                   {"tau_max", b.tau_max}, {"rho_bar", rb}, {"rho_max", rM}};

    Expr P = s.sym("P", Cone::PsdStrict);
    Expr S = s.sym("S", Cone::Psd);
    Expr S0 = s.sym("S0", Cone::Psd);
    Expr S1 = s.sym("S1", Cone::Psd);
    Expr R0 = s.sym("R0", Cone::Psd);
    Expr R1 = s.sym("R1", Cone::Psd);
    Expr G0 = s.full("G0"), G1 = s.full("G1"), G2 = s.full("G2"), G3 = s.full("G3");

    // slots: z, z', z(t-tau), z(t-tau_bar), z(t-r0-r1), z(t-tau1), z(t-tau2), z(t-tau_M), e1
    BlockTable T({n, n, n, n, n, n, n, n, m});
    const Expr F19 = s.p2t_m(EB);
    const Expr F29 = s.p3t_m(EB);
    const Expr F17 = s.p2t_k(EB);
    const Expr F27 = s.p3t_k(EB);
    T.set(0, 0, 2.0 * alpha * P + S0 - rb * R0 + s.p2t(A) + s.p2t(A).T());
    T.set(0, 1, P - s.p2t(I) + s.p3t(A).T());
    T.set(0, 2, rb * (R0 - G0) + s.p2t_k(B));
    T.set(0, 3, rb * G0);
    T.set(0, 8, F19);
    T.set(0, 6, F17);
    T.set(0, 5, -F17);
    T.set(1, 1, b.tau_bar * b.tau_bar * R0 + (b.tau_max - r) * (b.tau_max - r) * R1 - s.p3t(I) - s.p3t(I).T());
    T.set(1, 2, s.p3t_k(B));
    T.set(1, 8, F29);
    T.set(1, 6, F27);
    T.set(1, 5, -F27);
    const Expr F34 = rb * (R0 - G0);
    T.set(2, 3, F34);
    T.set(2, 2, -F34 - F34.T());
    T.set(3, 3, rb * (S - S0 - R0));
    T.set(4, 4, std::exp(-2.0 * alpha * r) * (S1 - S) - rM * R1);
    const Expr F56 = rM * (R1 - G1);
    T.set(4, 5, F56);
    T.set(4, 6, rM * (G1 - G2));
    T.set(4, 7, rM * G2);
    T.set(5, 5, -F56 - F56.T());
    T.set(5, 6, rM * (R1 - G1 + G2 - G3));
    T.set(5, 7, rM * (G3 - G2));
    const Expr F78 = rM * (R1 - G3);
    T.set(6, 7, F78);
    T.set(6, 6, -F78 - F78.T());
    s.trigger(T, 6, sigma);
    T.set(7, 7, -rM * (S1 + R1));
    T.set(8, 8, -s.omega());

    prob.add_constraint("Phi", std::move(T), Sense::NegSemidef);
    prob.add_constraint("R0G0", detail::couple(R0, G0), Sense::PosSemidef);
    prob.add_constraint("R1G1", detail::couple(R1, G1), Sense::PosSemidef);
    prob.add_constraint("R1G2", detail::couple(R1, G2), Sense::PosSemidef);
    prob.add_constraint("R1G3", detail::couple(R1, G3), Sense::PosSemidef);
}

/// Sampled measurements, mu_max = 0: independent of r0 and r1.
template <class Sym>
void prop1_into(Sym& s, const LtiPlant& plant, const DelayProfile& p, double alpha, double sigma) {
    p.validate();
    detail::require_alpha(alpha);
    detail::require_sigma(sigma);
    if (p.mu_max != 0.0) throw PreconditionError("prop1 requires mu_max = 0");
    const double tb = p.h + p.eta_max;
    const double rb = std::exp(-2.0 * alpha * tb);
    const Eigen::Index n = s.n(), m = s.m();
    const Matrix& A = plant.A();
    const Matrix& B = plant.B();
    const Matrix I = Matrix::Identity(n, n);

    auto& prob = s.problem();
    // r0, r1 deliberately absent
    prob.params = {{"alpha", alpha}, {"sigma", sigma}, {"h", p.h}, {"eta_max", p.eta_max},
                   {"tau_bar", tb}, {"rho_bar", rb}};

    Expr P = s.sym("P", Cone::PsdStrict);
    Expr S = s.sym("S", Cone::Psd);
    Expr R = s.sym("R", Cone::Psd);
    Expr G = s.full("G");

    // slots: z, z', z(t-tau), z(t-tau_bar), e0
    BlockTable T({n, n, n, n, m});
    T.set(0, 0, 2.0 * alpha * P + S - rb * R + s.p2t(A) + s.p2t(A).T());
    T.set(0, 1, P - s.p2t(I) + s.p3t(A).T());
    T.set(0, 2, rb * (R - G) + s.p2t_k(B));
    T.set(0, 3, rb * G);
    T.set(0, 4, s.p2t_m(B));
    T.set(1, 1, tb * tb * R - s.p3t(I) - s.p3t(I).T());
    T.set(1, 2, s.p3t_k(B));
    T.set(1, 4, s.p3t_m(B));
    const Expr F34 = rb * (R - G);
    T.set(2, 3, F34);
    T.set(2, 2, -F34 - F34.T());
    s.trigger(T, 2, sigma);
    T.set(3, 3, -rb * (S + R));
    T.set(4, 4, -s.omega());

    prob.add_constraint("Psi", std::move(T), Sense::NegSemidef);
    prob.add_constraint("RG", detail::couple(R, G), Sense::PosSemidef);
}

/// Continuous measurements with a switching trigger.
template <class Sym>
void lemma2_into(Sym& s, const LtiPlant& plant, double r1, double mu_max, double wait_h,
                 double alpha, double sigma) {
    detail::require_alpha(alpha);
    detail::require_sigma(sigma);
    if (!(r1 >= 0.0) || !(mu_max >= 0.0) || !(wait_h > 0.0)) throw DomainError("lemma2: invalid delays");
    const double tt = wait_h + mu_max;
    const double rt = std::exp(-2.0 * alpha * (r1 + tt));
    const double rM = std::exp(-2.0 * alpha * (r1 + mu_max));
    const Eigen::Index n = s.n(), m = s.m();
    const Matrix& A = plant.A();
    const Matrix& B = plant.B();
    const Matrix I = Matrix::Identity(n, n);
    const Matrix EB = expm(A, r1) * B;

    auto& prob = s.problem();
    prob.params = {{"alpha", alpha}, {"sigma", sigma}, {"h", wait_h}, {"r1", r1}, {"mu_max", mu_max},
                   {"tau_tilde", tt}, {"rho_tilde", rt}, {"rho_max", rM}};
    if (mu_max == 0.0) prob.warnings.push_back("lemma2 with mu_max = 0: prop3 is the preferred certificate");

    Expr P = s.sym("P", Cone::PsdStrict);
    Expr S = s.sym("S", Cone::Psd);
    Expr S0 = s.sym("S0", Cone::Psd);
    Expr S1 = s.sym("S1", Cone::Psd);
    Expr R0 = s.sym("R0", Cone::Psd);
    Expr R1 = s.sym("R1", Cone::Psd);
    Expr G0 = s.full("G0"), G1 = s.full("G1");

    // A + BK enters through P2^T A + P2^T B K
    const Expr p2acl = s.p2t(A) + s.p2t_k(B);
    const Expr p3acl = s.p3t(A) + s.p3t_k(B);
    const Expr d11 = 2.0 * alpha * P + S + p2acl + p2acl.T();
    const Expr d12 = P - s.p2t(I) + p3acl.T();
    const Expr d22 = mu_max * mu_max * R0 + wait_h * wait_h * R1 - s.p3t(I) - s.p3t(I).T();
    const Expr d33 = std::exp(-2.0 * alpha * r1) * (S0 - S) - rM * R0;
    const Expr e15 = s.p2t_k(EB);
    const Expr e25 = s.p3t_k(EB);

    // Sigma slots: z, z', z(t-r1), z(t-r1-mu_M), z(t-r1-tau4), z(t-r1-tau_tilde)
    BlockTable Sg({n, n, n, n, n, n});
    Sg.set(0, 0, d11);
    Sg.set(0, 1, d12);
    Sg.set(0, 4, e15);
    Sg.set(0, 2, -e15);
    Sg.set(1, 1, d22);
    Sg.set(1, 4, e25);
    Sg.set(1, 2, -e25);
    Sg.set(2, 2, d33);
    Sg.set(2, 3, rM * R0);
    Sg.set(3, 3, -rM * (R0 + S0 - S1) - rt * R1);
    const Expr s45 = rt * (R1 - G1);
    Sg.set(3, 4, s45);
    Sg.set(3, 5, rt * G1);
    Sg.set(4, 4, -s45 - s45.T());
    Sg.set(4, 5, rt * (R1 - G1));
    Sg.set(5, 5, -rt * (S1 + R1));

    // Xi slots: z, z', z(t-r1), z(t-r1-mu), z(t-r1-mu_M), z(t-r1-tau_tilde), e3
    BlockTable Xi({n, n, n, n, n, n, m});
    Xi.set(0, 0, d11);
    Xi.set(0, 1, d12);
    Xi.set(0, 3, e15);
    Xi.set(0, 2, -e15);
    Xi.set(1, 1, d22);
    Xi.set(1, 3, e25);
    Xi.set(1, 2, -e25);
    Xi.set(2, 2, d33);
    Xi.set(0, 6, s.p2t_m(EB));
    Xi.set(1, 6, s.p3t_m(EB));
    const Expr x34 = rM * (R0 - G0);
    Xi.set(2, 3, x34);
    Xi.set(3, 4, x34);
    Xi.set(2, 4, rM * G0);
    Xi.set(3, 3, -x34 - x34.T());
    s.trigger(Xi, 3, sigma);
    Xi.set(4, 4, rM * (S1 - S0 - R0) - rt * R1);
    Xi.set(4, 5, rt * R1);
    Xi.set(5, 5, -rt * (S1 + R1));
    Xi.set(6, 6, -s.omega());

    prob.add_constraint("Sigma", std::move(Sg), Sense::NegSemidef);
    prob.add_constraint("Xi", std::move(Xi), Sense::NegSemidef);
    prob.add_constraint("R0G0", detail::couple(R0, G0), Sense::PosSemidef);
    prob.add_constraint("R1G1", detail::couple(R1, G1), Sense::PosSemidef);
}

/// Continuous measurements, mu_max = 0: delay-free switching certificate.
template <class Sym>
void prop3_into(Sym& s, const LtiPlant& plant, double wait_h, double alpha, double sigma) {
    detail::require_alpha(alpha);
    detail::require_sigma(sigma);
    if (!(wait_h > 0.0)) throw DomainError("prop3: wait h must be positive");
    const double rh = std::exp(-2.0 * alpha * wait_h);
    const Eigen::Index n = s.n(), m = s.m();
    const Matrix& A = plant.A();
    const Matrix& B = plant.B();
    const Matrix I = Matrix::Identity(n, n);

    auto& prob = s.problem();
    prob.params = {{"alpha", alpha}, {"sigma", sigma}, {"h", wait_h}, {"rho_h", rh}};

    Expr P = s.sym("P", Cone::PsdStrict);
    Expr S = s.sym("S", Cone::Psd);
    Expr R = s.sym("R", Cone::Psd);
    Expr G = s.full("G");

    // M slots: z, z', z(t-tau), z(t-h)
    BlockTable M({n, n, n, n});
    M.set(0, 0, 2.0 * alpha * P + S - rh * R + s.p2t(A) + s.p2t(A).T());
    M.set(0, 1, P - s.p2t(I) + s.p3t(A).T());
    M.set(0, 2, rh * (R - G) + s.p2t_k(B));
    M.set(0, 3, rh * G);
    M.set(1, 1, wait_h * wait_h * R - s.p3t(I) - s.p3t(I).T());
    M.set(1, 2, s.p3t_k(B));
    const Expr m34 = rh * (R - G);
    M.set(2, 3, m34);
    M.set(2, 2, -m34 - m34.T());
    M.set(3, 3, -rh * (S + R));

    // N slots: z, z', z(t-h), e2
    const Expr p2acl = s.p2t(A) + s.p2t_k(B);
    const Expr p3acl = s.p3t(A) + s.p3t_k(B);
    BlockTable N({n, n, n, m});
    N.set(0, 0, 2.0 * alpha * P + S - rh * R + p2acl + p2acl.T());
    s.trigger(N, 0, sigma);
    N.set(0, 1, P - s.p2t(I) + p3acl.T());
    N.set(0, 2, rh * R);
    N.set(0, 3, s.p2t_m(B));
    N.set(1, 1, wait_h * wait_h * R - s.p3t(I) - s.p3t(I).T());
    N.set(1, 3, s.p3t_m(B));
    N.set(2, 2, -rh * (S + R));
    N.set(3, 3, -s.omega());

    prob.add_constraint("M", std::move(M), Sense::NegSemidef);
    prob.add_constraint("N", std::move(N), Sense::NegSemidef);
    prob.add_constraint("RG", detail::couple(R, G), Sense::PosSemidef);
}

[[nodiscard]] inline LmiProblem build_lemma1(const LtiPlant& plant, const Gain& gain, const DelayProfile& profile,
                                             double alpha, double sigma) {
    LmiProblem prob(Family::Lemma1);
    AnalysisSymbols s(prob, plant, gain, sigma);
    lemma1_into(s, plant, profile, alpha, sigma);
    return prob;
}

[[nodiscard]] inline LmiProblem build_prop1(const LtiPlant& plant, const Gain& gain, const DelayProfile& profile,
                                            double alpha, double sigma) {
    LmiProblem prob(Family::Prop1);
    AnalysisSymbols s(prob, plant, gain, sigma);
    prop1_into(s, plant, profile, alpha, sigma);
    return prob;
}

[[nodiscard]] inline LmiProblem build_lemma2(const LtiPlant& plant, const Gain& gain, double r1, double mu_max,
                                             double wait_h, double alpha, double sigma) {
    LmiProblem prob(Family::Lemma2);
    AnalysisSymbols s(prob, plant, gain, sigma);
    lemma2_into(s, plant, r1, mu_max, wait_h, alpha, sigma);
    return prob;
}

[[nodiscard]] inline LmiProblem build_prop3(const LtiPlant& plant, const Gain& gain, double wait_h, double alpha,
                                            double sigma, double mu_max = 0.0) {
    if (mu_max != 0.0) throw PreconditionError("prop3 requires mu_max = 0");
    LmiProblem prob(Family::Prop3);
    AnalysisSymbols s(prob, plant, gain, sigma);
    prop3_into(s, plant, wait_h, alpha, sigma);
    return prob;
}

// ============================================================================
// SDP encoding
//
// Feasibility is posed as margin maximization:
//   maximize t
//   s.t. -G(y) >= t I for each "<= 0" constraint, G(y) >= t I for each ">= 0"
//        constraint and PSD variable, X - eps I >= t I for strict variables,
//        |y_i| <= box, and, for homogeneous problems, sum trace(strict) >= dim.
// The LMIs are feasible iff t* >= 0 (the normalization and box only bound
// the scale of the decision variables).
// ============================================================================

struct EncodeOptions {
    double strictness_eps = 1e-6;
    double box = 1e4;
};

struct Encoding {
    sdp::Problem sdp;
    std::vector<Eigen::Index> var_offset; // first scalar index of each variable
    int t_index = 0;                      // index of the margin variable
};

[[nodiscard]] inline Encoding encode(const LmiProblem& P, const EncodeOptions& opt = {}) {
    if (P.constraints().empty()) throw PreconditionError("LMI problem has no constraints");
    Encoding enc;
    const auto& vars = P.variables();
    Eigen::Index off = 0;
    for (const auto& v : vars) {
        enc.var_offset.push_back(off);
        off += v.dofs();
    }
    const int nd = static_cast<int>(off);
    enc.t_index = nd;
    auto& S = enc.sdp;
    S.c = Vector::Zero(nd + 1);
    S.c[nd] = -1.0;
    S.F.assign(static_cast<std::size_t>(nd + 2), {});
    for (std::size_t i = 0; i < vars.size(); ++i)
        for (Eigen::Index d = 0; d < vars[i].dofs(); ++d) {
            const auto [a, b] = vars[i].dof_position(d);
            S.variable_names.push_back(vars[i].name + "[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]");
        }
    S.variable_names.push_back("t");

    auto push = [&](int k, int block, Eigen::Index r, Eigen::Index c, double v) {
        if (v == 0.0) return;
        if (r > c) std::swap(r, c);
        S.F[static_cast<std::size_t>(k)].push_back({block, static_cast<int>(r), static_cast<int>(c), v});
    };
    auto push_t = [&](int block, Eigen::Index size) {
        for (Eigen::Index r = 0; r < size; ++r) push(nd + 1, block, r, r, -1.0);
    };

    // one dense block per LMI
    for (const auto& con : P.constraints()) {
        const int block = static_cast<int>(S.blocks.size());
        const Eigen::Index N = con.table.dim();
        S.blocks.push_back({static_cast<int>(N), false});
        const double sign = con.sense == Sense::NegSemidef ? -1.0 : 1.0;
        // constants: sign * C = -F0
        const Matrix C = assemble(con.table, [&](VarId v) -> Matrix {
            const auto& info = P.var(v);
            return Matrix::Zero(info.rows, info.cols);
        });
        for (Eigen::Index r = 0; r < N; ++r)
            for (Eigen::Index c = r; c < N; ++c) push(0, block, r, c, -sign * C(r, c));
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const VarId vid{static_cast<int>(i)};
            bool used = false;
            for (const auto& [key, e] : con.table.blocks()) used = used || e.depends_on(vid);
            if (!used) continue;
            for (Eigen::Index d = 0; d < vars[i].dofs(); ++d) {
                const auto [a, b] = vars[i].dof_position(d);
                const int k = static_cast<int>(enc.var_offset[i] + d) + 1;
                for (const auto& [key, e] : con.table.blocks()) {
                    if (!e.depends_on(vid)) continue;
                    const Matrix Cf = e.coefficient(vid, vars[i], a, b);
                    const auto [bi, bj] = key;
                    const Eigen::Index oi = con.table.offset(bi), oj = con.table.offset(bj);
                    for (Eigen::Index r = 0; r < Cf.rows(); ++r)
                        for (Eigen::Index c = 0; c < Cf.cols(); ++c) {
                            if (bi == bj) {
                                if (r <= c) push(k, block, oi + r, oi + c, sign * 0.5 * (Cf(r, c) + Cf(c, r)));
                            } else {
                                push(k, block, oi + r, oj + c, sign * Cf(r, c));
                            }
                        }
                }
            }
        }
        push_t(block, N);
    }

    // cones of the variables
    Eigen::Index strict_dim = 0;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const auto& v = vars[i];
        if (v.cone == Cone::Free) continue;
        const int block = static_cast<int>(S.blocks.size());
        S.blocks.push_back({static_cast<int>(v.rows), false});
        for (Eigen::Index d = 0; d < v.dofs(); ++d) {
            const auto [a, b] = v.dof_position(d);
            push(static_cast<int>(enc.var_offset[i] + d) + 1, block, a, b, 1.0);
        }
        if (v.cone == Cone::PsdStrict) {
            for (Eigen::Index r = 0; r < v.rows; ++r) push(0, block, r, r, opt.strictness_eps);
            strict_dim += v.rows;
        }
        push_t(block, v.rows);
    }

    // LP block: scale normalization and box
    const int lp = static_cast<int>(S.blocks.size());
    int row = 0;
    if (P.homogeneous() && strict_dim > 0) {
        push(0, lp, row, row, static_cast<double>(strict_dim));
        for (std::size_t i = 0; i < vars.size(); ++i) {
            if (vars[i].cone != Cone::PsdStrict) continue;
            for (Eigen::Index d = 0; d < vars[i].dofs(); ++d) {
                const auto [a, b] = vars[i].dof_position(d);
                if (a == b) push(static_cast<int>(enc.var_offset[i] + d) + 1, lp, row, row, 1.0);
            }
        }
        ++row;
    }
    for (int k = 0; k < nd; ++k) {
        push(0, lp, row, row, -opt.box);
        push(k + 1, lp, row, row, -1.0);
        ++row;
        push(0, lp, row, row, -opt.box);
        push(k + 1, lp, row, row, 1.0);
        ++row;
    }
    if (row > 0) S.blocks.push_back({row, true});
    return enc;
}

[[nodiscard]] inline Values decode(const LmiProblem& P, const Encoding& enc, const Vector& y) {
    Values out;
    const auto& vars = P.variables();
    for (std::size_t i = 0; i < vars.size(); ++i)
        out[vars[i].name] = vars[i].from_dofs(y.data() + enc.var_offset[i]);
    return out;
}

/// Writes the margin SDP in SDPA sparse format.
inline void export_sdpa(const LmiProblem& P, std::ostream& os, const EncodeOptions& opt = {}) {
    const Encoding enc = encode(P, opt);
    sdp::write_sdpa(enc.sdp, os, "netpred " + std::string(to_string(P.family)) + ": maximize t (last variable)");
}

inline void export_sdpa(const LmiProblem& P, const std::string& path, const EncodeOptions& opt = {}) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("export_sdpa: cannot open " + path);
    export_sdpa(P, f, opt);
    if (!f) throw std::runtime_error("export_sdpa: write failed for " + path);
}

// ============================================================================
// Certificates
// ============================================================================

struct Margin {
    std::string name;
    std::string kind; // "nsd", "psd", "strict"
    double value;     // min eigenvalue of the side that must be >= 0 (minus eps for strict)
};

struct Certificate {
    Family family = Family::Custom;
    std::map<std::string, double> params;
    Values values;
    std::vector<Margin> margins;
    double max_violation = 0.0;
    double strictness_eps = 0.0;
    double solver_margin = 0.0; // t from the SDP

    [[nodiscard]] const Matrix& at(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) throw DomainError("Certificate: no variable '" + name + "'");
        return it->second;
    }
    [[nodiscard]] double param(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw DomainError("Certificate: no parameter '" + name + "'");
        return it->second;
    }
};

namespace detail {

inline double min_eig(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

} // namespace detail

/// Independent eigenvalue check of all constraints and cones.
[[nodiscard]] inline Certificate make_certificate(const LmiProblem& P, Values values, double eps) {
    Certificate c;
    c.family = P.family;
    c.params = P.params;
    c.strictness_eps = eps;
    for (const auto& con : P.constraints()) {
        const Matrix M = evaluate_constraint(P, con, values);
        const bool nsd = con.sense == Sense::NegSemidef;
        c.margins.push_back({con.name, nsd ? "nsd" : "psd", detail::min_eig(nsd ? Matrix(-M) : M)});
    }
    for (const auto& v : P.variables()) {
        if (v.cone == Cone::Free) continue;
        const double e = detail::min_eig(values.at(v.name));
        if (v.cone == Cone::PsdStrict)
            c.margins.push_back({v.name, "strict", e - eps});
        else
            c.margins.push_back({v.name, "psd", e});
    }
    for (const auto& m : c.margins) c.max_violation = std::max(c.max_violation, -m.value);
    c.values = std::move(values);
    return c;
}

enum class Verdict { Feasible, Infeasible, Unknown };

[[nodiscard]] inline std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::Feasible: return "feasible";
    case Verdict::Infeasible: return "infeasible";
    case Verdict::Unknown: return "unknown";
    }
    return "?";
}

struct FeasibilityResult {
    Verdict verdict = Verdict::Unknown;
    std::optional<Certificate> certificate;
    double margin = std::numeric_limits<double>::quiet_NaN(); // t at the returned point
    double bound = std::numeric_limits<double>::quiet_NaN();  // dual upper bound on t*
    std::string diagnostic;
    int iterations = 0;
};

struct FeasibilityOptions {
    double strictness_eps = 1e-6;
    double recheck_tol = 1e-7;
    double decision_margin = 1e-9; // |t*| below this is undecided
    double box = 1e4;
    sdp::Options solver{};
};

[[nodiscard]] inline FeasibilityResult check_feasible(const LmiProblem& P, sdp::Backend& backend,
                                                      const FeasibilityOptions& opt = {}) {
    FeasibilityResult out;
    const Encoding enc = encode(P, {opt.strictness_eps, opt.box});
    sdp::Options so = opt.solver;
    so.stop_objective_below = -opt.decision_margin;
    so.stop_bound_above = opt.decision_margin;
    sdp::Result r;
    try {
        r = backend.solve(enc.sdp, so);
    } catch (const std::exception& e) {
        out.diagnostic = std::string("backend failure: ") + e.what();
        return out;
    }
    out.iterations = r.iterations;
    out.margin = r.y.size() ? r.y[enc.t_index] : std::numeric_limits<double>::quiet_NaN();
    out.bound = -r.dual_objective;
    out.diagnostic = std::string(sdp::to_string(r.status)) + ": " + r.message;

    auto try_certificate = [&]() -> bool {
        if (r.y.size() != enc.sdp.num_vars() || !r.y.allFinite()) return false;
        Certificate c = make_certificate(P, decode(P, enc, r.y), opt.strictness_eps);
        c.solver_margin = out.margin;
        if (c.max_violation > opt.recheck_tol) {
            out.diagnostic += "; re-check failed (violation " + sdp::format_double(c.max_violation) + ")";
            return false;
        }
        out.certificate = std::move(c);
        return true;
    };

    switch (r.status) {
    case sdp::Status::StoppedFeasible:
        out.verdict = try_certificate() ? Verdict::Feasible : Verdict::Unknown;
        break;
    case sdp::Status::StoppedBound:
        out.verdict = Verdict::Infeasible;
        break;
    case sdp::Status::Optimal:
        if (out.bound < -opt.decision_margin)
            out.verdict = Verdict::Infeasible;
        else if (out.margin > opt.decision_margin && try_certificate())
            out.verdict = Verdict::Feasible;
        else
            out.verdict = Verdict::Unknown;
        break;
    default:
        // the certificate is verified independently, so a good last iterate still counts
        out.verdict = out.margin > opt.decision_margin && try_certificate() ? Verdict::Feasible : Verdict::Unknown;
        break;
    }
    return out;
}

[[nodiscard]] inline FeasibilityResult check_feasible(const LmiProblem& P, const FeasibilityOptions& opt = {}) {
    sdp::InteriorPointSolver solver;
    return check_feasible(P, solver, opt);
}

// ----------------------------------------------------------------------------
// Serialization (JSON, doubles written with round-trip precision)
// ----------------------------------------------------------------------------

[[nodiscard]] inline nlohmann::json matrix_to_json(const Matrix& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

[[nodiscard]] inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) throw DomainError("matrix: expected a nonempty list of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) throw DimensionError("matrix: ragged rows");
        for (Eigen::Index k = 0; k < cols; ++k) M(i, k) = r[static_cast<std::size_t>(k)].get<double>();
    }
    return M;
}

[[nodiscard]] inline nlohmann::json to_json(const Certificate& c) {
    nlohmann::json j;
    j["family"] = std::string(to_string(c.family));
    j["params"] = c.params;
    j["strictness_eps"] = c.strictness_eps;
    j["solver_margin"] = c.solver_margin;
    j["max_violation"] = c.max_violation;
    nlohmann::json margins = nlohmann::json::array();
    for (const auto& m : c.margins) margins.push_back({{"name", m.name}, {"kind", m.kind}, {"value", m.value}});
    j["margins"] = margins;
    nlohmann::json vals = nlohmann::json::object();
    for (const auto& [name, M] : c.values) vals[name] = matrix_to_json(M);
    j["variables"] = vals;
    return j;
}

[[nodiscard]] inline Certificate certificate_from_json(const nlohmann::json& j) {
    Certificate c;
    c.family = family_from_string(j.at("family").get<std::string>());
    c.params = j.at("params").get<std::map<std::string, double>>();
    c.strictness_eps = j.at("strictness_eps").get<double>();
    c.solver_margin = j.value("solver_margin", 0.0);
    c.max_violation = j.at("max_violation").get<double>();
    for (const auto& m : j.at("margins"))
        c.margins.push_back({m.at("name").get<std::string>(), m.at("kind").get<std::string>(), m.at("value").get<double>()});
    for (const auto& [name, M] : j.at("variables").items()) c.values[name] = matrix_from_json(M);
    return c;
}

inline void save_certificate(const Certificate& c, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << to_json(c).dump(2) << '\n';
}

[[nodiscard]] inline Certificate load_certificate(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    return certificate_from_json(nlohmann::json::parse(f));
}

} // namespace netpred::lmi
