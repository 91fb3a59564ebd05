#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "netpred/model.hpp"

namespace netpred::sdp {

// ============================================================================
// Problem in SDPA form
//
//   minimize    c^T y
//   subject to  Z(y) = sum_i y_i F_i - F_0  >= 0   (block diagonal)
//
// with the dual
//
//   maximize    <F_0, X>
//   subject to  <F_i, X> = c_i,  X >= 0.
//
// Blocks are either dense symmetric or diagonal (an LP block).
// ============================================================================

struct BlockSpec {
    int size = 0;
    bool diagonal = false;
};

/// One upper-triangle entry (row <= col) of a constraint matrix, 0-based.
struct Entry {
    int block;
    int row;
    int col;
    double value;
};

struct Problem {
    std::vector<BlockSpec> blocks;
    Vector c;                                // size p
    std::vector<std::vector<Entry>> F;       // F[0] = F_0, F[i] for y_{i}, i = 1..p
    std::vector<std::string> variable_names; // optional, size p

    [[nodiscard]] int num_vars() const { return static_cast<int>(c.size()); }
    [[nodiscard]] int total_dim() const {
        int n = 0;
        for (const auto& b : blocks) n += b.size;
        return n;
    }

    void validate() const {
        if (blocks.empty()) throw DomainError("sdp::Problem: no blocks");
        if (static_cast<int>(F.size()) != num_vars() + 1)
            throw DimensionError("sdp::Problem: need p + 1 constraint matrices");
        for (const auto& Fi : F)
            for (const auto& e : Fi) {
                if (e.block < 0 || e.block >= static_cast<int>(blocks.size()))
                    throw DimensionError("sdp::Problem: entry refers to a missing block");
                const auto& b = blocks[static_cast<std::size_t>(e.block)];
                if (e.row < 0 || e.col < e.row || e.col >= b.size)
                    throw DimensionError("sdp::Problem: entry outside the upper triangle of its block");
                if (b.diagonal && e.row != e.col) throw DimensionError("sdp::Problem: off-diagonal entry in LP block");
                if (!std::isfinite(e.value)) throw DomainError("sdp::Problem: non-finite coefficient");
            }
    }
};

// ============================================================================
// Block-diagonal symmetric matrices
// ============================================================================

struct BlockMatrix {
    std::vector<Matrix> dense; // empty matrix for diagonal blocks
    std::vector<Vector> diag;  // empty vector for dense blocks

    static BlockMatrix zeros(const std::vector<BlockSpec>& specs) {
        BlockMatrix M;
        for (const auto& b : specs) {
            if (b.diagonal) {
                M.dense.emplace_back();
                M.diag.push_back(Vector::Zero(b.size));
            } else {
                M.dense.push_back(Matrix::Zero(b.size, b.size));
                M.diag.emplace_back();
            }
        }
        return M;
    }

    static BlockMatrix identity(const std::vector<BlockSpec>& specs, double scale = 1.0) {
        BlockMatrix M = zeros(specs);
        for (std::size_t b = 0; b < specs.size(); ++b) {
            if (specs[b].diagonal)
                M.diag[b].setConstant(scale);
            else
                M.dense[b].diagonal().setConstant(scale);
        }
        return M;
    }

    [[nodiscard]] std::size_t num_blocks() const { return dense.size(); }
    [[nodiscard]] bool is_diag(std::size_t b) const { return dense[b].size() == 0 && diag[b].size() > 0; }

    void axpy(double a, const BlockMatrix& o) {
        for (std::size_t b = 0; b < num_blocks(); ++b) {
            if (is_diag(b))
                diag[b] += a * o.diag[b];
            else
                dense[b] += a * o.dense[b];
        }
    }

    [[nodiscard]] double dot(const BlockMatrix& o) const {
        double s = 0.0;
        for (std::size_t b = 0; b < num_blocks(); ++b) {
            if (is_diag(b))
                s += diag[b].dot(o.diag[b]);
            else
                s += (dense[b].array() * o.dense[b].array()).sum();
        }
        return s;
    }

    [[nodiscard]] double norm() const { return std::sqrt(dot(*this)); }
};

/// sum_i y_i F_i - F_0, or just the F_0 part when y is empty
inline BlockMatrix assemble(const Problem& P, const Vector& y) {
    BlockMatrix Z = BlockMatrix::zeros(P.blocks);
    auto add = [&](const std::vector<Entry>& Fi, double a) {
        for (const auto& e : Fi) {
            const auto b = static_cast<std::size_t>(e.block);
            if (P.blocks[b].diagonal) {
                Z.diag[b][e.row] += a * e.value;
            } else {
                Z.dense[b](e.row, e.col) += a * e.value;
                if (e.row != e.col) Z.dense[b](e.col, e.row) += a * e.value;
            }
        }
    };
    add(P.F[0], -1.0);
    for (int i = 0; i < y.size(); ++i)
        if (y[i] != 0.0) add(P.F[static_cast<std::size_t>(i + 1)], y[i]);
    return Z;
}

/// <F, W> for symmetric F given by upper entries; W need not be symmetric.
inline double inner(const Problem& P, const std::vector<Entry>& Fi, const BlockMatrix& W) {
    double s = 0.0;
    for (const auto& e : Fi) {
        const auto b = static_cast<std::size_t>(e.block);
        if (P.blocks[b].diagonal)
            s += e.value * W.diag[b][e.row];
        else if (e.row == e.col)
            s += e.value * W.dense[b](e.row, e.row);
        else
            s += e.value * (W.dense[b](e.row, e.col) + W.dense[b](e.col, e.row));
    }
    return s;
}

// ============================================================================
// Solver contract
// ============================================================================

enum class Status {
    Optimal,          // converged to the requested accuracy
    StoppedFeasible,  // early stop: an exactly feasible y with c^T y below the target
    StoppedBound,     // early stop: a dual-feasible X proves c^T y* above the target
    NumericalTrouble, // could not make progress
    IterationLimit,
};

[[nodiscard]] inline std::string_view to_string(Status s) {
    switch (s) {
    case Status::Optimal: return "optimal";
    case Status::StoppedFeasible: return "stopped_feasible";
    case Status::StoppedBound: return "stopped_bound";
    case Status::NumericalTrouble: return "numerical_trouble";
    case Status::IterationLimit: return "iteration_limit";
    }
    return "?";
}

struct Result {
    Status status = Status::NumericalTrouble;
    Vector y;
    BlockMatrix X;
    BlockMatrix Z;
    double primal_objective = std::numeric_limits<double>::quiet_NaN(); // c^T y
    double dual_objective = std::numeric_limits<double>::quiet_NaN();   // <F_0, X>
    double primal_infeasibility = std::numeric_limits<double>::quiet_NaN();
    double dual_infeasibility = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    std::string message;
};

struct Options {
    int max_iterations = 100;
    double tolerance = 1e-9;
    double step_fraction = 0.95;
    /// stop as soon as Z(y) is exactly PSD and c^T y < stop_objective_below
    double stop_objective_below = -std::numeric_limits<double>::infinity();
    /// stop as soon as X is dual feasible (to tolerance) with <F_0, X> > stop_bound_above
    double stop_bound_above = std::numeric_limits<double>::infinity();
    std::ostream* trace = nullptr; // per-iteration log
};

/// Abstract backend: solves an SDPA-form problem.
class Backend {
public:
    virtual ~Backend() = default;
    [[nodiscard]] virtual Result solve(const Problem& problem, const Options& options) = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

// ============================================================================
// Primal-dual interior point method (HKM direction, Mehrotra predictor-corrector)
// ============================================================================

class InteriorPointSolver final : public Backend {
public:
    [[nodiscard]] std::string name() const override { return "interior-point (HKM)"; }

    [[nodiscard]] Result solve(const Problem& P, const Options& opt) override {
        P.validate();
        const int p = P.num_vars();
        const std::size_t nb = P.blocks.size();
        const double N = P.total_dim();

        // per-variable entries grouped by block
        std::vector<std::vector<std::pair<std::size_t, std::vector<Entry>>>> byblock(static_cast<std::size_t>(p));
        for (int i = 0; i < p; ++i) {
            std::map<int, std::vector<Entry>> g;
            for (const auto& e : P.F[static_cast<std::size_t>(i + 1)]) g[e.block].push_back(e);
            for (auto& [b, es] : g) byblock[static_cast<std::size_t>(i)].push_back({static_cast<std::size_t>(b), es});
        }

        auto fro = [](const std::vector<Entry>& Fi) {
            double s = 0.0;
            for (const auto& e : Fi) s += (e.row == e.col ? 1.0 : 2.0) * e.value * e.value;
            return std::sqrt(s);
        };
        double max_norm_F = 0.0, ratio = 0.0;
        for (int i = 0; i < p; ++i) {
            const double nf = fro(P.F[static_cast<std::size_t>(i + 1)]);
            max_norm_F = std::max(max_norm_F, nf);
            ratio = std::max(ratio, (1.0 + std::abs(P.c[i])) / (1.0 + nf));
        }
        const double normC = fro(P.F[0]);
        const double normc = P.c.norm();

        Result res;
        Vector y = Vector::Zero(p);
        BlockMatrix X = BlockMatrix::identity(P.blocks, std::max(1.0, N * ratio));
        BlockMatrix Z = BlockMatrix::identity(P.blocks, std::max(1.0, (1.0 + std::max(max_norm_F, normC)) / std::sqrt(N)));

        auto finish = [&](Status s, std::string msg) {
            res.status = s;
            res.y = y;
            res.X = X;
            res.Z = Z;
            res.primal_objective = P.c.dot(y);
            res.dual_objective = inner(P, P.F[0], X);
            res.message = std::move(msg);
            return res;
        };

        for (int iter = 0; iter < opt.max_iterations; ++iter) {
            res.iterations = iter;
            // residuals
            BlockMatrix Rd = assemble(P, y);
            Rd.axpy(-1.0, Z);
            Vector rp(p);
            for (int i = 0; i < p; ++i) rp[i] = P.c[i] - inner(P, P.F[static_cast<std::size_t>(i + 1)], X);
            const double mu = X.dot(Z) / N;
            const double pobj = P.c.dot(y);
            const double dobj = inner(P, P.F[0], X);
            res.primal_infeasibility = Rd.norm() / (1.0 + normC);
            res.dual_infeasibility = rp.norm() / (1.0 + normc);
            const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

            if (opt.trace)
                *opt.trace << "it " << iter << " pobj " << pobj << " dobj " << dobj << " pinf " << res.primal_infeasibility
                           << " dinf " << res.dual_infeasibility << " mu " << mu << '\n';
            if (pobj < opt.stop_objective_below && is_psd_exact(assemble(P, y)))
                return finish(Status::StoppedFeasible, "feasible point below target");
            if (dobj > opt.stop_bound_above && res.dual_infeasibility < opt.tolerance)
                return finish(Status::StoppedBound, "dual bound above target");
            if (res.primal_infeasibility < opt.tolerance && res.dual_infeasibility < opt.tolerance &&
                gap < opt.tolerance)
                return finish(Status::Optimal, "converged");
            if (!std::isfinite(mu) || y.cwiseAbs().maxCoeff() > 1e30)
                return finish(Status::NumericalTrouble, "iterates diverged");

            // Z^{-1}
            BlockMatrix Zinv = BlockMatrix::zeros(P.blocks);
            for (std::size_t b = 0; b < nb; ++b) {
                if (Z.is_diag(b)) {
                    Zinv.diag[b] = Z.diag[b].cwiseInverse();
                } else {
                    Eigen::LLT<Matrix> llt(Z.dense[b]);
                    if (llt.info() != Eigen::Success) return finish(Status::NumericalTrouble, "Z lost definiteness");
                    Zinv.dense[b] = llt.solve(Matrix::Identity(Z.dense[b].rows(), Z.dense[b].cols()));
                    Zinv.dense[b] = 0.5 * (Zinv.dense[b] + Zinv.dense[b].transpose());
                }
            }

            // Schur complement M_ij = tr(F_i X F_j Z^{-1})
            Matrix M = Matrix::Zero(p, p);
            std::vector<std::map<std::size_t, Matrix>> G(static_cast<std::size_t>(p));
            for (int i = 0; i < p; ++i) {
                for (const auto& [b, es] : byblock[static_cast<std::size_t>(i)]) {
                    if (P.blocks[b].diagonal) continue;
                    const Matrix& Xb = X.dense[b];
                    Matrix XF = Matrix::Zero(Xb.rows(), Xb.cols());
                    for (const auto& e : es) {
                        XF.col(e.col) += e.value * Xb.col(e.row);
                        if (e.row != e.col) XF.col(e.row) += e.value * Xb.col(e.col);
                    }
                    G[static_cast<std::size_t>(i)][b] = XF * Zinv.dense[b];
                }
            }
            for (int i = 0; i < p; ++i) {
                for (const auto& [b, Gi] : G[static_cast<std::size_t>(i)]) {
                    for (int j = i; j < p; ++j) {
                        for (const auto& [bj, esj] : byblock[static_cast<std::size_t>(j)]) {
                            if (bj != b) continue;
                            double s = 0.0;
                            for (const auto& e : esj)
                                s += e.row == e.col ? e.value * Gi(e.row, e.row)
                                                    : e.value * (Gi(e.row, e.col) + Gi(e.col, e.row));
                            M(i, j) += s;
                        }
                    }
                }
            }
            // LP blocks
            for (std::size_t b = 0; b < nb; ++b) {
                if (!P.blocks[b].diagonal) continue;
                std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(P.blocks[b].size));
                for (int i = 0; i < p; ++i)
                    for (const auto& [bb, es] : byblock[static_cast<std::size_t>(i)])
                        if (bb == b)
                            for (const auto& e : es) rows[static_cast<std::size_t>(e.row)].push_back({i, e.value});
                for (std::size_t k = 0; k < rows.size(); ++k) {
                    const double w = X.diag[b][static_cast<Eigen::Index>(k)] * Zinv.diag[b][static_cast<Eigen::Index>(k)];
                    for (const auto& [i, fi] : rows[k])
                        for (const auto& [j, fj] : rows[k])
                            if (j >= i) M(i, j) += w * fi * fj;
                }
            }
            M = M.selfadjointView<Eigen::Upper>();

            Eigen::LLT<Matrix> Mllt(M);
            bool use_ldlt = Mllt.info() != Eigen::Success;
            Eigen::LDLT<Matrix> Mldlt;
            if (use_ldlt) {
                Matrix Mr = M;
                Mr.diagonal().array() += 1e-14 * std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
                Mldlt.compute(Mr);
                if (Mldlt.info() != Eigen::Success) return finish(Status::NumericalTrouble, "Schur complement singular");
            }
            auto solve_once = [&](const Vector& r) -> Vector { return use_ldlt ? Vector(Mldlt.solve(r)) : Vector(Mllt.solve(r)); };
            // a few rounds of iterative refinement against the unregularized M
            auto solveM = [&](const Vector& r) -> Vector {
                Vector x = solve_once(r);
                for (int k = 0; k < 3; ++k) {
                    const Vector res = r - M * x;
                    x += solve_once(res);
                }
                return x;
            };

            // X Rd Z^{-1}
            BlockMatrix XRdZi = product3(X, Rd, Zinv);

            auto direction = [&](double sigma_mu, const BlockMatrix* corr, Vector& dy, BlockMatrix& dX, BlockMatrix& dZ) {
                Vector rhs(p);
                for (int i = 0; i < p; ++i) {
                    const auto& Fi = P.F[static_cast<std::size_t>(i + 1)];
                    rhs[i] = sigma_mu * inner(P, Fi, Zinv) - P.c[i] - inner(P, Fi, XRdZi);
                    if (corr) rhs[i] -= inner(P, Fi, *corr);
                }
                dy = solveM(rhs);
                dZ = assemble_linear(P, dy);
                dZ.axpy(1.0, Rd);
                // dX = sigma_mu Z^{-1} - X - (X dZ + corr_term) Z^{-1}, symmetrized
                BlockMatrix XdZZi = product3(X, dZ, Zinv);
                dX = Zinv;
                for (std::size_t b = 0; b < nb; ++b) {
                    if (dX.is_diag(b)) {
                        dX.diag[b] = sigma_mu * Zinv.diag[b] - X.diag[b] - XdZZi.diag[b];
                        if (corr) dX.diag[b] -= corr->diag[b];
                    } else {
                        Matrix W = sigma_mu * Zinv.dense[b] - X.dense[b] - XdZZi.dense[b];
                        if (corr) W -= corr->dense[b];
                        dX.dense[b] = 0.5 * (W + W.transpose());
                    }
                }
            };

            Vector dya;
            BlockMatrix dXa, dZa;
            direction(0.0, nullptr, dya, dXa, dZa);
            const double ap_a = std::min(1.0, max_step(X, dXa));
            const double ad_a = std::min(1.0, max_step(Z, dZa));
            BlockMatrix Xa = X, Za = Z;
            Xa.axpy(ap_a, dXa);
            Za.axpy(ad_a, dZa);
            const double mu_a = Xa.dot(Za) / N;
            double sig = std::pow(std::max(0.0, mu_a) / mu, 3.0);
            sig = std::clamp(sig, 0.0, 1.0);

            // second-order term dXa dZa Z^{-1}
            BlockMatrix corr = product3(dXa, dZa, Zinv);
            Vector dy;
            BlockMatrix dX, dZ;
            direction(sig * mu, &corr, dy, dX, dZ);

            const double ap = std::min(1.0, opt.step_fraction * max_step(X, dX));
            const double ad = std::min(1.0, opt.step_fraction * max_step(Z, dZ));
            if (!(ap > 0.0) || !(ad > 0.0) || !dy.allFinite())
                return finish(Status::NumericalTrouble, "zero step length");
            X.axpy(ap, dX);
            Z.axpy(ad, dZ);
            y += ad * dy;
        }
        return finish(Status::IterationLimit, "iteration limit reached");
    }

private:
    static bool is_psd_exact(const BlockMatrix& Z) {
        for (std::size_t b = 0; b < Z.num_blocks(); ++b) {
            if (Z.is_diag(b)) {
                if (Z.diag[b].minCoeff() < 0.0) return false;
            } else {
                Eigen::LLT<Matrix> llt(Z.dense[b]);
                if (llt.info() != Eigen::Success) return false;
            }
        }
        return true;
    }

    static BlockMatrix product3(const BlockMatrix& A, const BlockMatrix& B, const BlockMatrix& C) {
        BlockMatrix R = A;
        for (std::size_t b = 0; b < A.num_blocks(); ++b) {
            if (A.is_diag(b))
                R.diag[b] = A.diag[b].cwiseProduct(B.diag[b]).cwiseProduct(C.diag[b]);
            else
                R.dense[b] = A.dense[b] * B.dense[b] * C.dense[b];
        }
        return R;
    }

    static BlockMatrix assemble_linear(const Problem& P, const Vector& dy) {
        BlockMatrix D = BlockMatrix::zeros(P.blocks);
        for (int i = 0; i < dy.size(); ++i) {
            const double a = dy[i];
            if (a == 0.0) continue;
            for (const auto& e : P.F[static_cast<std::size_t>(i + 1)]) {
                const auto b = static_cast<std::size_t>(e.block);
                if (P.blocks[b].diagonal) {
                    D.diag[b][e.row] += a * e.value;
                } else {
                    D.dense[b](e.row, e.col) += a * e.value;
                    if (e.row != e.col) D.dense[b](e.col, e.row) += a * e.value;
                }
            }
        }
        return D;
    }

    // largest alpha with S + alpha dS >= 0 (infinity if unbounded)
    static double max_step(const BlockMatrix& S, const BlockMatrix& dS) {
        double alpha = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < S.num_blocks(); ++b) {
            if (S.is_diag(b)) {
                for (Eigen::Index k = 0; k < S.diag[b].size(); ++k)
                    if (dS.diag[b][k] < 0.0) alpha = std::min(alpha, -S.diag[b][k] / dS.diag[b][k]);
            } else {
                Eigen::LLT<Matrix> llt(S.dense[b]);
                if (llt.info() != Eigen::Success) return 0.0;
                const Matrix& L = llt.matrixL().toDenseMatrix();
                Matrix T = L.triangularView<Eigen::Lower>().solve(dS.dense[b]);
                T = L.triangularView<Eigen::Lower>().solve(T.transpose().eval());
                T = 0.5 * (T + T.transpose()).eval();
                Eigen::SelfAdjointEigenSolver<Matrix> es(T, Eigen::EigenvaluesOnly);
                const double lmin = es.eigenvalues().minCoeff();
                if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
            }
        }
        return alpha;
    }
};

// ============================================================================
// SDPA sparse (.dat-s) text format
// ============================================================================

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// Writes "comment / m / nBlocks / blockStruct / c / entries"; entries are
/// "matno blkno i j value" (1-based, i <= j), F_0 first, then F_1..F_p in
/// order, each sorted by (block, i, j). Diagonal blocks have negative size.
inline void write_sdpa(const Problem& P, std::ostream& os, const std::string& comment = "netpred") {
    P.validate();
    os << '"' << comment << '\n';
    os << P.num_vars() << '\n';
    os << P.blocks.size() << '\n';
    for (std::size_t b = 0; b < P.blocks.size(); ++b) {
        if (b) os << ' ';
        os << (P.blocks[b].diagonal ? -P.blocks[b].size : P.blocks[b].size);
    }
    os << '\n';
    for (int i = 0; i < P.num_vars(); ++i) {
        if (i) os << ' ';
        os << format_double(P.c[i]);
    }
    os << '\n';
    for (std::size_t k = 0; k < P.F.size(); ++k) {
        // merge duplicates and drop zeros so the file is canonical
        std::map<std::tuple<int, int, int>, double> acc;
        for (const auto& e : P.F[k]) acc[{e.block, e.row, e.col}] += e.value;
        for (const auto& [key, v] : acc) {
            if (v == 0.0) continue;
            const auto& [b, r, c] = key;
            os << k << ' ' << (b + 1) << ' ' << (r + 1) << ' ' << (c + 1) << ' ' << format_double(v) << '\n';
        }
    }
}

inline Problem read_sdpa(std::istream& is) {
    Problem P;
    std::string line;
    // skip comment lines
    std::streampos pos;
    do {
        pos = is.tellg();
        if (!std::getline(is, line)) throw DomainError("read_sdpa: unexpected end of file");
    } while (!line.empty() && (line[0] == '"' || line[0] == '*'));
    is.seekg(pos);
    auto clean = [](std::string s) {
        for (char& ch : s)
            if (ch == ',' || ch == '{' || ch == '}' || ch == '(' || ch == ')') ch = ' ';
        return s;
    };
    int m = 0, nblocks = 0;
    {
        std::getline(is, line);
        std::istringstream(clean(line)) >> m;
        std::getline(is, line);
        std::istringstream(clean(line)) >> nblocks;
        std::getline(is, line);
        std::istringstream ss(clean(line));
        for (int b = 0; b < nblocks; ++b) {
            int s = 0;
            ss >> s;
            P.blocks.push_back({std::abs(s), s < 0});
        }
        P.c = Vector::Zero(m);
        int read = 0;
        while (read < m && std::getline(is, line)) {
            std::istringstream cs(clean(line));
            double v;
            while (read < m && cs >> v) P.c[read++] = v;
        }
    }
    P.F.assign(static_cast<std::size_t>(m + 1), {});
    int k, b, i, j;
    double v;
    while (is >> k >> b >> i >> j >> v) {
        if (i > j) std::swap(i, j);
        P.F.at(static_cast<std::size_t>(k)).push_back({b - 1, i - 1, j - 1, v});
    }
    P.validate();
    return P;
}

} // namespace netpred::sdp
