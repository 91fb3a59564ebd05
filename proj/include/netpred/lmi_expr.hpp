#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "netpred/model.hpp"

namespace netpred::lmi {

enum class Shape { Symmetric, Full };
enum class Cone { Free, Psd, PsdStrict };

[[nodiscard]] inline std::string_view to_string(Cone c) {
    switch (c) {
    case Cone::Free: return "free";
    case Cone::Psd: return "psd";
    case Cone::PsdStrict: return "psd_strict";
    }
    return "?";
}

struct VarId {
    int index = -1;
    friend bool operator==(VarId a, VarId b) { return a.index == b.index; }
};

struct Variable {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Shape shape = Shape::Full;
    Cone cone = Cone::Free;

    /// number of scalar degrees of freedom
    [[nodiscard]] Eigen::Index dofs() const { return shape == Shape::Symmetric ? rows * (rows + 1) / 2 : rows * cols; }

    /// Basis element of dof d as the (a, b) position it controls. Symmetric
    /// variables enumerate the upper triangle row by row.
    [[nodiscard]] std::pair<Eigen::Index, Eigen::Index> dof_position(Eigen::Index d) const {
        if (shape == Shape::Full) return {d / cols, d % cols};
        Eigen::Index a = 0;
        while (d >= rows - a) {
            d -= rows - a;
            ++a;
        }
        return {a, a + d};
    }

    [[nodiscard]] Matrix from_dofs(const double* y) const {
        Matrix M(rows, cols);
        if (shape == Shape::Full) {
            for (Eigen::Index a = 0; a < rows; ++a)
                for (Eigen::Index b = 0; b < cols; ++b) M(a, b) = y[a * cols + b];
        } else {
            Eigen::Index d = 0;
            for (Eigen::Index a = 0; a < rows; ++a)
                for (Eigen::Index b = a; b < rows; ++b) {
                    M(a, b) = y[d];
                    M(b, a) = y[d];
                    ++d;
                }
        }
        return M;
    }

    [[nodiscard]] std::vector<double> to_dofs(const Matrix& M) const {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(dofs()));
        if (shape == Shape::Full) {
            for (Eigen::Index a = 0; a < rows; ++a)
                for (Eigen::Index b = 0; b < cols; ++b) out.push_back(M(a, b));
        } else {
            for (Eigen::Index a = 0; a < rows; ++a)
                for (Eigen::Index b = a; b < rows; ++b) out.push_back(0.5 * (M(a, b) + M(b, a)));
        }
        return out;
    }
};

/// left * op(X) * right, op = identity or transpose
struct Term {
    VarId var;
    bool transposed = false;
    Matrix left;
    Matrix right;
};

/// Affine matrix expression: sum of terms plus a constant.
class Expr {
public:
    Expr() = default;
    Expr(Eigen::Index rows, Eigen::Index cols) : constant_(Matrix::Zero(rows, cols)) {}

    static Expr zero(Eigen::Index rows, Eigen::Index cols) { return Expr(rows, cols); }

    static Expr constant(Matrix C) {
        Expr e;
        e.constant_ = std::move(C);
        return e;
    }

    static Expr of(VarId v, const Variable& info) {
        Expr e(info.rows, info.cols);
        e.terms_.push_back({v, false, Matrix::Identity(info.rows, info.rows), Matrix::Identity(info.cols, info.cols)});
        return e;
    }

    [[nodiscard]] Eigen::Index rows() const { return constant_.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return constant_.cols(); }
    [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }
    [[nodiscard]] const Matrix& constant_part() const { return constant_; }

    [[nodiscard]] Expr T() const {
        Expr e;
        e.constant_ = constant_.transpose();
        for (const auto& t : terms_)
            e.terms_.push_back({t.var, !t.transposed, t.right.transpose(), t.left.transpose()});
        return e;
    }

    Expr& operator+=(const Expr& o) {
        check_same(o);
        constant_ += o.constant_;
        terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
        return *this;
    }
    Expr& operator-=(const Expr& o) { return *this += -o; }
    Expr& operator*=(double a) {
        constant_ *= a;
        for (auto& t : terms_) t.left *= a;
        return *this;
    }

    friend Expr operator+(Expr a, const Expr& b) { return a += b; }
    friend Expr operator-(Expr a, const Expr& b) { return a -= b; }
    friend Expr operator-(Expr a) { return a *= -1.0; }
    friend Expr operator*(double s, Expr a) { return a *= s; }
    friend Expr operator*(Expr a, double s) { return a *= s; }

    friend Expr operator*(const Matrix& M, const Expr& e) {
        if (M.cols() != e.rows()) throw DimensionError("Expr: left factor has wrong width");
        Expr r;
        r.constant_ = M * e.constant_;
        for (const auto& t : e.terms_) r.terms_.push_back({t.var, t.transposed, M * t.left, t.right});
        return r;
    }
    friend Expr operator*(const Expr& e, const Matrix& M) {
        if (e.cols() != M.rows()) throw DimensionError("Expr: right factor has wrong height");
        Expr r;
        r.constant_ = e.constant_ * M;
        for (const auto& t : e.terms_) r.terms_.push_back({t.var, t.transposed, t.left, t.right * M});
        return r;
    }

    /// Coefficient of one scalar dof (position (a,b) of the variable).
    [[nodiscard]] Matrix coefficient(VarId v, const Variable& info, Eigen::Index a, Eigen::Index b) const {
        Matrix C = Matrix::Zero(rows(), cols());
        for (const auto& t : terms_) {
            if (!(t.var == v)) continue;
            if (info.shape == Shape::Symmetric) {
                C.noalias() += t.left.col(a) * t.right.row(b);
                if (a != b) C.noalias() += t.left.col(b) * t.right.row(a);
            } else if (!t.transposed) {
                C.noalias() += t.left.col(a) * t.right.row(b);
            } else {
                C.noalias() += t.left.col(b) * t.right.row(a);
            }
        }
        return C;
    }

    [[nodiscard]] bool depends_on(VarId v) const {
        for (const auto& t : terms_)
            if (t.var == v) return true;
        return false;
    }

    template <class Lookup>
    [[nodiscard]] Matrix evaluate(const Lookup& value_of) const {
        Matrix R = constant_;
        for (const auto& t : terms_) {
            const Matrix& X = value_of(t.var);
            if (t.transposed)
                R.noalias() += t.left * X.transpose() * t.right;
            else
                R.noalias() += t.left * X * t.right;
        }
        return R;
    }

private:
    void check_same(const Expr& o) const {
        if (rows() != o.rows() || cols() != o.cols()) throw DimensionError("Expr: dimension mismatch in sum");
    }

    std::vector<Term> terms_;
    Matrix constant_;
};

/// Symmetric block matrix given by its upper blocks; unset blocks are zero.
class BlockTable {
public:
    explicit BlockTable(std::vector<Eigen::Index> sizes) : sizes_(std::move(sizes)) {}

    void set(std::size_t i, std::size_t j, Expr e) {
        if (i > j) {
            std::swap(i, j);
            e = e.T();
        }
        if (e.rows() != sizes_.at(i) || e.cols() != sizes_.at(j))
            throw DimensionError("BlockTable: block (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                 ") has the wrong size");
        blocks_.insert_or_assign({i, j}, std::move(e));
    }

    [[nodiscard]] Expr get(std::size_t i, std::size_t j) const {
        const bool swapped = i > j;
        if (swapped) std::swap(i, j);
        auto it = blocks_.find({i, j});
        if (it == blocks_.end()) return Expr::zero(sizes_.at(swapped ? j : i), sizes_.at(swapped ? i : j));
        return swapped ? it->second.T() : it->second;
    }

    void add(std::size_t i, std::size_t j, const Expr& e) { set(i, j, get(i, j) + (i > j ? e.T() : e)); }

    /// extra block row/column of the given size; returns its slot
    std::size_t append_slot(Eigen::Index size) {
        sizes_.push_back(size);
        return sizes_.size() - 1;
    }

    [[nodiscard]] const std::vector<Eigen::Index>& sizes() const { return sizes_; }
    [[nodiscard]] const std::map<std::pair<std::size_t, std::size_t>, Expr>& blocks() const { return blocks_; }
    [[nodiscard]] Eigen::Index dim() const {
        Eigen::Index d = 0;
        for (auto s : sizes_) d += s;
        return d;
    }
    [[nodiscard]] Eigen::Index offset(std::size_t i) const {
        Eigen::Index d = 0;
        for (std::size_t k = 0; k < i; ++k) d += sizes_[k];
        return d;
    }

private:
    std::vector<Eigen::Index> sizes_;
    std::map<std::pair<std::size_t, std::size_t>, Expr> blocks_;
};

} // namespace netpred::lmi
