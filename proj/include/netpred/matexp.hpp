#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "netpred/model.hpp"

namespace netpred {

/// Exact discretization of x' = A x + B u over a step delta with u held constant.
struct ZohPair {
    Matrix Ad;
    Matrix Bd;
    double delta = 0.0;
};

/// e^{A t} by scaling and squaring with a degree-13 Pade approximant.
[[nodiscard]] inline Matrix expm(const Matrix& A, double t) {
    if (A.rows() != A.cols()) throw DimensionError("expm: matrix must be square");
    if (!A.allFinite() || !std::isfinite(t)) throw DomainError("expm: non-finite input");
    if (t == 0.0) return Matrix::Identity(A.rows(), A.cols());
    Matrix At = A * t;
    return At.exp();
}

namespace detail {

// exp([[A, B], [0, 0]] * delta) = [[e^{A delta}, int_0^delta e^{As} B ds], [0, I]]
inline ZohPair augmented_exp(const Matrix& A, const Matrix& B, double delta) {
    const Eigen::Index n = A.rows();
    const Eigen::Index m = B.cols();
    if (delta == 0.0) return {Matrix::Identity(n, n), Matrix::Zero(n, m), 0.0};
    Matrix aug = Matrix::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = A * delta;
    aug.topRightCorner(n, m) = B * delta;
    Matrix E = aug.exp();
    return {E.topLeftCorner(n, n), E.topRightCorner(n, m), delta};
}

} // namespace detail

[[nodiscard]] inline ZohPair zoh_discretize(const LtiPlant& plant, double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw DomainError("zoh_discretize: delta must be >= 0");
    return detail::augmented_exp(plant.A(), plant.B(), delta);
}

/// int_a^b e^{A(c - theta)} B dtheta
///
/// Substituting s = c - theta gives e^{A(c-b)} int_0^{b-a} e^{As} B ds, so one
/// augmented exponential plus one plain exponential; A is never inverted.
[[nodiscard]] inline Matrix input_integral(const LtiPlant& plant, double a, double b, double c) {
    if (!(a <= b)) throw DomainError("input_integral: requires a <= b");
    if (a == b) return Matrix::Zero(plant.n(), plant.m());
    const ZohPair zp = detail::augmented_exp(plant.A(), plant.B(), b - a);
    if (c == b) return zp.Bd;
    return expm(plant.A(), c - b) * zp.Bd;
}

// ----------------------------------------------------------------------------
// Independent oracles (tests only). Nothing here calls expm() above.
// ----------------------------------------------------------------------------
namespace oracle {

/// Truncated Taylor series with scaling and squaring; independent of Eigen's Pade code.
[[nodiscard]] inline Matrix taylor_exp(const Matrix& M) {
    const Eigen::Index n = M.rows();
    int squarings = 0;
    double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
    while (norm > 0.25) {
        norm *= 0.5;
        ++squarings;
    }
    const Matrix S = M / std::ldexp(1.0, squarings);
    Matrix term = Matrix::Identity(n, n);
    Matrix sum = term;
    for (int k = 1; k <= 30; ++k) {
        term = term * S / static_cast<double>(k);
        sum += term;
        if (term.cwiseAbs().maxCoeff() < 1e-20 * sum.cwiseAbs().maxCoeff()) break;
    }
    for (int i = 0; i < squarings; ++i) sum = sum * sum;
    return sum;
}

/// Midpoint-rule approximation of input_integral(a, b, c).
[[nodiscard]] inline Matrix riemann_oracle(const LtiPlant& plant, double a, double b, double c, std::int64_t panels) {
    if (panels < 1) throw DomainError("riemann_oracle: panels must be >= 1");
    const Matrix& A = plant.A();
    const Matrix& B = plant.B();
    if (a == b) return Matrix::Zero(plant.n(), plant.m());
    const double d = (b - a) / static_cast<double>(panels);
    // walk theta_i from the right end: e^{A(b - theta_i)} for theta_i = b - (j + 1/2) d
    const Matrix step = taylor_exp(A * d);
    Matrix E = taylor_exp(A * (0.5 * d));
    Matrix acc = Matrix::Zero(plant.n(), plant.m());
    for (std::int64_t j = 0; j < panels; ++j) {
        acc.noalias() += E * B;
        E = E * step;
    }
    return taylor_exp(A * (c - b)) * acc * d;
}

/// (I + A dt)^N with Richardson extrapolation over N and 2N steps; second-order accurate.
[[nodiscard]] inline Matrix product_exp(const Matrix& A, double t, std::int64_t steps) {
    auto euler = [&](std::int64_t N) {
        const Eigen::Index n = A.rows();
        const Matrix step = Matrix::Identity(n, n) + A * (t / static_cast<double>(N));
        Matrix P = Matrix::Identity(n, n);
        for (std::int64_t i = 0; i < N; ++i) P = P * step;
        return P;
    };
    return 2.0 * euler(2 * steps) - euler(steps);
}

} // namespace oracle

} // namespace netpred
