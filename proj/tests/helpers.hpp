#pragma once

#include <random>

#include "netpred/bench.hpp"

namespace nptest {

using netpred::Matrix;
using netpred::Vector;

inline netpred::LtiPlant pendulum_plant() { return netpred::bench::pendulum().plant; }
inline netpred::Gain pendulum_gain() { return netpred::bench::pendulum().gain; }

inline double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

inline Matrix random_matrix(std::mt19937_64& g, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Matrix M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) M(i, j) = d(g);
    return M;
}

inline netpred::SimConfig pendulum_cfg(double horizon = 20.0, std::uint64_t seed = 1) {
    netpred::SimConfig c;
    c.horizon = horizon;
    c.seed = seed;
    c.x0 = netpred::bench::pendulum_x0();
    return c;
}

} // namespace nptest
