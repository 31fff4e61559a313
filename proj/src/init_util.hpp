#ifndef COEVOLVE_SRC_INIT_UTIL_HPP_
#define COEVOLVE_SRC_INIT_UTIL_HPP_

#include <random>

#include "coevolve/common.hpp"

namespace coevolve::detail {

/// Glorot-uniform initialization.
inline Matrix glorot(int rows, int cols, std::mt19937_64 &rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
}

} // namespace coevolve::detail

#endif // COEVOLVE_SRC_INIT_UTIL_HPP_
