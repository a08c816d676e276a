#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/real_array.hpp"

namespace e1::oracle {

/// Dynamic time warping distance between sequences of feature rows ([n x d]
/// and [m x d]). Local cost is the Euclidean distance, steps (1,0), (0,1) and
/// (1,1), no band constraint. The result is the minimal summed path cost.
inline double dtw_distance(const RealArray& a, const RealArray& b) {
    if (a.rows() == 0 || b.rows() == 0 || a.empty() || b.empty()) throw DomainError("dtw_distance: empty sequence");
    if (a.cols() != b.cols()) {
        throw ShapeError("dtw_distance: feature dimensions differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()) + ")");
    }
    const std::size_t n = a.rows(), m = b.rows();
    auto cost = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
        return std::sqrt(s);
    };
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) cur[j] = cost(i - 1, j - 1) + std::min({prev[j], cur[j - 1], prev[j - 1]});
        std::swap(prev, cur);
    }
    return prev[m];
}

/// Cost of the path that advances both sequences together and then holds the
/// last row of the shorter one. An upper bound on dtw_distance.
inline double padded_euclidean_cost(const RealArray& a, const RealArray& b) {
    const std::size_t n = a.rows(), m = b.rows();
    double total = 0.0;
    for (std::size_t k = 0; k < std::max(n, m); ++k) {
        const std::size_t i = std::min(k, n - 1), j = std::min(k, m - 1);
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
        total += std::sqrt(s);
    }
    return total;
}

} // namespace e1::oracle
