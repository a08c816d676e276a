#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/real_array.hpp"
#include "e1/core/rng.hpp"

namespace e1::oracle {

inline constexpr double kMinBandwidth = 1e-6;

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

inline RealArray pooled(const RealArray& xs, const RealArray& ys) {
    if (xs.rank() != 2 || ys.rank() != 2 || xs.cols() != ys.cols()) {
        throw ShapeError("mmd: sample sets must be [n x d] with equal d, got " + shape_string(xs.shape()) + " and " +
                         shape_string(ys.shape()));
    }
    RealArray all = RealArray::matrix(xs.rows() + ys.rows(), xs.cols());
    std::copy(xs.values().begin(), xs.values().end(), all.values().begin());
    std::copy(ys.values().begin(), ys.values().end(), all.values().begin() + static_cast<std::ptrdiff_t>(xs.size()));
    return all;
}

// Unbiased MMD^2 from a pooled kernel matrix; in_x[i] marks rows of group X.
inline double unbiased_from_kernel(const std::vector<double>& k, const std::vector<char>& in_x) {
    const std::size_t total = in_x.size();
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    std::size_t m = 0;
    for (std::size_t a = 0; a < total; ++a) {
        m += in_x[a] ? 1 : 0;
        const double* row = k.data() + a * total;
        double sx = 0.0, sy = 0.0;
        for (std::size_t b = a + 1; b < total; ++b) (in_x[b] ? sx : sy) += row[b];
        if (in_x[a]) {
            kxx += sx;
            kxy += sy;
        } else {
            kyy += sy;
            kxy += sx;
        }
    }
    const double md = static_cast<double>(m), nd = static_cast<double>(total - m);
    return 2.0 * kxx / (md * (md - 1.0)) + 2.0 * kyy / (nd * (nd - 1.0)) - 2.0 * kxy / (md * nd);
}

} // namespace detail

/// Median of all pairwise Euclidean distances, floored at kMinBandwidth.
inline double median_pairwise_distance(const RealArray& points) {
    std::vector<double> d;
    const std::size_t n = points.rows();
    d.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(detail::sq_dist(points.row(i), points.row(j))));
    if (d.empty()) return kMinBandwidth;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return std::max(*mid, kMinBandwidth);
}

/// RBF kernel matrix of the pooled points, k(x, y) = exp(-|x - y|^2 / (2 h^2)).
inline std::vector<double> rbf_kernel_matrix(const RealArray& points, double bandwidth) {
    const std::size_t n = points.rows();
    std::vector<double> k(n * n);
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    for (std::size_t i = 0; i < n; ++i) {
        k[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::exp(-detail::sq_dist(points.row(i), points.row(j)) * inv);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    return k;
}

/// Unbiased squared MMD with an RBF kernel. Bandwidth defaults to the median
/// pairwise distance of the pooled set.
inline double mmd(const RealArray& xs, const RealArray& ys, double bandwidth = 0.0) {
    const RealArray all = detail::pooled(xs, ys);
    if (xs.rows() < 2 || ys.rows() < 2) throw DomainError("mmd: need at least two samples per set");
    const double h = bandwidth > 0.0 ? bandwidth : median_pairwise_distance(all);
    std::vector<char> in_x(all.rows(), 0);
    std::fill_n(in_x.begin(), xs.rows(), 1);
    return detail::unbiased_from_kernel(rbf_kernel_matrix(all, h), in_x);
}

/// Biased (V-statistic) squared MMD; zero for identical sets.
inline double mmd_biased(const RealArray& xs, const RealArray& ys, double bandwidth = 0.0) {
    const RealArray all = detail::pooled(xs, ys);
    const double h = bandwidth > 0.0 ? bandwidth : median_pairwise_distance(all);
    const auto k = rbf_kernel_matrix(all, h);
    const std::size_t m = xs.rows(), total = all.rows();
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (std::size_t a = 0; a < total; ++a)
        for (std::size_t b = 0; b < total; ++b) {
            const double v = k[a * total + b];
            if (a < m && b < m) kxx += v;
            else if (a >= m && b >= m) kyy += v;
            else kxy += v;
        }
    const double md = static_cast<double>(m), nd = static_cast<double>(total - m);
    return kxx / (md * md) + kyy / (nd * nd) - kxy / (md * nd);
}

struct PermutationTest {
    double statistic = 0.0;  // unbiased MMD^2 of the given split
    double threshold = 0.0;  // requested quantile of the permutation null
    double p_value = 1.0;    // (1 + #{null >= statistic}) / (1 + permutations)
    std::vector<double> null;

    bool rejects() const { return statistic > threshold; }
};

/// Permutation two-sample test on the unbiased MMD^2 statistic. The kernel
/// bandwidth is fixed from the pooled set, so it is shared by every shuffle.
inline PermutationTest mmd_permutation_test(const RealArray& xs, const RealArray& ys, std::size_t permutations, Rng& rng,
                                            double quantile = 0.99) {
    const RealArray all = detail::pooled(xs, ys);
    if (xs.rows() < 2 || ys.rows() < 2) throw DomainError("mmd_permutation_test: need at least two samples per set");
    const double h = median_pairwise_distance(all);
    const auto k = rbf_kernel_matrix(all, h);
    const std::size_t total = all.rows(), m = xs.rows();
    std::vector<char> in_x(total, 0);
    std::fill_n(in_x.begin(), m, 1);

    PermutationTest result;
    result.statistic = detail::unbiased_from_kernel(k, in_x);
    std::size_t exceed = 0;
    for (std::size_t p = 0; p < permutations; ++p) {
        for (std::size_t i = total - 1; i > 0; --i) std::swap(in_x[i], in_x[rng.below(i + 1)]);
        const double s = detail::unbiased_from_kernel(k, in_x);
        result.null.push_back(s);
        if (s >= result.statistic) ++exceed;
    }
    std::vector<double> sorted = result.null;
    std::sort(sorted.begin(), sorted.end());
    if (!sorted.empty()) {
        const auto idx = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(sorted.size()))) - 1;
        result.threshold = sorted[std::min(idx, sorted.size() - 1)];
    }
    result.p_value = (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(permutations));
    return result;
}

} // namespace e1::oracle
