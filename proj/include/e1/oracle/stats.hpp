#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <vector>

#include "e1/core/error.hpp"

namespace e1::oracle {

/// Pearson goodness-of-fit p-value with (bins - 1) degrees of freedom.
inline double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected) {
    if (observed.size() != expected.size() || observed.size() < 2) {
        throw DomainError("chi_square_p: need matching counts over at least two bins");
    }
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (!(expected[i] > 0.0)) throw DomainError("chi_square_p: expected counts must be positive");
        stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    }
    boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

} // namespace e1::oracle
