#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "e1/core/error.hpp"

namespace e1::oracle {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;  // sum to 1
};

/// Gauss-Hermite rule for expectations under N(0, 1), exact for polynomials
/// of degree up to 2n - 1 (Golub-Welsch: eigen-decomposition of the Jacobi
/// matrix of the probabilists' Hermite recurrence).
inline QuadratureRule gauss_hermite(std::size_t n) {
    if (n == 0) throw DomainError("gauss_hermite: need at least one node");
    const auto m = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index k = 1; k < m; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    QuadratureRule rule;
    for (Eigen::Index i = 0; i < m; ++i) {
        rule.nodes.push_back(eig.eigenvalues()(i));
        const double v = eig.eigenvectors()(0, i);
        rule.weights.push_back(v * v);
    }
    return rule;
}

} // namespace e1::oracle
