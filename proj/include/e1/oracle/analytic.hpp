#pragma once

// Adapters that expose closed-form Gaussian quantities through the
// callable types the training code consumes.

#include <type_traits>

#include "e1/dmd/distill.hpp"
#include "e1/oracle/gaussian.hpp"
#include "e1/oracle/quadrature.hpp"

namespace e1::oracle {

inline dmd::ScoreFn analytic_score(GaussianSpec g) {
    return [g](const RealArray& x, std::span<const double> t, const flow::Conditioning*) {
        RealArray out(x.shape());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            RealArray row = RealArray::vector(std::vector<double>(x.row(r).begin(), x.row(r).end()));
            RealArray s = gaussian_perturbed_score(g, t[r], row);
            std::copy(s.data(), s.data() + s.size(), out.row(r).begin());
        }
        return out;
    };
}

/// Per-row drift; rows sharing a time are evaluated together.
template <typename Spec>
flow::DriftFn analytic_drift_fn(Spec spec) {
    return [spec](const RealArray& x, std::span<const double> t, const flow::Conditioning*) {
        RealArray out(x.shape());
        std::size_t r = 0;
        while (r < x.rows()) {
            std::size_t e = r;
            while (e < x.rows() && t[e] == t[r]) ++e;
            RealArray block = RealArray::matrix(e - r, x.cols());
            std::copy(x.row(r).begin(), x.row(r).begin() + (e - r) * x.cols(), block.data());
            RealArray v;
            if constexpr (std::is_same_v<Spec, MixtureSpec>) v = mixture_analytic_drift(spec, t[r], block);
            else v = analytic_drift(spec, t[r], block);
            std::copy(v.data(), v.data() + v.size(), out.row(r).begin());
            r = e;
        }
        return out;
    };
}

/// Law of A z + b for z ~ N(0, I).
inline GaussianSpec affine_law(const dmd::AffineGenerator& gen) {
    const RealArray a = gen.matrix();
    const std::size_t d = a.rows();
    GaussianSpec g{gen.offset(), RealArray::matrix(d, d)};
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) g.cov(i, j) += a(i, k) * a(j, k);
    return g;
}

/// Deterministic 1-D batch: midpoint times on [t_min, t_max] crossed with
/// Gauss-Hermite nodes for z and W. Exact in expectation whenever the
/// integrand is a low-degree polynomial in (z, W), as for affine generators
/// with Gaussian scores.
inline dmd::GeneratorBatch quadrature_batch_1d(const flow::FlowSchedule& s, std::size_t time_nodes, std::size_t gh_nodes) {
    const auto times = midpoint_nodes(s.t_min, s.t_max, time_nodes);
    const auto gh = gauss_hermite(gh_nodes);
    const std::size_t rows = time_nodes * gh_nodes * gh_nodes;
    dmd::GeneratorBatch b;
    b.z = RealArray::matrix(rows, 1);
    b.noise = RealArray::matrix(rows, 1);
    std::size_t r = 0;
    for (double t : times)
        for (std::size_t i = 0; i < gh_nodes; ++i)
            for (std::size_t j = 0; j < gh_nodes; ++j, ++r) {
                b.z(r, 0) = gh.nodes[i];
                b.noise(r, 0) = gh.nodes[j];
                b.t.push_back(t);
                b.weight.push_back(gh.weights[i] * gh.weights[j] / static_cast<double>(time_nodes));
            }
    return b;
}

} // namespace e1::oracle
