#pragma once

// Closed-form ground truth for Gaussian and Gaussian-mixture data under the
// interpolation X_t = t X1 + (1 - t) X0 with X0 ~ N(0, I) independent of X1.
// If X1 ~ N(mu, S) then X_t ~ N(t mu, t^2 S + (1 - t)^2 I).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/real_array.hpp"
#include "e1/core/rng.hpp"

namespace e1::oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct GaussianSpec {
    RealArray mean;  // [d]
    RealArray cov;   // [d x d], symmetric positive definite

    std::size_t dim() const { return mean.size(); }

    static GaussianSpec isotropic(RealArray mean, double variance = 1.0) {
        const std::size_t d = mean.size();
        RealArray cov = RealArray::matrix(d, d);
        for (std::size_t i = 0; i < d; ++i) cov(i, i) = variance;
        return {std::move(mean), std::move(cov)};
    }
};

/// Degenerate data distribution concentrated at one point.
struct PointMass {
    RealArray location;  // [d]
};

struct MixtureComponent {
    double weight = 0.0;
    GaussianSpec gaussian;
};

struct MixtureSpec {
    std::vector<MixtureComponent> components;

    std::size_t dim() const { return components.front().gaussian.dim(); }
};

inline Vec to_vec(std::span<const double> v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

inline Mat to_mat(const RealArray& a) {
    Mat m(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j);
    return m;
}

inline RealArray from_vec(const Vec& v) { return RealArray::vector(std::vector<double>(v.data(), v.data() + v.size())); }

inline RealArray from_mat(const Mat& m) {
    RealArray a = RealArray::matrix(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) a(i, j) = m(i, j);
    return a;
}

/// Rows of x as points: [n x d] stays, a bare [d] vector is one point.
inline RealArray as_points(const RealArray& x, std::size_t d) {
    if (x.rank() == 1) {
        if (x.size() != d) throw ShapeError("oracle: point of dimension " + std::to_string(x.size()) + ", expected " + std::to_string(d));
        return x.reshaped({1, d});
    }
    if (x.rank() != 2 || x.cols() != d) {
        throw ShapeError("oracle: points " + shape_string(x.shape()) + " do not have dimension " + std::to_string(d));
    }
    return x;
}

/// Throws DomainError unless the covariance is symmetric (to 1e-12) and
/// positive definite.
inline void validate(const GaussianSpec& g) {
    const std::size_t d = g.dim();
    if (g.cov.rank() != 2 || g.cov.rows() != d || g.cov.cols() != d) {
        throw ShapeError("GaussianSpec: covariance " + shape_string(g.cov.shape()) + " for mean of dimension " + std::to_string(d));
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(g.cov(i, j) - g.cov(j, i)) > 1e-12) throw DomainError("GaussianSpec: covariance not symmetric");
    Eigen::LLT<Mat> llt(to_mat(g.cov));
    if (llt.info() != Eigen::Success) throw DomainError("GaussianSpec: covariance is singular or not positive definite");
}

inline void validate(const MixtureSpec& m) {
    if (m.components.empty()) throw DomainError("MixtureSpec: no components");
    double total = 0.0;
    for (const auto& c : m.components) {
        if (!(c.weight > 0.0)) throw DomainError("MixtureSpec: weights must be positive");
        if (c.gaussian.dim() != m.dim()) throw ShapeError("MixtureSpec: components differ in dimension");
        validate(c.gaussian);
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("MixtureSpec: weights do not sum to 1");
}

/// Marginal of X_t when X1 follows `g`.
inline GaussianSpec perturbed(const GaussianSpec& g, double t) {
    const std::size_t d = g.dim();
    GaussianSpec out{RealArray(Shape{d}), RealArray::matrix(d, d)};
    for (std::size_t i = 0; i < d; ++i) {
        out.mean[i] = t * g.mean[i];
        for (std::size_t j = 0; j < d; ++j) out.cov(i, j) = t * t * g.cov(i, j) + (i == j ? (1.0 - t) * (1.0 - t) : 0.0);
    }
    return out;
}

inline double gaussian_log_density(const GaussianSpec& g, std::span<const double> x) {
    Eigen::LLT<Mat> llt(to_mat(g.cov));
    if (llt.info() != Eigen::Success) throw DomainError("gaussian_log_density: singular covariance");
    const Vec r = to_vec(x) - to_vec(g.mean.span());
    const Vec z = llt.matrixL().solve(r);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < llt.matrixL().rows(); ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i));
    const double d = static_cast<double>(g.dim());
    return -0.5 * (z.squaredNorm() + logdet + d * std::log(2.0 * std::numbers::pi));
}

/// Score of the perturbed density: -(t^2 S + (1-t)^2 I)^{-1} (x - t mu).
/// x is [n x d] (or a single [d] point); result has the shape of x.
inline RealArray gaussian_perturbed_score(const GaussianSpec& g, double t, const RealArray& x) {
    if (!(t >= 0.0 && t < 1.0)) throw DomainError("gaussian_perturbed_score: t must lie in [0, 1)");
    const std::size_t d = g.dim();
    const RealArray pts = as_points(x, d);
    const GaussianSpec pt = perturbed(g, t);
    Eigen::LLT<Mat> llt(to_mat(pt.cov));
    if (llt.info() != Eigen::Success) throw DomainError("gaussian_perturbed_score: singular covariance");
    RealArray out(pts.shape());
    const Vec m = to_vec(pt.mean.span());
    for (std::size_t i = 0; i < pts.rows(); ++i) {
        const Vec s = -llt.solve(to_vec(pts.row(i)) - m);
        std::copy(s.data(), s.data() + d, out.row(i).begin());
    }
    return out.reshaped(x.shape());
}

/// Drift E[X0 - X1 | X_t = x] for Gaussian data, by joint-Gaussian regression:
/// v = ((1-t) I - t S) C^{-1} (x - t mu) - mu, with C = t^2 S + (1-t)^2 I.
inline RealArray analytic_drift(const GaussianSpec& g, double t, const RealArray& x) {
    if (!(t > 0.0 && t < 1.0)) throw DomainError("analytic_drift: t must lie strictly inside (0, 1)");
    const std::size_t d = g.dim();
    const RealArray pts = as_points(x, d);
    const GaussianSpec pt = perturbed(g, t);
    Eigen::LLT<Mat> llt(to_mat(pt.cov));
    if (llt.info() != Eigen::Success) throw DomainError("analytic_drift: singular covariance");
    const Mat gain = (1.0 - t) * Mat::Identity(d, d) - t * to_mat(g.cov);
    const Vec mu = to_vec(g.mean.span());
    RealArray out(pts.shape());
    for (std::size_t i = 0; i < pts.rows(); ++i) {
        const Vec v = gain * llt.solve(to_vec(pts.row(i)) - t * mu) - mu;
        std::copy(v.data(), v.data() + d, out.row(i).begin());
    }
    return out.reshaped(x.shape());
}

/// Point-mass data: X_t = t c + (1-t) X0, so v = (x - t c)/(1-t) - c.
inline RealArray analytic_drift(const PointMass& p, double t, const RealArray& x) {
    if (!(t > 0.0 && t < 1.0)) throw DomainError("analytic_drift: t must lie strictly inside (0, 1)");
    const std::size_t d = p.location.size();
    const RealArray pts = as_points(x, d);
    RealArray out(pts.shape());
    for (std::size_t i = 0; i < pts.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) out(i, j) = (pts(i, j) - t * p.location[j]) / (1.0 - t) - p.location[j];
    return out.reshaped(x.shape());
}

namespace detail {

// Per-component quantities of a mixture at a fixed time.
struct PerturbedComponent {
    double log_weight;
    Vec mean;          // t mu
    Eigen::LLT<Mat> chol;  // of t^2 S + (1-t)^2 I
    double log_norm;   // -0.5 (log det C + d log 2 pi)
    Mat drift_gain;    // (1-t) I - t S
    Vec data_mean;     // mu
};

inline std::vector<PerturbedComponent> perturb_components(const MixtureSpec& m, double t) {
    validate(m);
    const auto d = static_cast<Eigen::Index>(m.dim());
    std::vector<PerturbedComponent> out;
    for (const auto& c : m.components) {
        const GaussianSpec pt = perturbed(c.gaussian, t);
        PerturbedComponent pc{std::log(c.weight), to_vec(pt.mean.span()), Eigen::LLT<Mat>(to_mat(pt.cov)), 0.0,
                              (1.0 - t) * Mat::Identity(d, d) - t * to_mat(c.gaussian.cov),
                              to_vec(c.gaussian.mean.span())};
        if (pc.chol.info() != Eigen::Success) throw DomainError("mixture: singular component covariance");
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) logdet += 2.0 * std::log(pc.chol.matrixLLT()(i, i));
        pc.log_norm = -0.5 * (logdet + static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
        out.push_back(std::move(pc));
    }
    return out;
}

// Normalized log responsibilities at x; the log mixture density goes to *log_density.
inline std::vector<double> log_responsibilities(const std::vector<PerturbedComponent>& comps, const Vec& x,
                                                double* log_density = nullptr) {
    std::vector<double> lr(comps.size());
    double mx = -INFINITY;
    for (std::size_t k = 0; k < comps.size(); ++k) {
        const Vec z = comps[k].chol.matrixL().solve(x - comps[k].mean);
        lr[k] = comps[k].log_weight + comps[k].log_norm - 0.5 * z.squaredNorm();
        mx = std::max(mx, lr[k]);
    }
    double sum = 0.0;
    for (double v : lr) sum += std::exp(v - mx);
    const double lz = mx + std::log(sum);
    for (double& v : lr) v -= lz;
    if (log_density) *log_density = lz;
    return lr;
}

template <typename PerComponent>
RealArray mixture_combine(const MixtureSpec& m, double t, const RealArray& x, PerComponent&& per_component) {
    const auto comps = perturb_components(m, t);
    const std::size_t d = m.dim();
    const RealArray pts = as_points(x, d);
    RealArray out(pts.shape());
    for (std::size_t i = 0; i < pts.rows(); ++i) {
        const Vec xi = to_vec(pts.row(i));
        const auto lr = log_responsibilities(comps, xi);
        Vec acc = Vec::Zero(static_cast<Eigen::Index>(d));
        for (std::size_t k = 0; k < comps.size(); ++k) acc += std::exp(lr[k]) * per_component(comps[k], xi);
        std::copy(acc.data(), acc.data() + d, out.row(i).begin());
    }
    return out.reshaped(x.shape());
}

} // namespace detail

inline double mixture_log_density(const MixtureSpec& m, double t, std::span<const double> x) {
    double lz = 0.0;
    detail::log_responsibilities(detail::perturb_components(m, t), to_vec(x), &lz);
    return lz;
}

/// Responsibility-weighted component scores, responsibilities computed with
/// max-subtraction in the log domain.
inline RealArray mixture_perturbed_score(const MixtureSpec& m, double t, const RealArray& x) {
    if (!(t >= 0.0 && t < 1.0)) throw DomainError("mixture_perturbed_score: t must lie in [0, 1)");
    return detail::mixture_combine(m, t, x, [](const detail::PerturbedComponent& c, const Vec& xi) -> Vec {
        return -c.chol.solve(xi - c.mean);
    });
}

/// E[X0 - X1 | X_t = x] for mixture data: component drifts weighted by the
/// posterior responsibilities.
inline RealArray mixture_analytic_drift(const MixtureSpec& m, double t, const RealArray& x) {
    if (!(t > 0.0 && t < 1.0)) throw DomainError("mixture_analytic_drift: t must lie strictly inside (0, 1)");
    return detail::mixture_combine(m, t, x, [](const detail::PerturbedComponent& c, const Vec& xi) -> Vec {
        return c.drift_gain * c.chol.solve(xi - c.mean) - c.data_mean;
    });
}

/// KL(q || p) between Gaussians.
inline double gaussian_kl(const GaussianSpec& q, const GaussianSpec& p) {
    validate(q);
    validate(p);
    if (q.dim() != p.dim()) throw ShapeError("gaussian_kl: dimensions differ");
    const Mat sq = to_mat(q.cov), sp = to_mat(p.cov);
    Eigen::LLT<Mat> lp(sp), lq(sq);
    const Vec dm = to_vec(p.mean.span()) - to_vec(q.mean.span());
    double logdet_p = 0.0, logdet_q = 0.0;
    for (Eigen::Index i = 0; i < sp.rows(); ++i) {
        logdet_p += 2.0 * std::log(lp.matrixLLT()(i, i));
        logdet_q += 2.0 * std::log(lq.matrixLLT()(i, i));
    }
    const double trace = lp.solve(sq).trace();
    const double maha = dm.dot(lp.solve(dm));
    return 0.5 * (trace + maha - static_cast<double>(q.dim()) + logdet_p - logdet_q);
}

/// n draws from a Gaussian as an [n x d] array.
inline RealArray sample(const GaussianSpec& g, std::size_t n, Rng& rng) {
    const std::size_t d = g.dim();
    Eigen::LLT<Mat> llt(to_mat(g.cov));
    if (llt.info() != Eigen::Success) throw DomainError("sample: singular covariance");
    const Mat l = llt.matrixL();
    RealArray out = RealArray::matrix(n, d);
    Vec z(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) z[j] = rng.normal();
        const Vec x = to_vec(g.mean.span()) + l * z;
        std::copy(x.data(), x.data() + d, out.row(i).begin());
    }
    return out;
}

/// n draws from a mixture; component indices returned through `labels` if given.
inline RealArray sample(const MixtureSpec& m, std::size_t n, Rng& rng, std::vector<std::size_t>* labels = nullptr) {
    validate(m);
    const std::size_t d = m.dim();
    RealArray out = RealArray::matrix(n, d);
    if (labels) labels->assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        std::size_t k = 0;
        while (k + 1 < m.components.size() && u >= m.components[k].weight) {
            u -= m.components[k].weight;
            ++k;
        }
        const RealArray x = sample(m.components[k].gaussian, 1, rng);
        std::copy(x.data(), x.data() + d, out.row(i).begin());
        if (labels) (*labels)[i] = k;
    }
    return out;
}

/// Gaussian with the sample mean and (unbiased) sample covariance of [n x d] points.
inline GaussianSpec moment_fit(const RealArray& points) {
    const std::size_t n = points.rows(), d = points.cols();
    if (n < 2) throw DomainError("moment_fit: need at least two points");
    GaussianSpec g{RealArray(Shape{d}), RealArray::matrix(d, d)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g.mean[j] += points(i, j) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                g.cov(a, b) += (points(i, a) - g.mean[a]) * (points(i, b) - g.mean[b]) / static_cast<double>(n - 1);
    return g;
}

/// Midpoints of n equal cells of [lo, hi].
inline std::vector<double> midpoint_nodes(double lo, double hi, std::size_t n) {
    std::vector<double> nodes(n);
    for (std::size_t i = 0; i < n; ++i) nodes[i] = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    return nodes;
}

/// Weighted average over time of KL(q_t || p_t) for Gaussian q and p, with
/// t uniform on [t_min, t_max] and an n-point midpoint rule.
template <typename Weighting>
double weighted_perturbed_kl(const GaussianSpec& q, const GaussianSpec& p, Weighting&& w, double t_min, double t_max,
                             std::size_t nodes = 64) {
    double total = 0.0;
    for (double t : midpoint_nodes(t_min, t_max, nodes)) total += w(t) * gaussian_kl(perturbed(q, t), perturbed(p, t));
    return total / static_cast<double>(nodes);
}

} // namespace e1::oracle
