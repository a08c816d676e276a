#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "e1/oracle/dtw.hpp"
#include "e1/oracle/finite_diff.hpp"
#include "e1/oracle/gaussian.hpp"
#include "e1/oracle/mmd.hpp"

using namespace e1;
using namespace e1::oracle;

namespace {

GaussianSpec anisotropic() {
    GaussianSpec g{RealArray::vector({1.0, -0.5}), RealArray::matrix(2, 2, {2.0, 0.6, 0.6, 0.5})};
    validate(g);
    return g;
}

MixtureSpec two_modes(double sep) {
    MixtureSpec m;
    m.components.push_back({0.5, GaussianSpec::isotropic(RealArray::vector({-sep, 0.0}), 0.3)});
    m.components.push_back({0.5, GaussianSpec::isotropic(RealArray::vector({sep, 0.0}), 0.3)});
    return m;
}

RealArray numeric_gradient(const std::function<double(std::span<const double>)>& f, const RealArray& x, double h = 1e-5) {
    RealArray g(x.shape());
    std::vector<double> p(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double o = p[i];
        p[i] = o + h;
        const double up = f(p);
        p[i] = o - h;
        const double down = f(p);
        p[i] = o;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

// Minimum over every monotone warping path, by explicit recursion.
double dtw_brute_force(const RealArray& a, const RealArray& b) {
    std::function<double(std::size_t, std::size_t)> best = [&](std::size_t i, std::size_t j) -> double {
        double c = 0.0;
        for (std::size_t k = 0; k < a.cols(); ++k) c += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
        c = std::sqrt(c);
        if (i == a.rows() - 1 && j == b.rows() - 1) return c;
        double rest = INFINITY;
        if (i + 1 < a.rows()) rest = std::min(rest, best(i + 1, j));
        if (j + 1 < b.rows()) rest = std::min(rest, best(i, j + 1));
        if (i + 1 < a.rows() && j + 1 < b.rows()) rest = std::min(rest, best(i + 1, j + 1));
        return c + rest;
    };
    return best(0, 0);
}

} // namespace

TEST(GaussianScore, IsotropicClosedFormAndNoiseEndpoint) {
    auto g = GaussianSpec::isotropic(RealArray::vector({0.0, 0.0}));
    RealArray x = RealArray::vector({0.7, -1.3});
    for (double t : {0.0, 0.2, 0.5, 0.9}) {
        RealArray s = gaussian_perturbed_score(g, t, x);
        const double denom = t * t + (1 - t) * (1 - t);
        EXPECT_NEAR(s[0], -0.7 / denom, 1e-14);
        EXPECT_NEAR(s[1], 1.3 / denom, 1e-14);
    }
    RealArray s0 = gaussian_perturbed_score(anisotropic(), 0.0, x);
    EXPECT_NEAR(s0[0], -0.7, 1e-14);
    EXPECT_NEAR(s0[1], 1.3, 1e-14);
}

TEST(GaussianScore, MatchesNumericalLogDensityGradient) {
    Rng rng(1);
    auto g = anisotropic();
    for (double t : {0.1, 0.4, 0.8, 0.95}) {
        RealArray x = rng.normal_array({2});
        auto f = [&](std::span<const double> p) { return gaussian_log_density(perturbed(g, t), p); };
        EXPECT_LT(max_abs_diff(gaussian_perturbed_score(g, t, x), numeric_gradient(f, x)), 1e-6);
    }
}

TEST(GaussianScore, SingularCovarianceRejected) {
    GaussianSpec g{RealArray::vector({0.0, 0.0}), RealArray::matrix(2, 2, {1.0, 1.0, 1.0, 1.0})};
    EXPECT_THROW(validate(g), DomainError);
}

TEST(MixtureScore, SingleComponentEqualsGaussian) {
    MixtureSpec m;
    m.components.push_back({1.0, anisotropic()});
    RealArray x = Rng(2).normal_array({5, 2});
    EXPECT_LT(max_abs_diff(mixture_perturbed_score(m, 0.6, x), gaussian_perturbed_score(anisotropic(), 0.6, x)), 1e-12);
}

TEST(MixtureScore, ZeroAtSymmetricMidpoint) {
    RealArray s = mixture_perturbed_score(two_modes(3.0), 0.7, RealArray::vector({0.0, 0.0}));
    EXPECT_NEAR(s[0], 0.0, 1e-14);
    EXPECT_NEAR(s[1], 0.0, 1e-14);
}

TEST(MixtureScore, MatchesNumericalGradientIncludingFarPoints) {
    Rng rng(3);
    auto m = two_modes(4.0);
    for (double t : {0.05, 0.5, 0.9, 0.98}) {
        for (int k = 0; k < 4; ++k) {
            RealArray x = rng.normal_array({2});
            x[0] *= 5.0;
            auto f = [&](std::span<const double> p) { return mixture_log_density(m, t, p); };
            EXPECT_LT(max_abs_diff(mixture_perturbed_score(m, t, x), numeric_gradient(f, x)), 1e-6);
        }
    }
    // far in the tail of both components: log domain keeps it finite
    RealArray far = RealArray::vector({200.0, 0.0});
    EXPECT_TRUE(mixture_perturbed_score(m, 0.98, far).all_finite());
}

TEST(AnalyticDrift, PointMassAndSymmetry) {
    PointMass origin{RealArray::vector({0.0, 0.0})};
    RealArray x = RealArray::vector({0.4, -2.0});
    RealArray v = analytic_drift(origin, 0.3, x);
    EXPECT_NEAR(v[0], 0.4 / 0.7, 1e-15);
    EXPECT_NEAR(v[1], -2.0 / 0.7, 1e-15);
    RealArray at_zero = analytic_drift(GaussianSpec::isotropic(RealArray::vector({0.0, 0.0})), 0.5, RealArray::vector({0.0, 0.0}));
    EXPECT_EQ(at_zero[0], 0.0);
    EXPECT_EQ(at_zero[1], 0.0);
    EXPECT_THROW(analytic_drift(origin, 1.0, x), DomainError);
    EXPECT_THROW(analytic_drift(origin, 0.0, x), DomainError);
}

TEST(AnalyticDrift, IsTheConditionalMeanOfTheRegressionTarget) {
    // Monte-Carlo E[X0 - X1 | X_t near x] in 1-D vs the closed form.
    GaussianSpec g{RealArray::vector({1.5}), RealArray::matrix(1, 1, {0.5})};
    Rng rng(4);
    const double t = 0.4, x = 0.3, band = 0.02;
    double acc = 0.0;
    std::size_t hits = 0;
    for (int i = 0; i < 2000000; ++i) {
        const double x1 = 1.5 + std::sqrt(0.5) * rng.normal(), x0 = rng.normal();
        if (std::abs(t * x1 + (1 - t) * x0 - x) < band) {
            acc += x0 - x1;
            ++hits;
        }
    }
    ASSERT_GT(hits, 10000u);
    EXPECT_NEAR(acc / static_cast<double>(hits), analytic_drift(g, t, RealArray::vector({x}))[0], 0.03);
}

TEST(GaussianKl, ClosedFormCases) {
    auto p = anisotropic();
    EXPECT_NEAR(gaussian_kl(p, p), 0.0, 1e-14);
    GaussianSpec a{RealArray::vector({0.0}), RealArray::matrix(1, 1, {1.0})};
    GaussianSpec b{RealArray::vector({1.0}), RealArray::matrix(1, 1, {1.0})};
    EXPECT_NEAR(gaussian_kl(a, b), 0.5, 1e-14);
    GaussianSpec q = p;
    q.mean[0] += 0.01;
    EXPECT_GT(gaussian_kl(q, p), 0.0);
    q = p;
    q.cov(1, 1) *= 1.01;
    EXPECT_GT(gaussian_kl(q, p), 0.0);
}

TEST(GaussianKl, MatchesMonteCarloEstimate) {
    GaussianSpec q{RealArray::vector({0.3, -0.2}), RealArray::matrix(2, 2, {1.2, -0.3, -0.3, 0.8})};
    auto p = anisotropic();
    Rng rng(5);
    const std::size_t n = 1000000;
    RealArray xs = sample(q, n, rng);
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = gaussian_log_density(q, xs.row(i)) - gaussian_log_density(p, xs.row(i));
        mean += r;
        sq += r * r;
    }
    mean /= n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_NEAR(mean, gaussian_kl(q, p), 3 * se);
}

TEST(Sampling, MomentFitRecoversSpec) {
    Rng rng(6);
    auto g = anisotropic();
    auto fit = moment_fit(sample(g, 200000, rng));
    EXPECT_LT(max_abs_diff(fit.mean, g.mean), 0.02);
    EXPECT_LT(max_abs_diff(fit.cov, g.cov), 0.03);
}

TEST(Quadrature, DoublingNodesChangesWeightedKlLittle) {
    auto p = anisotropic();
    GaussianSpec q{RealArray::vector({0.0, 0.0}), RealArray::matrix(2, 2, {1.0, 0.0, 0.0, 1.0})};
    auto w = [](double t) { return (1 - t) * (1 - t); };
    const double k64 = weighted_perturbed_kl(q, p, w, 0.02, 0.98, 64);
    const double k128 = weighted_perturbed_kl(q, p, w, 0.02, 0.98, 128);
    EXPECT_LT(std::abs(k64 - k128), 1e-4 * k128);
}

TEST(Mmd, IdenticalSetsAndBandwidthFloor) {
    RealArray xs = Rng(7).normal_array({100, 2});
    EXPECT_NEAR(mmd_biased(xs, xs), 0.0, 1e-12);
    EXPECT_LE(mmd(xs, xs), 1e-12);
    RealArray same = RealArray::matrix(100, 2, 1.0);
    EXPECT_EQ(median_pairwise_distance(same), kMinBandwidth);
}

TEST(Mmd, SameDistributionBelowThresholdSeparatedAbove) {
    Rng rng(8);
    auto std1 = GaussianSpec::isotropic(RealArray::vector({0.0}));
    auto shifted = GaussianSpec::isotropic(RealArray::vector({3.0}));
    auto null = mmd_permutation_test(sample(std1, 500, rng), sample(std1, 500, rng), 200, rng);
    EXPECT_FALSE(null.rejects());
    auto alt = mmd_permutation_test(sample(std1, 500, rng), sample(shifted, 500, rng), 200, rng);
    EXPECT_TRUE(alt.rejects());
    EXPECT_LT(alt.p_value, 0.01);
}

TEST(Mmd, PermutationTestIsCalibratedUnderTheNull) {
    Rng rng(9);
    auto g = anisotropic();
    int rejections = 0;
    const int trials = 500;
    for (int i = 0; i < trials; ++i) {
        if (mmd_permutation_test(sample(g, 100, rng), sample(g, 100, rng), 200, rng).rejects()) ++rejections;
    }
    const double rate = static_cast<double>(rejections) / trials;
    EXPECT_LE(rate, 0.02);
    EXPECT_GE(rate, 0.0);
}

TEST(Dtw, TrivialCases) {
    RealArray a = RealArray::matrix(3, 2, {0, 1, 2, 3, 4, 5});
    EXPECT_EQ(dtw_distance(a, a), 0.0);
    EXPECT_DOUBLE_EQ(dtw_distance(RealArray::matrix(1, 1, {2.5}), RealArray::matrix(1, 1, {-1.0})), 3.5);
    EXPECT_THROW(dtw_distance(RealArray::matrix(0, 1), a), DomainError);
}

TEST(Dtw, MatchesExhaustivePathEnumeration) {
    RealArray a = RealArray::matrix(3, 1, {0, 0, 1});
    RealArray b = RealArray::matrix(2, 1, {0, 1});
    EXPECT_DOUBLE_EQ(dtw_distance(a, b), dtw_brute_force(a, b));
    Rng rng(10);
    for (int k = 0; k < 20; ++k) {
        RealArray x = rng.normal_array({2 + rng.below(5), 3});
        RealArray y = rng.normal_array({2 + rng.below(5), 3});
        EXPECT_NEAR(dtw_distance(x, y), dtw_brute_force(x, y), 1e-12);
        EXPECT_NEAR(dtw_distance(x, y), dtw_distance(y, x), 1e-12);
        EXPECT_LE(dtw_distance(x, y), padded_euclidean_cost(x, y) + 1e-12);
    }
}

TEST(FiniteDiff, ExactForQuadraticAndLinear) {
    nn::ParamStore p;
    p.add("w", RealArray::scalar(3.0));
    auto g = finite_diff_grad([](const nn::ParamStore& s) { return s.get("w")[0] * s.get("w")[0]; }, p);
    EXPECT_NEAR(g.get("w")[0], 6.0, 1e-8);
    for (double h : {1e-5, 0.1, 1.0}) {
        auto lin = finite_diff_grad([](const nn::ParamStore& s) { return 4.0 * s.get("w")[0] - 1.0; }, p, h);
        EXPECT_NEAR(lin.get("w")[0], 4.0, 1e-9);
    }
    EXPECT_THROW(finite_diff_grad([](const nn::ParamStore&) { return NAN; }, p), NonFiniteError);
}
