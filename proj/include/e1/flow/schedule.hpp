#pragma once

#include <span>
#include <string>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/real_array.hpp"
#include "e1/core/rng.hpp"

namespace e1::flow {

/// Linear interpolation between noise (t = 0) and data (t = 1):
/// alpha(t) = t, sigma(t) = 1 - t. Training times and score conversion are
/// confined to [t_min, t_max].
struct FlowSchedule {
    double t_min = 0.02;
    double t_max = 0.98;

    static double alpha(double t) { return t; }
    static double sigma(double t) { return 1.0 - t; }

    double clamp(double t) const { return std::min(std::max(t, t_min), t_max); }
    bool contains(double t) const { return t >= t_min && t <= t_max; }

    void validate() const {
        if (!(0.0 < t_min && t_min < t_max && t_max < 1.0)) {
            throw DomainError("FlowSchedule: need 0 < t_min < t_max < 1, got [" + std::to_string(t_min) + ", " +
                              std::to_string(t_max) + "]");
        }
    }
};

/// Distribution of training times: uniform on [lo, hi].
struct TimeSampler {
    double lo = 0.02;
    double hi = 0.98;

    static TimeSampler uniform_on(const FlowSchedule& s) { return {s.t_min, s.t_max}; }

    double draw(Rng& rng) const { return rng.uniform(lo, hi); }
};

/// x_t = t x1 + (1 - t) x0
inline RealArray perturb(const RealArray& x1, const RealArray& x0, double t) {
    require_same_shape(x1, x0, "perturb");
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("perturb: t must lie in [0, 1]");
    RealArray out(x1.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t * x1[i] + (1.0 - t) * x0[i];
    return out;
}

/// Row-wise perturbation of [rows x d] arrays, row r at time t[r].
inline RealArray perturb_rows(const RealArray& x1, const RealArray& x0, std::span<const double> t) {
    require_same_shape(x1, x0, "perturb_rows");
    if (t.size() != x1.rows()) throw ShapeError("perturb_rows: one time per row required");
    RealArray out(x1.shape());
    const std::size_t d = x1.cols();
    for (std::size_t r = 0; r < x1.rows(); ++r)
        for (std::size_t j = 0; j < d; ++j) out(r, j) = t[r] * x1(r, j) + (1.0 - t[r]) * x0(r, j);
    return out;
}

/// Score of the perturbed data density from a drift regressing (X0 - X1):
/// E[X0 | x] = t v + x, and the score is -E[X0 | x] / (1 - t).
inline RealArray score_from_drift(const RealArray& v, const RealArray& x_t, double t,
                                  const FlowSchedule& schedule = {}) {
    require_same_shape(v, x_t, "score_from_drift");
    if (!schedule.contains(t)) {
        throw DomainError("score_from_drift: t = " + std::to_string(t) + " outside [" + std::to_string(schedule.t_min) +
                          ", " + std::to_string(schedule.t_max) + "]");
    }
    RealArray s(v.shape());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = -(t * v[i] + x_t[i]) / (1.0 - t);
    return s;
}

/// Row-wise score_from_drift for [rows x d] arrays.
inline RealArray score_from_drift_rows(const RealArray& v, const RealArray& x_t, std::span<const double> t,
                                       const FlowSchedule& schedule = {}) {
    require_same_shape(v, x_t, "score_from_drift_rows");
    if (t.size() != v.rows()) throw ShapeError("score_from_drift_rows: one time per row required");
    RealArray s(v.shape());
    const std::size_t d = v.cols();
    for (std::size_t r = 0; r < v.rows(); ++r) {
        if (!schedule.contains(t[r])) {
            throw DomainError("score_from_drift: t = " + std::to_string(t[r]) + " outside the clamp interval");
        }
        for (std::size_t j = 0; j < d; ++j) s(r, j) = -(t[r] * v(r, j) + x_t(r, j)) / (1.0 - t[r]);
    }
    return s;
}

} // namespace e1::flow
