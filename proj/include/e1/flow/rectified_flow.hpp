#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/rng.hpp"
#include "e1/flow/drift.hpp"
#include "e1/flow/schedule.hpp"
#include "e1/nn/layers.hpp"
#include "e1/nn/optim.hpp"

namespace e1::flow {

/// Graph node for the rectified-flow regression loss: mean over rows and
/// dimensions of |v(t x1 + (1-t) x0, t) - (x0 - x1)|^2.
inline nn::Var rf_loss_var(const DriftModel& model, const nn::Bound& params, const RealArray& x1, const RealArray& x0,
                           std::span<const double> t, const Conditioning* cond) {
    require_same_shape(x1, x0, "rf_loss");
    const RealArray xt = perturb_rows(x1, x0, t);
    RealArray target(x1.shape());
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = x0[i] - x1[i];
    return nn::mean_squared_error(model.forward(params, xt, t, cond), target);
}

inline double rf_loss(const DriftModel& model, const nn::ParamStore& params, const RealArray& x1, const RealArray& x0,
                      std::span<const double> t, const Conditioning* cond) {
    nn::Graph g;
    nn::Bound b(g, params, false);
    const double loss = g.value(rf_loss_var(model, b, x1, x0, t, cond))[0];
    if (!std::isfinite(loss)) throw NonFiniteError("rf_loss: loss is not finite");
    return loss;
}

inline std::pair<double, nn::Grads> rf_loss_and_grad(const DriftModel& model, const nn::ParamStore& params,
                                                      const RealArray& x1, const RealArray& x0,
                                                      std::span<const double> t, const Conditioning* cond) {
    auto result = nn::forward_backward(params, [&](nn::Graph&, const nn::Bound& b) {
        return rf_loss_var(model, b, x1, x0, t, cond);
    });
    if (!std::isfinite(result.first)) throw NonFiniteError("rf_loss: loss is not finite");
    return result;
}

/// One time per row, shared by rows of the same conditioning group.
inline std::vector<double> draw_times(Rng& rng, const TimeSampler& sampler, const Conditioning* cond, std::size_t rows) {
    const auto [groups, of_row] = resolve_groups(cond, rows);
    std::vector<double> per_group(groups);
    for (double& t : per_group) t = sampler.draw(rng);
    std::vector<double> t(rows);
    for (std::size_t r = 0; r < rows; ++r) t[r] = per_group[of_row[r]];
    return t;
}

struct UpdateStats {
    double loss = 0.0;
    double grad_norm = 0.0;
};

/// One denoising-score-matching step: fresh noise and times, rectified-flow
/// loss on `x1`, one AdamW update of the model parameters.
inline UpdateStats dsm_update(DriftModel& model, nn::AdamW& optimizer, const RealArray& x1, const Conditioning* cond,
                              Rng& rng, const TimeSampler& sampler) {
    const RealArray x0 = rng.normal_array(x1.shape());
    const auto t = draw_times(rng, sampler, cond, x1.rows());
    auto [loss, grads] = rf_loss_and_grad(model, model.params(), x1, x0, t, cond);
    optimizer.step(model.params(), grads);
    return {loss, grads.l2_norm()};
}

/// Called after every Euler step with (step index, time reached, state).
using TrajectoryObserver = std::function<void(std::size_t, double, const RealArray&)>;

/// Integrates dY = -v(Y, t) dt from t = 0 (noise z) to t = 1 with n uniform
/// steps. The drift is evaluated at the step's start time clamped to the
/// schedule interval; the sign accounts for v regressing (X0 - X1).
inline RealArray euler_sample(const DriftFn& drift, const RealArray& z, std::size_t n_steps, const Conditioning* cond,
                              const FlowSchedule& schedule = {}, const TrajectoryObserver& observer = {}) {
    if (n_steps == 0) throw DomainError("euler_sample: need at least one step");
    RealArray y = z;
    const double dt = 1.0 / static_cast<double>(n_steps);
    std::vector<double> t_rows(y.rows());
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = schedule.clamp(static_cast<double>(k) * dt);
        std::fill(t_rows.begin(), t_rows.end(), t);
        const RealArray v = drift(y, t_rows, cond);
        require_same_shape(v, y, "euler_sample drift output");
        for (std::size_t i = 0; i < y.size(); ++i) y[i] -= v[i] * dt;
        if (!y.all_finite()) throw NonFiniteError("euler_sample: non-finite state at step " + std::to_string(k));
        if (observer) observer(k, static_cast<double>(k + 1) * dt, y);
    }
    return y;
}

/// CSV dump of sampler trajectories: step,t,sample,x0,x1,...
class TrajectoryCsv {
public:
    explicit TrajectoryCsv(std::ostream& out) : m_out(out) {}

    TrajectoryObserver observer() {
        return [this](std::size_t step, double t, const RealArray& y) {
            if (!m_header) {
                m_out << "step,t,sample";
                for (std::size_t j = 0; j < y.cols(); ++j) m_out << ",x" << j;
                m_out << '\n';
                m_header = true;
            }
            for (std::size_t r = 0; r < y.rows(); ++r) {
                m_out << step << ',' << t << ',' << r;
                for (std::size_t j = 0; j < y.cols(); ++j) m_out << ',' << y(r, j);
                m_out << '\n';
            }
        };
    }

private:
    std::ostream& m_out;
    bool m_header = false;
};

} // namespace e1::flow
