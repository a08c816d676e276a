#pragma once

// Distribution matching distillation of a rectified-flow teacher into a
// one-step generator.
//
// The generator g_theta is trained to descend the time-averaged KL between
// its perturbed sample distribution q_t and the perturbed data distribution
// p_t. The gradient only needs the two perturbed scores at noised generator
// samples x_t = t g(z) + (1 - t) w:
//
//     grad = E[ w(t) t (s_fake(x_t, t) - s_real(x_t, t)) dg(z)/dtheta ]
//
// s_real comes from the frozen teacher, s_fake from a second network that is
// continually refit to the generator's own samples.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/rng.hpp"
#include "e1/dmd/generator.hpp"
#include "e1/flow/drift.hpp"
#include "e1/flow/rectified_flow.hpp"
#include "e1/flow/schedule.hpp"
#include "e1/nn/optim.hpp"

namespace e1::dmd {

/// Time weighting w(t) >= 0 of the averaged KL. Default sigma_t^2 = (1-t)^2.
struct WeightingSpec {
    std::function<double(double)> weight = [](double t) { return (1.0 - t) * (1.0 - t); };

    double operator()(double t) const { return weight(t); }

    static WeightingSpec constant(double c) {
        return {[c](double) { return c; }};
    }
};

/// Perturbed score estimate at states x ([rows x d]) and per-row times.
using ScoreFn = std::function<RealArray(const RealArray&, std::span<const double>, const flow::Conditioning*)>;

/// Score of a drift network through score_from_drift.
inline ScoreFn network_score(const flow::DriftModel& model, const nn::ParamStore& params,
                             const flow::FlowSchedule& schedule) {
    return [&model, &params, schedule](const RealArray& x, std::span<const double> t, const flow::Conditioning* c) {
        return flow::score_from_drift_rows(model.evaluate(params, x, t, c), x, t, schedule);
    };
}

/// Inputs of one generator-gradient evaluation. Row r contributes with
/// weight[r]; rows of one conditioning group share their time.
struct GeneratorBatch {
    RealArray z;
    RealArray noise;
    std::vector<double> t;
    std::vector<double> weight;
    const flow::Conditioning* cond = nullptr;
};

/// Fresh noise and times for noise inputs z; each group weighted 1/groups.
inline GeneratorBatch draw_generator_batch(RealArray z, const flow::Conditioning* cond, Rng& rng,
                                           const flow::TimeSampler& sampler) {
    GeneratorBatch b;
    b.noise = rng.normal_array(z.shape());
    b.t = flow::draw_times(rng, sampler, cond, z.rows());
    const auto groups = flow::resolve_groups(cond, z.rows()).first;
    b.weight.assign(z.rows(), 1.0 / static_cast<double>(groups));
    b.z = std::move(z);
    b.cond = cond;
    return b;
}

struct GeneratorGradient {
    nn::Grads grads;
    double surrogate = 0.0;  // value of the detached-coefficient surrogate
    double grad_norm = 0.0;
    RealArray samples;       // g(z)
};

/// Gradient of the weighted KL with respect to the generator parameters.
/// Realized as the gradient of sum_r <c_r, g(z_r)> where the coefficient
/// c_r = weight_r w(t_r) t_r (s_fake - s_real)(x_t,r) is held constant.
inline GeneratorGradient generator_gradient(const Generator& generator, const nn::ParamStore& params,
                                            const GeneratorBatch& batch, const ScoreFn& fake_score,
                                            const ScoreFn& real_score, const WeightingSpec& weighting) {
    const std::size_t rows = batch.z.rows();
    if (batch.t.size() != rows || batch.weight.size() != rows) {
        throw ShapeError("generator_gradient: times and weights must have one entry per row");
    }
    nn::Graph g;
    nn::Bound bound(g, params, true);
    nn::Var x = generator.generate(bound, batch.z, batch.cond);
    const RealArray x_hat = g.value(x);
    const RealArray x_t = flow::perturb_rows(x_hat, batch.noise, batch.t);
    const RealArray s_fake = fake_score(x_t, batch.t, batch.cond);
    const RealArray s_real = real_score(x_t, batch.t, batch.cond);
    require_same_shape(s_fake, x_t, "generator_gradient fake score");
    require_same_shape(s_real, x_t, "generator_gradient real score");

    RealArray coef(x_hat.shape());
    const std::size_t d = x_hat.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        const double c = batch.weight[r] * weighting(batch.t[r]) * flow::FlowSchedule::alpha(batch.t[r]);
        for (std::size_t j = 0; j < d; ++j) coef(r, j) = c * (s_fake(r, j) - s_real(r, j));
    }
    if (!coef.all_finite()) throw NonFiniteError("generator_gradient: non-finite score difference");

    nn::Var surrogate = nn::dot_constant(x, coef);
    g.backward(surrogate);
    GeneratorGradient out;
    out.grads = bound.gradients();
    out.surrogate = g.value(surrogate)[0];
    out.grad_norm = out.grads.l2_norm();
    out.samples = x_hat;
    return out;
}

/// Deterministic one-step sample x = g(z).
inline RealArray one_step_generate(const Generator& generator, const nn::ParamStore& params, const RealArray& z,
                                   const flow::Conditioning* cond) {
    return generator.sample(params, z, cond);
}

struct DistillConfig {
    std::size_t ttur_ratio = 10;
    nn::AdamWConfig generator_optimizer{};
    nn::AdamWConfig fake_optimizer{};
    double ema_decay = 0.9999;
    WeightingSpec weighting{};
    flow::FlowSchedule schedule{};
    double max_grad_norm = 1e4;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::uint64_t step, double norm)
        : std::runtime_error("distill: generator gradient norm " + std::to_string(norm) + " exceeds limit at step " +
                             std::to_string(step)),
          step_index(step) {}

    std::uint64_t step_index;
};

enum class Phase { generator, fake };

inline const char* phase_name(Phase p) { return p == Phase::generator ? "gen" : "fake"; }

struct StepMetrics {
    std::uint64_t step = 0;  // generator step the record belongs to
    Phase phase = Phase::generator;
    double loss = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

using LogSink = std::function<void(const StepMetrics&)>;

/// A conditioning instance and the number of free rows it describes.
struct Batch {
    std::shared_ptr<const flow::Conditioning> cond;
    std::size_t rows = 0;
};

using BatchSource = std::function<Batch(Rng&)>;

/// Frozen teacher, fake-score network and generator, all initialized from
/// the teacher's parameters, with their optimizers and the generator EMA.
class DistillState {
public:
    DistillState(const flow::DriftModel& teacher, DistillConfig config)
        : m_config(std::move(config)),
          m_teacher(teacher.clone()),
          m_fake(teacher.clone()),
          m_generator(teacher, m_config.schedule.t_min),
          m_generator_opt(m_generator.params(), m_config.generator_optimizer),
          m_fake_opt(m_fake->params(), m_config.fake_optimizer),
          m_ema(m_generator.params(), m_config.ema_decay) {
        m_config.schedule.validate();
        if (m_config.ttur_ratio < 1) throw DomainError("DistillState: ttur_ratio must be at least 1");
    }

    const DistillConfig& config() const noexcept { return m_config; }
    flow::TimeSampler time_sampler() const { return flow::TimeSampler::uniform_on(m_config.schedule); }

    const flow::DriftModel& teacher() const { return *m_teacher; }
    flow::DriftModel& fake() { return *m_fake; }
    const flow::DriftModel& fake() const { return *m_fake; }
    DriftGenerator& generator() { return m_generator; }
    const DriftGenerator& generator() const { return m_generator; }
    nn::AdamW& generator_optimizer() { return m_generator_opt; }
    nn::AdamW& fake_optimizer() { return m_fake_opt; }
    nn::Ema& generator_ema() { return m_ema; }
    const nn::Ema& generator_ema() const { return m_ema; }

    std::uint64_t generator_updates() const noexcept { return m_generator_updates; }
    std::uint64_t fake_updates() const noexcept { return m_fake_updates; }

    ScoreFn teacher_score() const { return network_score(*m_teacher, m_teacher->params(), m_config.schedule); }
    ScoreFn fake_score() const { return network_score(*m_fake, m_fake->params(), m_config.schedule); }

    /// x = g(z) with the raw (or EMA) generator parameters.
    RealArray generate(const RealArray& z, const flow::Conditioning* cond, bool use_ema = false) const {
        return one_step_generate(m_generator, use_ema ? m_ema.shadow() : m_generator.params(), z, cond);
    }

    /// ttur_ratio fake-score updates on fresh generator samples.
    void update_fake(const BatchSource& source, Rng& rng, const LogSink& log) {
        for (std::size_t k = 0; k < m_config.ttur_ratio; ++k) {
            const auto t0 = std::chrono::steady_clock::now();
            const Batch batch = source(rng);
            const RealArray z = rng.normal_array({batch.rows, m_teacher->dim()});
            const RealArray x = generate(z, batch.cond.get());
            const auto stats = flow::dsm_update(*m_fake, m_fake_opt, x, batch.cond.get(), rng, time_sampler());
            ++m_fake_updates;
            if (log) log({m_generator_updates, Phase::fake, stats.loss, stats.grad_norm, elapsed_ms(t0)});
        }
    }

    /// One generator step along the distribution-matching gradient.
    void update_generator(const BatchSource& source, Rng& rng, const LogSink& log) {
        const auto t0 = std::chrono::steady_clock::now();
        const Batch batch = source(rng);
        RealArray z = rng.normal_array({batch.rows, m_teacher->dim()});
        const GeneratorBatch gb = draw_generator_batch(std::move(z), batch.cond.get(), rng, time_sampler());
        const auto grad = generator_gradient(m_generator, m_generator.params(), gb, fake_score(), teacher_score(),
                                             m_config.weighting);
        if (!(grad.grad_norm <= m_config.max_grad_norm)) throw DivergenceError(m_generator_updates, grad.grad_norm);
        m_generator_opt.step(m_generator.params(), grad.grads);
        m_ema.update(m_generator.params());
        ++m_generator_updates;
        if (log) log({m_generator_updates, Phase::generator, grad.surrogate, grad.grad_norm, elapsed_ms(t0)});
    }

private:
    static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }

    DistillConfig m_config;
    std::unique_ptr<flow::DriftModel> m_teacher;
    std::unique_ptr<flow::DriftModel> m_fake;
    DriftGenerator m_generator;
    nn::AdamW m_generator_opt;
    nn::AdamW m_fake_opt;
    nn::Ema m_ema;
    std::uint64_t m_generator_updates = 0;
    std::uint64_t m_fake_updates = 0;
};

/// Runs `steps` generator updates, each preceded by ttur_ratio fake-score
/// updates on freshly generated batches.
inline DistillState& distill(DistillState& state, std::size_t steps, const BatchSource& source, Rng& rng,
                             const LogSink& log = {}) {
    for (std::size_t s = 0; s < steps; ++s) {
        state.update_fake(source, rng, log);
        state.update_generator(source, rng, log);
    }
    return state;
}

} // namespace e1::dmd
