#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "e1/core/error.hpp"
#include "e1/nn/param_store.hpp"

namespace e1::nn {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.0;
    double eps = 1e-8;
};

/// Adam with decoupled weight decay and bias-corrected moments.
class AdamW {
public:
    AdamW() = default;
    AdamW(const ParamStore& params, AdamWConfig config)
        : m_config(config), m_first(params.zeros_like()), m_second(params.zeros_like()) {}

    const AdamWConfig& config() const noexcept { return m_config; }
    void set_lr(double lr) { m_config.lr = lr; }
    std::uint64_t step_count() const noexcept { return m_steps; }
    const ParamStore& first_moment() const noexcept { return m_first; }
    const ParamStore& second_moment() const noexcept { return m_second; }

    /// Applies one update in place. Rejects the whole step, leaving params and
    /// state untouched, if any gradient entry is not finite.
    void step(ParamStore& params, const Grads& grads) {
        if (m_config.lr < 0.0) throw DomainError("AdamW: negative learning rate");
        m_first.require_compatible(params, "AdamW params");
        params.require_compatible(grads, "AdamW grads");
        for (const auto& e : grads) {
            if (!e.value.all_finite()) throw NonFiniteError("AdamW: non-finite gradient in '" + e.name + "'");
        }
        ++m_steps;
        const double t = static_cast<double>(m_steps);
        const double bc1 = 1.0 - std::pow(m_config.beta1, t);
        const double bc2 = 1.0 - std::pow(m_config.beta2, t);
        const double lr = m_config.lr;
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& w = params[p].value;
            const auto& g = grads[p].value;
            auto& m = m_first[p].value;
            auto& v = m_second[p].value;
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = m_config.beta1 * m[i] + (1.0 - m_config.beta1) * g[i];
                v[i] = m_config.beta2 * v[i] + (1.0 - m_config.beta2) * g[i] * g[i];
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                w[i] -= lr * m_config.weight_decay * w[i];
                w[i] -= lr * m_hat / (std::sqrt(v_hat) + m_config.eps);
            }
        }
    }

private:
    AdamWConfig m_config;
    ParamStore m_first;
    ParamStore m_second;
    std::uint64_t m_steps = 0;
};

/// Exponential moving average of a parameter store.
class Ema {
public:
    Ema() = default;
    Ema(const ParamStore& params, double decay) : m_shadow(params), m_decay(decay) {
        if (!(decay >= 0.0 && decay <= 1.0)) throw DomainError("Ema: decay must lie in [0, 1]");
    }

    double decay() const noexcept { return m_decay; }
    const ParamStore& shadow() const noexcept { return m_shadow; }
    ParamStore& shadow() noexcept { return m_shadow; }

    /// shadow <- decay * shadow + (1 - decay) * params
    void update(const ParamStore& params) {
        m_shadow.require_compatible(params, "Ema::update");
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& s = m_shadow[p].value;
            const auto& w = params[p].value;
            for (std::size_t i = 0; i < s.size(); ++i) s[i] = m_decay * s[i] + (1.0 - m_decay) * w[i];
        }
    }

private:
    ParamStore m_shadow;
    double m_decay = 0.9999;
};

} // namespace e1::nn
