#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "e1/core/real_array.hpp"
#include "e1/core/rng.hpp"
#include "e1/nn/layers.hpp"
#include "e1/nn/param_store.hpp"

namespace e1::flow {

/// Side information a drift network sees besides (x_t, t). Rows of x that
/// share a group also share their time; by default every row is its own group.
class Conditioning {
public:
    virtual ~Conditioning() = default;

    /// Group index of every row, or nullptr when each row is independent.
    virtual const std::vector<std::size_t>* row_groups() const { return nullptr; }
};

/// Number of groups and group of each row.
inline std::pair<std::size_t, std::vector<std::size_t>> resolve_groups(const Conditioning* cond, std::size_t rows) {
    if (cond && cond->row_groups()) {
        const auto& g = *cond->row_groups();
        if (g.size() != rows) throw ShapeError("conditioning groups cover " + std::to_string(g.size()) + " rows, batch has " + std::to_string(rows));
        std::size_t n = 0;
        for (auto v : g) n = std::max(n, v + 1);
        return {n, g};
    }
    std::vector<std::size_t> g(rows);
    for (std::size_t i = 0; i < rows; ++i) g[i] = i;
    return {rows, g};
}

/// A network v(x_t, t, c) over [rows x dim] states, regressing X0 - X1.
class DriftModel {
public:
    virtual ~DriftModel() = default;

    virtual std::size_t dim() const = 0;
    virtual std::unique_ptr<DriftModel> clone() const = 0;

    /// Builds the network output for states x ([rows x dim]) at per-row times t.
    virtual nn::Var forward(const nn::Bound& params, const RealArray& x, std::span<const double> t,
                            const Conditioning* cond) const = 0;

    nn::ParamStore& params() noexcept { return m_params; }
    const nn::ParamStore& params() const noexcept { return m_params; }

    /// Forward pass without gradients using an explicit parameter set.
    RealArray evaluate(const nn::ParamStore& params, const RealArray& x, std::span<const double> t,
                       const Conditioning* cond) const {
        nn::Graph g;
        nn::Bound b(g, params, false);
        return g.value(forward(b, x, t, cond));
    }

    RealArray evaluate(const RealArray& x, std::span<const double> t, const Conditioning* cond) const {
        return evaluate(m_params, x, t, cond);
    }

protected:
    nn::ParamStore m_params;
};

/// Plain drift evaluator: (x, per-row t, conditioning) -> velocity.
using DriftFn = std::function<RealArray(const RealArray&, std::span<const double>, const Conditioning*)>;

inline DriftFn drift_fn(const DriftModel& model, const nn::ParamStore& params) {
    return [&model, &params](const RealArray& x, std::span<const double> t, const Conditioning* c) {
        return model.evaluate(params, x, t, c);
    };
}

inline DriftFn drift_fn(const DriftModel& model) { return drift_fn(model, model.params()); }

struct MlpDriftConfig {
    std::size_t dim = 2;
    std::size_t hidden = 128;
    std::size_t depth = 4;
    std::size_t time_features = 16;
};

/// MLP over [x, sinusoidal(t)] with SiLU activations.
class MlpDrift final : public DriftModel {
public:
    MlpDrift(MlpDriftConfig config, Rng& rng) : m_config(config), m_mlp(make_mlp(config)) {
        m_mlp.init(m_params, rng, 0.1);
    }

    const MlpDriftConfig& config() const noexcept { return m_config; }
    std::size_t dim() const override { return m_config.dim; }
    std::unique_ptr<DriftModel> clone() const override { return std::make_unique<MlpDrift>(*this); }

    nn::Var forward(const nn::Bound& params, const RealArray& x, std::span<const double> t,
                    const Conditioning*) const override {
        if (x.rank() != 2 || x.cols() != m_config.dim) {
            throw ShapeError("MlpDrift: input " + shape_string(x.shape()) + ", expected [rows x " +
                             std::to_string(m_config.dim) + "]");
        }
        if (t.size() != x.rows()) throw ShapeError("MlpDrift: one time per row required");
        const std::size_t n = x.rows(), d = m_config.dim, tf = m_config.time_features;
        RealArray input = RealArray::matrix(n, d + tf);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(x.row(i).begin(), x.row(i).end(), input.row(i).begin());
            nn::time_embedding(t[i], input.row(i).subspan(d, tf));
        }
        return m_mlp(params, params.graph().constant(std::move(input)));
    }

private:
    static nn::Mlp make_mlp(const MlpDriftConfig& c) {
        return nn::Mlp::make("drift", c.dim + c.time_features, c.hidden, c.depth, c.dim, nn::Activation::silu);
    }

    MlpDriftConfig m_config;
    nn::Mlp m_mlp;
};

} // namespace e1::flow
