#pragma once

// Per-symbol duration regression from the text and a partially observed
// duration sequence. Trained only on the L1 error of the masked total.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/rng.hpp"
#include "e1/nn/layers.hpp"
#include "e1/nn/optim.hpp"
#include "e1/toytts/mask.hpp"
#include "e1/toytts/task.hpp"

namespace e1::toytts {

struct DurationConfig {
    std::size_t alphabet_size = 16;
    std::size_t width = 32;
    std::size_t heads = 2;
    std::size_t blocks = 2;
    std::size_t mlp_ratio = 2;
    double rope_base = 10000.0;
    double duration_scale = 3.0;  // observed durations enter as d / scale

    std::size_t input_width() const { return alphabet_size + 2; }
};

/// One text with some durations known.
struct DurationQuery {
    std::vector<std::size_t> text;
    std::vector<std::size_t> durations;  // entries only read where observed
    std::vector<bool> observed;
};

class DurationModel {
public:
    DurationModel(DurationConfig config, Rng& rng) : m_config(config) {
        in_proj().init(m_params, rng);
        for (std::size_t b = 0; b < m_config.blocks; ++b) block(b).init(m_params, rng);
        out_norm().init(m_params);
        head().init(m_params, rng, 0.1);
        // start near the mean repeat count: softplus(1.85) ~ 2
        auto bias = m_params.get("duration.head.bias");
        bias[0] = 1.85;
        m_params.set("duration.head.bias", bias);
    }

    const DurationConfig& config() const noexcept { return m_config; }
    nn::ParamStore& params() noexcept { return m_params; }
    const nn::ParamStore& params() const noexcept { return m_params; }

    /// Non-negative estimates, one row per symbol of every query, stacked.
    nn::Var forward(const nn::Bound& p, const std::vector<DurationQuery>& queries) const {
        const std::size_t k = m_config.alphabet_size;
        std::size_t total = 0;
        for (const auto& q : queries) {
            if (q.text.empty()) throw DomainError("DurationModel: empty text");
            if (q.durations.size() != q.text.size() || q.observed.size() != q.text.size()) {
                throw ShapeError("DurationModel: durations and observation flags must match the text length");
            }
            total += q.text.size();
        }
        RealArray features = RealArray::matrix(total, m_config.input_width());
        std::vector<nn::Segment> segments;
        std::vector<double> positions;
        std::size_t row = 0;
        for (const auto& q : queries) {
            segments.push_back({row, q.text.size()});
            for (std::size_t s = 0; s < q.text.size(); ++s, ++row) {
                if (q.text[s] >= k) throw DomainError("DurationModel: symbol outside alphabet");
                auto r = features.row(row);
                r[q.text[s]] = 1.0;
                if (q.observed[s]) {
                    r[k] = static_cast<double>(q.durations[s]) / m_config.duration_scale;
                    r[k + 1] = 1.0;
                }
                positions.push_back(static_cast<double>(s));
            }
        }
        nn::Var h = in_proj()(p, p.graph().constant(std::move(features)));
        for (std::size_t b = 0; b < m_config.blocks; ++b) h = block(b)(p, h, segments, positions);
        return nn::softplus(head()(p, out_norm()(p, h)));
    }

    /// Raw per-symbol estimates for every query.
    std::vector<std::vector<double>> estimate(const nn::ParamStore& params, const std::vector<DurationQuery>& queries) const {
        nn::Graph g;
        nn::Bound b(g, params, false);
        const RealArray out = g.value(forward(b, queries));
        std::vector<std::vector<double>> result;
        std::size_t row = 0;
        for (const auto& q : queries) {
            std::vector<double> d;
            for (std::size_t s = 0; s < q.text.size(); ++s, ++row) d.push_back(out(row, 0));
            result.push_back(std::move(d));
        }
        return result;
    }

    /// Observed durations echoed, the rest filled by the estimates.
    std::vector<double> predict(const nn::ParamStore& params, const DurationQuery& query) const {
        auto est = estimate(params, {query}).front();
        for (std::size_t s = 0; s < est.size(); ++s)
            if (query.observed[s]) est[s] = static_cast<double>(query.durations[s]);
        return est;
    }

    std::vector<double> predict(const DurationQuery& query) const { return predict(m_params, query); }

private:
    nn::Linear in_proj() const { return {"duration.in", m_config.input_width(), m_config.width}; }
    nn::TransformerBlock block(std::size_t b) const {
        return {"duration.block" + std::to_string(b), m_config.width, m_config.heads, m_config.mlp_ratio, m_config.rope_base};
    }
    nn::LayerNorm out_norm() const { return {"duration.out_norm", m_config.width}; }
    nn::Linear head() const { return {"duration.head", m_config.width, 1}; }

    DurationConfig m_config;
    nn::ParamStore m_params;
};

/// Mean over queries of |sum of estimates - sum of true durations| taken
/// over the unobserved symbols. Queries with nothing hidden contribute 0.
inline nn::Var masked_total_l1(const DurationModel& model, const nn::Bound& p, const std::vector<DurationQuery>& queries) {
    nn::Var est = model.forward(p, queries);
    nn::Graph& g = p.graph();
    // selection[q, r] = 1 where row r is a hidden symbol of query q
    RealArray selection = RealArray::matrix(queries.size(), g.value(est).rows());
    RealArray truth = RealArray::matrix(queries.size(), 1);
    std::size_t row = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t s = 0; s < queries[q].text.size(); ++s, ++row) {
            if (queries[q].observed[s]) continue;
            selection(q, row) = 1.0;
            truth(q, 0) += static_cast<double>(queries[q].durations[s]);
        }
    }
    nn::Var totals = nn::matmul(g.constant(std::move(selection)), est);
    nn::Var err = nn::abs(nn::sub(totals, g.constant(std::move(truth))));
    return nn::scale(nn::sum(err), 1.0 / static_cast<double>(queries.size()));
}

inline std::vector<DurationQuery> duration_training_queries(const std::vector<const ToyUtterance*>& utterances, Rng& rng) {
    std::vector<DurationQuery> out;
    for (const auto* u : utterances) out.push_back({u->text, u->durations, sample_duration_observation(u->text.size(), rng)});
    return out;
}

inline double duration_train_step(DurationModel& model, nn::AdamW& optimizer,
                                  const std::vector<const ToyUtterance*>& utterances, Rng& rng) {
    const auto queries = duration_training_queries(utterances, rng);
    auto [loss, grads] = nn::forward_backward(model.params(), [&](nn::Graph&, const nn::Bound& b) {
        return masked_total_l1(model, b, queries);
    });
    if (!std::isfinite(loss)) throw NonFiniteError("duration_train_step: loss is not finite");
    optimizer.step(model.params(), grads);
    return loss;
}

/// Nearest integer, at least `floor`.
inline std::size_t round_duration(double value, std::size_t floor) {
    const double r = std::round(value);
    return r < static_cast<double>(floor) ? floor : static_cast<std::size_t>(r);
}

/// Predicted total speech length for a text with nothing observed.
inline std::size_t predict_total(const DurationModel& model, const nn::ParamStore& params,
                                 const std::vector<std::size_t>& text, double factor = 1.0) {
    DurationQuery q{text, std::vector<std::size_t>(text.size(), 0), std::vector<bool>(text.size(), false)};
    double total = 0.0;
    for (double d : model.predict(params, q)) total += d;
    return round_duration(total * factor, text.size());
}

} // namespace e1::toytts
