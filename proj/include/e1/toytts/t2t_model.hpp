#pragma once

// Text-to-token infilling network. Each utterance is one packed segment of
// text rows followed by speech rows; speech rows outside the mask carry
// clean context tokens, rows inside the mask carry the noisy state x_t.
// Text rows use integer rotary positions, speech rows fractional ones so
// both ranges span [0, n_text).

#include <memory>
#include <string>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/rng.hpp"
#include "e1/flow/drift.hpp"
#include "e1/flow/rectified_flow.hpp"
#include "e1/nn/layers.hpp"
#include "e1/nn/rope.hpp"
#include "e1/toytts/mask.hpp"
#include "e1/toytts/task.hpp"

namespace e1::toytts {

struct InfillItem {
    std::vector<std::size_t> text;
    RealArray context;  // [n_speech x d]; rows inside the mask are ignored
    MaskSpec mask;

    std::size_t n_speech() const { return context.rows(); }
};

/// A packed batch of infilling problems. The flow state covers only the
/// masked rows, item by item; all masked rows of one item share a time.
class InfillBatch final : public flow::Conditioning {
public:
    explicit InfillBatch(std::vector<InfillItem> items) : m_items(std::move(items)) {
        if (m_items.empty()) throw DomainError("InfillBatch: no items");
        for (std::size_t i = 0; i < m_items.size(); ++i) {
            const auto& it = m_items[i];
            if (it.text.empty()) throw DomainError("InfillBatch: empty text");
            if (it.context.rank() != 2) throw ShapeError("InfillBatch: context must be [n_speech x d]");
            it.mask.validate(it.n_speech());
            m_offsets.push_back(m_groups.size());
            m_groups.insert(m_groups.end(), it.mask.length, i);
        }
    }

    const std::vector<InfillItem>& items() const noexcept { return m_items; }
    std::size_t size() const noexcept { return m_items.size(); }
    std::size_t free_rows() const noexcept { return m_groups.size(); }
    std::size_t free_offset(std::size_t item) const { return m_offsets.at(item); }
    const std::vector<std::size_t>* row_groups() const override { return &m_groups; }

    /// Clean tokens at the masked rows, stacked item by item.
    RealArray free_tokens() const {
        const std::size_t d = m_items.front().context.cols();
        RealArray out = RealArray::matrix(free_rows(), d);
        for (std::size_t i = 0; i < m_items.size(); ++i) {
            const auto& it = m_items[i];
            for (std::size_t k = 0; k < it.mask.length; ++k) {
                auto src = it.context.row(it.mask.start + k);
                std::copy(src.begin(), src.end(), out.row(m_offsets[i] + k).begin());
            }
        }
        return out;
    }

    /// Context tokens with the masked rows replaced by `free` rows.
    std::vector<RealArray> assemble(const RealArray& free) const {
        if (free.rows() != free_rows()) throw ShapeError("InfillBatch::assemble: row count mismatch");
        std::vector<RealArray> out;
        for (std::size_t i = 0; i < m_items.size(); ++i) {
            RealArray tokens = m_items[i].context;
            const auto& mask = m_items[i].mask;
            for (std::size_t k = 0; k < mask.length; ++k) {
                auto src = free.row(m_offsets[i] + k);
                std::copy(src.begin(), src.end(), tokens.row(mask.start + k).begin());
            }
            out.push_back(std::move(tokens));
        }
        return out;
    }

private:
    std::vector<InfillItem> m_items;
    std::vector<std::size_t> m_offsets;
    std::vector<std::size_t> m_groups;
};

struct T2TConfig {
    std::size_t alphabet_size = 16;
    std::size_t token_dim = 8;
    std::size_t width = 128;
    std::size_t heads = 4;
    std::size_t blocks = 4;
    std::size_t mlp_ratio = 4;
    std::size_t time_features = 16;
    double rope_base = 10000.0;

    std::size_t input_width() const { return alphabet_size + token_dim + 2 + time_features; }
};

class T2TModel final : public flow::DriftModel {
public:
    T2TModel(T2TConfig config, Rng& rng) : m_config(config) {
        in_proj().init(m_params, rng);
        for (std::size_t b = 0; b < m_config.blocks; ++b) block(b).init(m_params, rng);
        out_norm().init(m_params);
        head().init(m_params, rng, 0.1);
    }

    const T2TConfig& config() const noexcept { return m_config; }
    std::size_t dim() const override { return m_config.token_dim; }
    std::unique_ptr<flow::DriftModel> clone() const override { return std::make_unique<T2TModel>(*this); }

    nn::Var forward(const nn::Bound& p, const RealArray& x, std::span<const double> t,
                    const flow::Conditioning* cond) const override {
        auto [all, free_rows] = forward_sequence(p, x, t, cond);
        return nn::gather_rows(all, std::move(free_rows));
    }

    struct SequenceOutput {
        nn::Var rows;                        // one output row per packed text and speech row
        std::vector<std::size_t> free_rows;  // packed indices of the masked speech rows
    };

    /// Head outputs for every packed row; forward() keeps only the masked ones.
    SequenceOutput forward_sequence(const nn::Bound& p, const RealArray& x, std::span<const double> t,
                                    const flow::Conditioning* cond) const {
        const auto* batch = dynamic_cast<const InfillBatch*>(cond);
        if (!batch) throw DomainError("T2TModel: conditioning must be an InfillBatch");
        const std::size_t d = m_config.token_dim, k = m_config.alphabet_size, tf = m_config.time_features;
        if (x.rank() != 2 || x.cols() != d || x.rows() != batch->free_rows()) {
            throw ShapeError("T2TModel: state " + shape_string(x.shape()) + " does not match " +
                             std::to_string(batch->free_rows()) + " masked rows of width " + std::to_string(d));
        }
        if (t.size() != x.rows()) throw ShapeError("T2TModel: one time per row required");

        std::size_t total = 0;
        for (const auto& it : batch->items()) total += it.text.size() + it.n_speech();
        RealArray features = RealArray::matrix(total, m_config.input_width());
        std::vector<nn::Segment> segments;
        std::vector<double> positions;
        std::vector<std::size_t> free_rows;
        positions.reserve(total);
        std::size_t row = 0;
        for (std::size_t i = 0; i < batch->size(); ++i) {
            const auto& it = batch->items()[i];
            if (it.context.cols() != d) throw ShapeError("T2TModel: context width differs from token_dim");
            const std::size_t off = batch->free_offset(i);
            const double ti = it.mask.length > 0 ? t[off] : 0.0;
            const auto pos = nn::assign_position_indices(it.text.size(), it.n_speech());
            segments.push_back({row, it.text.size() + it.n_speech()});
            for (std::size_t s = 0; s < it.text.size(); ++s, ++row) {
                if (it.text[s] >= k) throw DomainError("T2TModel: symbol outside alphabet");
                auto r = features.row(row);
                r[it.text[s]] = 1.0;
                r[k + d] = 1.0;
                nn::time_embedding(ti, r.subspan(k + d + 2, tf));
                positions.push_back(pos.text_indices[s]);
            }
            for (std::size_t s = 0; s < it.n_speech(); ++s, ++row) {
                auto r = features.row(row);
                const bool masked = it.mask.contains(s);
                auto src = masked ? x.row(off + s - it.mask.start) : it.context.row(s);
                std::copy(src.begin(), src.end(), r.begin() + static_cast<std::ptrdiff_t>(k));
                r[k + d + 1] = masked ? 1.0 : 0.0;
                nn::time_embedding(ti, r.subspan(k + d + 2, tf));
                positions.push_back(pos.speech_indices[s]);
                if (masked) free_rows.push_back(row);
            }
        }

        nn::Var h = in_proj()(p, p.graph().constant(std::move(features)));
        for (std::size_t b = 0; b < m_config.blocks; ++b) h = block(b)(p, h, segments, positions);
        return {head()(p, out_norm()(p, h)), std::move(free_rows)};
    }

private:
    nn::Linear in_proj() const { return {"t2t.in", m_config.input_width(), m_config.width}; }
    nn::TransformerBlock block(std::size_t b) const {
        return {"t2t.block" + std::to_string(b), m_config.width, m_config.heads, m_config.mlp_ratio, m_config.rope_base};
    }
    nn::LayerNorm out_norm() const { return {"t2t.out_norm", m_config.width}; }
    nn::Linear head() const { return {"t2t.head", m_config.width, m_config.token_dim}; }

    T2TConfig m_config;
};

/// Infilling problems for training: one mask per utterance from sample_mask.
inline InfillBatch training_batch(const std::vector<const ToyUtterance*>& utterances, Rng& rng) {
    std::vector<InfillItem> items;
    for (const auto* u : utterances) items.push_back({u->text, u->tokens, sample_mask(u->n_speech(), rng)});
    return InfillBatch(std::move(items));
}

/// `count` utterances drawn uniformly with replacement.
inline std::vector<const ToyUtterance*> draw_minibatch(const std::vector<ToyUtterance>& data, std::size_t count, Rng& rng) {
    if (data.empty()) throw DomainError("draw_minibatch: empty dataset");
    std::vector<const ToyUtterance*> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(&data[rng.below(data.size())]);
    return out;
}

/// One rectified-flow step restricted to masked positions.
inline flow::UpdateStats t2t_train_step(T2TModel& model, nn::AdamW& optimizer,
                                        const std::vector<const ToyUtterance*>& utterances, Rng& rng,
                                        const flow::TimeSampler& sampler = {}) {
    const InfillBatch batch = training_batch(utterances, rng);
    return flow::dsm_update(model, optimizer, batch.free_tokens(), &batch, rng, sampler);
}

} // namespace e1::toytts
