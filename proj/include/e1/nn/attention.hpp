#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "e1/nn/graph.hpp"
#include "e1/nn/rope.hpp"

namespace e1::nn {

/// Consecutive rows [start, start + length) forming one sequence of a batch.
struct Segment {
    std::size_t start = 0;
    std::size_t length = 0;
};

namespace detail {

/// cos/sin of every (row, frequency) rotary angle, [rows x dh/2] each.
struct RopeTable {
    std::vector<double> cos, sin;
    std::size_t pairs = 0;

    RopeTable(const std::vector<double>& positions, std::size_t dh, double base) : pairs(dh / 2) {
        std::vector<double> freq(pairs);
        for (std::size_t k = 0; k < pairs; ++k)
            freq[k] = std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(dh));
        cos.resize(positions.size() * pairs);
        sin.resize(positions.size() * pairs);
        for (std::size_t i = 0; i < positions.size(); ++i)
            for (std::size_t k = 0; k < pairs; ++k) {
                const double angle = positions[i] * freq[k];
                cos[i * pairs + k] = std::cos(angle);
                sin[i * pairs + k] = std::sin(angle);
            }
    }

    // Rotates every head of row i by its angle; direction -1 applies the inverse.
    void rotate(double* row, std::size_t i, std::size_t heads, double direction) const {
        const double* c = cos.data() + i * pairs;
        const double* s = sin.data() + i * pairs;
        for (std::size_t h = 0; h < heads; ++h) {
            double* v = row + h * 2 * pairs;
            for (std::size_t k = 0; k < pairs; ++k) {
                const double sk = direction * s[k];
                const double x0 = v[2 * k], x1 = v[2 * k + 1];
                v[2 * k] = x0 * c[k] - x1 * sk;
                v[2 * k + 1] = x0 * sk + x1 * c[k];
            }
        }
    }
};

using HeadBlock = Eigen::Map<const RowMajor, 0, Eigen::OuterStride<>>;
using MutHeadBlock = Eigen::Map<RowMajor, 0, Eigen::OuterStride<>>;

} // namespace detail

/// Multi-head self-attention over packed sequences, with rotary position
/// embedding applied to queries and keys. Rows attend only within their own
/// segment. q, k, v are [rows x width]; width must split into `heads` even-sized
/// heads. positions holds one (possibly fractional) index per row.
inline Var rope_attention(Var q, Var k, Var v, const std::vector<Segment>& segments,
                          const std::vector<double>& positions, std::size_t heads, double base) {
    Graph& g = *q.graph;
    const auto& qv = g.value(q);
    const auto& kv = g.value(k);
    const auto& vv = g.value(v);
    detail::require_matrix(qv, "rope_attention");
    require_same_shape(qv, kv, "rope_attention q/k");
    require_same_shape(qv, vv, "rope_attention q/v");
    const std::size_t n = qv.rows(), width = qv.cols();
    if (heads == 0 || width % heads != 0 || (width / heads) % 2 != 0) {
        throw ShapeError("rope_attention: width " + std::to_string(width) + " does not split into " +
                         std::to_string(heads) + " even heads");
    }
    if (positions.size() != n) throw ShapeError("rope_attention: one position per row required");
    const std::size_t dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto W = static_cast<Eigen::Index>(width), D = static_cast<Eigen::Index>(dh);

    // Rotated copies of q and k, kept for the backward pass.
    auto table = std::make_shared<detail::RopeTable>(positions, dh, base);
    auto qr = std::make_shared<RealArray>(qv);
    auto kr = std::make_shared<RealArray>(kv);
    for (std::size_t i = 0; i < n; ++i) {
        table->rotate(qr->row(i).data(), i, heads, 1.0);
        table->rotate(kr->row(i).data(), i, heads, 1.0);
    }

    // Attention weights per (segment, head). Each block owns its buffer so the
    // arithmetic does not depend on where a segment sits in the packed batch.
    auto weights = std::make_shared<std::vector<detail::RowMajor>>();
    weights->reserve(segments.size() * heads);

    RealArray out = RealArray::matrix(n, width);
    for (const auto& [start, len] : segments) {
        if (start + len > n) throw ShapeError("rope_attention: segment out of range");
        const auto L = static_cast<Eigen::Index>(len);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = start * width + h * dh;
            detail::HeadBlock qh(qr->data() + off, L, D, Eigen::OuterStride<>(W));
            detail::HeadBlock kh(kr->data() + off, L, D, Eigen::OuterStride<>(W));
            detail::HeadBlock vh(vv.data() + off, L, D, Eigen::OuterStride<>(W));
            detail::RowMajor& a = weights->emplace_back(L, L);
            a.noalias() = (qh * kh.transpose()) * scale;
            for (Eigen::Index i = 0; i < L; ++i) {
                auto row = a.row(i);
                row = (row.array() - row.maxCoeff()).exp();
                row /= row.sum();
            }
            detail::MutHeadBlock(out.data() + off, L, D, Eigen::OuterStride<>(W)).noalias() = a * vh;
        }
    }

    const bool rg = g.requires_grad(q) || g.requires_grad(k) || g.requires_grad(v);
    if (!rg) return g.push(std::move(out), false, {});
    return g.push(
        std::move(out), true,
        [q_id = q.id, k_id = k.id, v_id = v.id, segments, weights, qr, kr, table, heads, dh, width,
         scale](Graph& gr, std::size_t self) {
            const auto& go = gr.grad_at(self);
            const auto& vv = gr.value_at(v_id);
            const std::size_t n = vv.rows();
            const auto W = static_cast<Eigen::Index>(width), D = static_cast<Eigen::Index>(dh);
            RealArray dqr = RealArray::matrix(n, width);
            RealArray dkr = RealArray::matrix(n, width);
            RealArray dv = RealArray::matrix(n, width);
            detail::RowMajor da, ds;
            for (std::size_t si = 0; si < segments.size(); ++si) {
                const auto [start, len] = segments[si];
                const auto L = static_cast<Eigen::Index>(len);
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t off = start * width + h * dh;
                    const Eigen::OuterStride<> stride(W);
                    const detail::RowMajor& a = (*weights)[si * heads + h];
                    detail::HeadBlock goh(go.data() + off, L, D, stride);
                    detail::HeadBlock vh(vv.data() + off, L, D, stride);
                    detail::HeadBlock qh(qr->data() + off, L, D, stride);
                    detail::HeadBlock kh(kr->data() + off, L, D, stride);
                    detail::MutHeadBlock(dv.data() + off, L, D, stride).noalias() += a.transpose() * goh;
                    da.noalias() = goh * vh.transpose();
                    const Eigen::VectorXd row_dot = (a.array() * da.array()).rowwise().sum();
                    ds = (a.array() * (da.array().colwise() - row_dot.array())) * scale;
                    detail::MutHeadBlock(dqr.data() + off, L, D, stride).noalias() += ds * kh;
                    detail::MutHeadBlock(dkr.data() + off, L, D, stride).noalias() += ds.transpose() * qh;
                }
            }
            // Undo the rotations: the transpose of a rotation is its inverse.
            for (std::size_t i = 0; i < n; ++i) {
                table->rotate(dqr.row(i).data(), i, heads, -1.0);
                table->rotate(dkr.row(i).data(), i, heads, -1.0);
            }
            auto accumulate = [&gr](std::size_t id, const RealArray& d) {
                if (!gr.requires_grad_at(id)) return;
                auto& slot = gr.grad_slot(id);
                for (std::size_t i = 0; i < d.size(); ++i) slot[i] += d[i];
            };
            accumulate(q_id, dqr);
            accumulate(k_id, dkr);
            accumulate(v_id, dv);
        });
}

/// Attention logits between a query and key row after rotary embedding.
inline double rope_logit(std::span<const double> query, double query_index, std::span<const double> key,
                         double key_index, double base = 10000.0) {
    std::vector<double> q(query.begin(), query.end()), k(key.begin(), key.end());
    rope_rotate(q, query_index, base);
    rope_rotate(k, key_index, base);
    return dot(q, k);
}

} // namespace e1::nn
