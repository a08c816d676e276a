#pragma once

// Reverse-mode differentiation over matrix-valued nodes.
//
// A Graph records every operation applied to its Vars. Values are computed
// eagerly; backward() walks the record in reverse and accumulates gradients
// into every node that depends on a trainable leaf. Only the operations the
// models in this repository need are provided.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

// Small products would otherwise switch to a coefficient loop whose rounding
// differs from the blocked kernel, so one item's output would depend on how
// many rows it was batched with. Also set by the CMake target.
#ifndef EIGEN_GEMM_TO_COEFFBASED_THRESHOLD
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#endif
#include <Eigen/Core>

#include "e1/core/error.hpp"
#include "e1/core/real_array.hpp"

namespace e1::nn {

class Graph;

/// Handle to a node of a Graph.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;
};

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// A value that never receives a gradient.
    Var constant(RealArray value) { return push(std::move(value), false, {}); }

    /// A trainable input. Its gradient is available after backward().
    Var leaf(RealArray value) { return push(std::move(value), true, {}); }

    const RealArray& value(Var v) const { return m_nodes[v.id].value; }

    /// Gradient of the last backward() target with respect to `v`. Zero if `v`
    /// does not influence the target.
    RealArray grad(Var v) const {
        const auto& n = m_nodes[v.id];
        if (n.grad.empty() && !n.value.empty()) return RealArray(n.value.shape(), 0.0);
        return n.grad;
    }

    bool requires_grad(Var v) const { return m_nodes[v.id].requires_grad; }

    std::size_t node_count() const noexcept { return m_nodes.size(); }

    /// Backpropagates from a scalar node with seed 1.
    void backward(Var target) {
        if (value(target).size() != 1) {
            throw ShapeError("Graph::backward: target must be scalar, got " + shape_string(value(target).shape()));
        }
        backward(target, RealArray(value(target).shape(), 1.0));
    }

    /// Backpropagates an explicit upstream gradient (vector-Jacobian product).
    void backward(Var target, const RealArray& seed) {
        require_same_shape(value(target), seed, "Graph::backward seed");
        for (auto& n : m_nodes) n.grad = RealArray();
        m_nodes[target.id].grad = seed;
        for (std::size_t i = target.id + 1; i-- > 0;) {
            auto& n = m_nodes[i];
            if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
            n.backprop(*this, i);
        }
    }

    // Used by operation implementations.
    using Backprop = std::function<void(Graph&, std::size_t)>;

    Var push(RealArray value, bool requires_grad, Backprop backprop) {
        m_nodes.push_back({std::move(value), RealArray(), requires_grad, std::move(backprop)});
        return Var{this, m_nodes.size() - 1};
    }

    const RealArray& value_at(std::size_t id) const { return m_nodes[id].value; }
    const RealArray& grad_at(std::size_t id) const { return m_nodes[id].grad; }
    bool requires_grad_at(std::size_t id) const { return m_nodes[id].requires_grad; }

    /// Accumulation target for gradient of node `id`, allocated on first use.
    RealArray& grad_slot(std::size_t id) {
        auto& n = m_nodes[id];
        if (n.grad.empty()) n.grad = RealArray(n.value.shape(), 0.0);
        return n.grad;
    }

private:
    struct Node {
        RealArray value;
        RealArray grad;
        bool requires_grad = false;
        Backprop backprop;
    };

    std::vector<Node> m_nodes;
};

namespace detail {

inline void require_matrix(const RealArray& a, const char* op) {
    if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

inline void require_same(Var a, Var b, const char* op) {
    require_same_shape(a.graph->value(a), b.graph->value(b), op);
}

template <typename F>
Var unary(Var a, RealArray out, F&& backprop_fn) {
    Graph& g = *a.graph;
    const bool rg = g.requires_grad(a);
    if (!rg) return g.push(std::move(out), false, {});
    return g.push(std::move(out), true,
                  [a_id = a.id, fn = std::forward<F>(backprop_fn)](Graph& gr, std::size_t self) {
                      if (!gr.requires_grad_at(a_id)) return;
                      fn(gr, self, gr.grad_slot(a_id));
                  });
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

// The blocked kernel treats a trailing group of fewer than four rows with
// different code, which rounds differently. Padding keeps every row on the
// full-width path so results do not depend on batch composition.
constexpr std::size_t kRowGroup = 4;

template <class Product>
inline void rowwise_gemm(const double* a, std::size_t n, std::size_t a_cols, double* c, std::size_t c_cols,
                         Product&& product) {
    const auto C = static_cast<Eigen::Index>(c_cols), A = static_cast<Eigen::Index>(a_cols);
    if (n % kRowGroup == 0) {
        MutMap(c, static_cast<Eigen::Index>(n), C).noalias() += product(ConstMap(a, static_cast<Eigen::Index>(n), A));
        return;
    }
    const auto padded = static_cast<Eigen::Index>((n / kRowGroup + 1) * kRowGroup);
    RowMajor a_pad = RowMajor::Zero(padded, A);
    a_pad.topRows(static_cast<Eigen::Index>(n)) = ConstMap(a, static_cast<Eigen::Index>(n), A);
    RowMajor c_pad(padded, C);
    c_pad.noalias() = product(a_pad);
    MutMap(c, static_cast<Eigen::Index>(n), C) += c_pad.topRows(static_cast<Eigen::Index>(n));
}

// C[n x m] += A[n x k] * B[k x m]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    const ConstMap bm(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    rowwise_gemm(a, n, k, c, m, [&](const auto& am) { return am * bm; });
}

// C[n x k] += A[n x m] * B[k x m]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m, std::size_t k) {
    const ConstMap bm(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    rowwise_gemm(a, n, m, c, k, [&](const auto& am) { return am * bm.transpose(); });
}

// C[k x m] += A[n x k]^T * B[n x m]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    const auto N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k), M = static_cast<Eigen::Index>(m);
    MutMap(c, K, M).noalias() += ConstMap(a, N, K).transpose() * ConstMap(b, N, M);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// [n x k] * [k x m]
inline Var matmul(Var a, Var b) {
    Graph& g = *a.graph;
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    detail::require_matrix(av, "matmul");
    detail::require_matrix(bv, "matmul");
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    if (bv.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()));
    }
    RealArray out = RealArray::matrix(n, m);
    detail::gemm_nn(av.data(), bv.data(), out.data(), n, k, m);
    const bool rg = g.requires_grad(a) || g.requires_grad(b);
    if (!rg) return g.push(std::move(out), false, {});
    return g.push(std::move(out), true, [a_id = a.id, b_id = b.id, n, k, m](Graph& gr, std::size_t self) {
        const auto& gc = gr.grad_at(self);
        if (gr.requires_grad_at(a_id)) {
            detail::gemm_nt(gc.data(), gr.value_at(b_id).data(), gr.grad_slot(a_id).data(), n, m, k);
        }
        if (gr.requires_grad_at(b_id)) {
            detail::gemm_tn(gr.value_at(a_id).data(), gc.data(), gr.grad_slot(b_id).data(), n, k, m);
        }
    });
}

/// Adds a bias vector of length cols to every row.
inline Var add_bias(Var a, Var bias) {
    Graph& g = *a.graph;
    const auto& av = g.value(a);
    const auto& bv = g.value(bias);
    detail::require_matrix(av, "add_bias");
    const std::size_t n = av.rows(), m = av.cols();
    if (bv.size() != m) {
        throw ShapeError("add_bias: bias of " + std::to_string(bv.size()) + " values for " + std::to_string(m) +
                         " columns");
    }
    RealArray out = av;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.data()[i * m + j] += bv[j];
    const bool rg = g.requires_grad(a) || g.requires_grad(bias);
    if (!rg) return g.push(std::move(out), false, {});
    return g.push(std::move(out), true, [a_id = a.id, b_id = bias.id, n, m](Graph& gr, std::size_t self) {
        const auto& gc = gr.grad_at(self);
        if (gr.requires_grad_at(a_id)) {
            auto& ga = gr.grad_slot(a_id);
            for (std::size_t i = 0; i < n * m; ++i) ga[i] += gc[i];
        }
        if (gr.requires_grad_at(b_id)) {
            auto& gb = gr.grad_slot(b_id);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) gb[j] += gc[i * m + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) {
    detail::require_same(a, b, "add");
    Graph& g = *a.graph;
    RealArray out = g.value(a);
    const auto& bv = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    if (!g.requires_grad(a) && !g.requires_grad(b)) return g.push(std::move(out), false, {});
    return g.push(std::move(out), true, [a_id = a.id, b_id = b.id](Graph& gr, std::size_t self) {
        const auto& gc = gr.grad_at(self);
        for (auto id : {a_id, b_id}) {
            if (!gr.requires_grad_at(id)) continue;
            auto& gx = gr.grad_slot(id);
            for (std::size_t i = 0; i < gc.size(); ++i) gx[i] += gc[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    detail::require_same(a, b, "sub");
    Graph& g = *a.graph;
    RealArray out = g.value(a);
    const auto& bv = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    if (!g.requires_grad(a) && !g.requires_grad(b)) return g.push(std::move(out), false, {});
    return g.push(std::move(out), true, [a_id = a.id, b_id = b.id](Graph& gr, std::size_t self) {
        const auto& gc = gr.grad_at(self);
        if (gr.requires_grad_at(a_id)) {
            auto& ga = gr.grad_slot(a_id);
            for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i];
        }
        if (gr.requires_grad_at(b_id)) {
            auto& gb = gr.grad_slot(b_id);
            for (std::size_t i = 0; i < gc.size(); ++i) gb[i] -= gc[i];
        }
    });
}

inline Var mul(Var a, Var b) {
    detail::require_same(a, b, "mul");
    Graph& g = *a.graph;
    RealArray out = g.value(a);
    const auto& bv = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    if (!g.requires_grad(a) && !g.requires_grad(b)) return g.push(std::move(out), false, {});
    return g.push(std::move(out), true, [a_id = a.id, b_id = b.id](Graph& gr, std::size_t self) {
        const auto& gc = gr.grad_at(self);
        if (gr.requires_grad_at(a_id)) {
            const auto& bv = gr.value_at(b_id);
            auto& ga = gr.grad_slot(a_id);
            for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * bv[i];
        }
        if (gr.requires_grad_at(b_id)) {
            const auto& av = gr.value_at(a_id);
            auto& gb = gr.grad_slot(b_id);
            for (std::size_t i = 0; i < gc.size(); ++i) gb[i] += gc[i] * av[i];
        }
    });
}

inline Var scale(Var a, double c) {
    RealArray out = a.graph->value(a);
    for (double& v : out.values()) v *= c;
    return detail::unary(a, std::move(out), [c](Graph& gr, std::size_t self, RealArray& ga) {
        const auto& gc = gr.grad_at(self);
        for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += c * gc[i];
    });
}

inline Var silu(Var a) {
    const auto& av = a.graph->value(a);
    RealArray out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / (1.0 + std::exp(-av[i]));
    return detail::unary(a, std::move(out), [a_id = a.id](Graph& gr, std::size_t self, RealArray& ga) {
        const auto& x = gr.value_at(a_id);
        const auto& gc = gr.grad_at(self);
        for (std::size_t i = 0; i < gc.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-x[i]));
            ga[i] += gc[i] * s * (1.0 + x[i] * (1.0 - s));
        }
    });
}

inline Var tanh(Var a) {
    const auto& av = a.graph->value(a);
    RealArray out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
    return detail::unary(a, std::move(out), [](Graph& gr, std::size_t self, RealArray& ga) {
        const auto& y = gr.value_at(self);
        const auto& gc = gr.grad_at(self);
        for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * (1.0 - y[i] * y[i]);
    });
}

inline Var softplus(Var a) {
    const auto& av = a.graph->value(a);
    RealArray out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double x = av[i];
        out[i] = x > 30.0 ? x : std::log1p(std::exp(x));
    }
    return detail::unary(a, std::move(out), [a_id = a.id](Graph& gr, std::size_t self, RealArray& ga) {
        const auto& x = gr.value_at(a_id);
        const auto& gc = gr.grad_at(self);
        for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] / (1.0 + std::exp(-x[i]));
    });
}

inline Var abs(Var a) {
    const auto& av = a.graph->value(a);
    RealArray out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::abs(av[i]);
    return detail::unary(a, std::move(out), [a_id = a.id](Graph& gr, std::size_t self, RealArray& ga) {
        const auto& x = gr.value_at(a_id);
        const auto& gc = gr.grad_at(self);
        for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
    });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
    const auto& av = a.graph->value(a);
    double s = 0.0;
    for (double v : av.values()) s += v;
    return detail::unary(a, RealArray::scalar(s), [](Graph& gr, std::size_t self, RealArray& ga) {
        const double gc = gr.grad_at(self)[0];
        for (double& v : ga.values()) v += gc;
    });
}

inline Var mean(Var a) {
    const double n = static_cast<double>(a.graph->value(a).size());
    return scale(sum(a), 1.0 / n);
}

/// Sum of a ⊙ c for a constant array c.
inline Var dot_constant(Var a, const RealArray& c) {
    const auto& av = a.graph->value(a);
    require_same_shape(av, c, "dot_constant");
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * c[i];
    return detail::unary(a, RealArray::scalar(s), [c](Graph& gr, std::size_t self, RealArray& ga) {
        const double gc = gr.grad_at(self)[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gc * c[i];
    });
}

/// Mean over all entries of (a - target)^2 for a constant target.
inline Var mean_squared_error(Var a, const RealArray& target) {
    const auto& av = a.graph->value(a);
    require_same_shape(av, target, "mean_squared_error");
    if (av.empty()) throw ShapeError("mean_squared_error: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - target[i];
        s += d * d;
    }
    const double n = static_cast<double>(av.size());
    return detail::unary(a, RealArray::scalar(s / n),
                         [a_id = a.id, target, n](Graph& gr, std::size_t self, RealArray& ga) {
                             const double gc = gr.grad_at(self)[0];
                             const auto& x = gr.value_at(a_id);
                             for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gc * 2.0 * (x[i] - target[i]) / n;
                         });
}

// ---------------------------------------------------------------------------
// Row and column plumbing

/// Selects rows by index (repeats allowed).
inline Var gather_rows(Var a, std::vector<std::size_t> rows) {
    const auto& av = a.graph->value(a);
    detail::require_matrix(av, "gather_rows");
    const std::size_t m = av.cols();
    RealArray out = RealArray::matrix(rows.size(), m);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= av.rows()) throw ShapeError("gather_rows: row index out of range");
        std::copy_n(av.data() + rows[r] * m, m, out.data() + r * m);
    }
    return detail::unary(a, std::move(out), [rows = std::move(rows), m](Graph& gr, std::size_t self, RealArray& ga) {
        const auto& gc = gr.grad_at(self);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t j = 0; j < m; ++j) ga[rows[r] * m + j] += gc[r * m + j];
    });
}

/// Concatenates matrices with equal row counts side by side.
inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Graph& g = *parts.front().graph;
    const std::size_t n = g.value(parts.front()).rows();
    std::size_t m = 0;
    bool rg = false;
    for (auto p : parts) {
        const auto& v = g.value(p);
        detail::require_matrix(v, "concat_cols");
        if (v.rows() != n) throw ShapeError("concat_cols: row counts differ");
        m += v.cols();
        rg = rg || g.requires_grad(p);
    }
    RealArray out = RealArray::matrix(n, m);
    std::vector<std::size_t> ids, offsets, widths;
    std::size_t off = 0;
    for (auto p : parts) {
        const auto& v = g.value(p);
        for (std::size_t i = 0; i < n; ++i) std::copy_n(v.data() + i * v.cols(), v.cols(), out.data() + i * m + off);
        ids.push_back(p.id);
        offsets.push_back(off);
        widths.push_back(v.cols());
        off += v.cols();
    }
    if (!rg) return g.push(std::move(out), false, {});
    return g.push(std::move(out), true, [ids, offsets, widths, n, m](Graph& gr, std::size_t self) {
        const auto& gc = gr.grad_at(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (!gr.requires_grad_at(ids[p])) continue;
            auto& gx = gr.grad_slot(ids[p]);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < widths[p]; ++j) gx[i * widths[p] + j] += gc[i * m + offsets[p] + j];
        }
    });
}

/// Sums rows of `a` within consecutive row ranges: segment s covers
/// [starts[s], starts[s] + lengths[s]). Output has one row per segment.
inline Var segment_sum(Var a, std::vector<std::size_t> starts, std::vector<std::size_t> lengths) {
    const auto& av = a.graph->value(a);
    detail::require_matrix(av, "segment_sum");
    const std::size_t m = av.cols();
    RealArray out = RealArray::matrix(starts.size(), m);
    for (std::size_t s = 0; s < starts.size(); ++s) {
        if (starts[s] + lengths[s] > av.rows()) throw ShapeError("segment_sum: segment out of range");
        for (std::size_t r = starts[s]; r < starts[s] + lengths[s]; ++r)
            for (std::size_t j = 0; j < m; ++j) out(s, j) += av(r, j);
    }
    return detail::unary(a, std::move(out),
                         [starts = std::move(starts), lengths = std::move(lengths), m](Graph& gr, std::size_t self,
                                                                                      RealArray& ga) {
                             const auto& gc = gr.grad_at(self);
                             for (std::size_t s = 0; s < starts.size(); ++s)
                                 for (std::size_t r = starts[s]; r < starts[s] + lengths[s]; ++r)
                                     for (std::size_t j = 0; j < m; ++j) ga[r * m + j] += gc[s * m + j];
                         });
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-row layer normalization with learned gain and bias.
inline Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5) {
    Graph& g = *a.graph;
    const auto& av = g.value(a);
    detail::require_matrix(av, "layer_norm");
    const std::size_t n = av.rows(), m = av.cols();
    const auto& gv = g.value(gain);
    const auto& bv = g.value(bias);
    if (gv.size() != m || bv.size() != m) throw ShapeError("layer_norm: gain/bias width mismatch");
    RealArray out = RealArray::matrix(n, m);
    RealArray xhat = RealArray::matrix(n, m);
    std::vector<double> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = av.data() + i * m;
        double mu = 0.0;
        for (std::size_t j = 0; j < m; ++j) mu += x[j];
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t j = 0; j < m; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(m);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < m; ++j) {
            xhat(i, j) = (x[j] - mu) * inv_std[i];
            out(i, j) = xhat(i, j) * gv[j] + bv[j];
        }
    }
    const bool rg = g.requires_grad(a) || g.requires_grad(gain) || g.requires_grad(bias);
    if (!rg) return g.push(std::move(out), false, {});
    return g.push(std::move(out), true,
                  [a_id = a.id, g_id = gain.id, b_id = bias.id, n, m, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](Graph& gr, std::size_t self) {
                      const auto& gc = gr.grad_at(self);
                      const auto& gv = gr.value_at(g_id);
                      if (gr.requires_grad_at(g_id)) {
                          auto& gg = gr.grad_slot(g_id);
                          for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < m; ++j) gg[j] += gc[i * m + j] * xhat[i * m + j];
                      }
                      if (gr.requires_grad_at(b_id)) {
                          auto& gb = gr.grad_slot(b_id);
                          for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < m; ++j) gb[j] += gc[i * m + j];
                      }
                      if (gr.requires_grad_at(a_id)) {
                          auto& ga = gr.grad_slot(a_id);
                          const double inv_m = 1.0 / static_cast<double>(m);
                          for (std::size_t i = 0; i < n; ++i) {
                              double s1 = 0.0, s2 = 0.0;
                              for (std::size_t j = 0; j < m; ++j) {
                                  const double dxh = gc[i * m + j] * gv[j];
                                  s1 += dxh;
                                  s2 += dxh * xhat[i * m + j];
                              }
                              for (std::size_t j = 0; j < m; ++j) {
                                  const double dxh = gc[i * m + j] * gv[j];
                                  ga[i * m + j] += inv_std[i] * (dxh - s1 * inv_m - xhat[i * m + j] * s2 * inv_m);
                              }
                          }
                      }
                  });
}

} // namespace e1::nn
