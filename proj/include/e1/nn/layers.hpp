#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "e1/core/rng.hpp"
#include "e1/nn/attention.hpp"
#include "e1/nn/graph.hpp"
#include "e1/nn/param_store.hpp"

namespace e1::nn {

/// Parameters of a store loaded into a graph as leaves (trainable) or
/// constants (frozen), addressable by name.
class Bound {
public:
    Bound(Graph& graph, const ParamStore& store, bool trainable) : m_graph(&graph), m_store(&store) {
        m_vars.reserve(store.size());
        for (const auto& e : store) m_vars.push_back(trainable ? graph.leaf(e.value) : graph.constant(e.value));
    }

    Var operator[](const std::string& name) const {
        auto idx = m_store->find(name);
        if (!idx) throw std::out_of_range("Bound: no parameter '" + name + "'");
        return m_vars[*idx];
    }

    Graph& graph() const { return *m_graph; }

    /// Gradient of the last backward() target for every entry, in store order.
    Grads gradients() const {
        Grads out;
        for (std::size_t i = 0; i < m_store->size(); ++i) out.add((*m_store)[i].name, m_graph->grad(m_vars[i]));
        return out;
    }

private:
    Graph* m_graph;
    const ParamStore* m_store;
    std::vector<Var> m_vars;
};

/// Evaluates a scalar loss built by `build_loss(graph, bound)` and returns it
/// together with its exact gradient for every parameter of `params`.
template <typename BuildLoss>
std::pair<double, Grads> forward_backward(const ParamStore& params, BuildLoss&& build_loss) {
    Graph graph;
    Bound bound(graph, params, true);
    Var loss = build_loss(graph, bound);
    if (graph.value(loss).size() != 1) {
        throw ShapeError("forward_backward: loss must be scalar, got " + shape_string(graph.value(loss).shape()));
    }
    graph.backward(loss);
    return {graph.value(loss)[0], bound.gradients()};
}

enum class Activation { silu, tanh };

inline Var activate(Var x, Activation act) { return act == Activation::silu ? silu(x) : nn::tanh(x); }

struct Linear {
    std::string name;
    std::size_t in = 0;
    std::size_t out = 0;

    void init(ParamStore& store, Rng& rng, double gain = 1.0) const {
        RealArray w = RealArray::matrix(in, out);
        const double sd = gain / std::sqrt(static_cast<double>(in));
        for (double& v : w.values()) v = sd * rng.normal();
        store.add(name + ".weight", std::move(w));
        store.add(name + ".bias", RealArray(Shape{out}, 0.0));
    }

    Var operator()(const Bound& p, Var x) const {
        return add_bias(matmul(x, p[name + ".weight"]), p[name + ".bias"]);
    }
};

/// Fully connected network: Linear, activation, ..., Linear.
struct Mlp {
    std::vector<Linear> layers;
    Activation activation = Activation::silu;

    static Mlp make(const std::string& name, std::size_t in, std::size_t hidden, std::size_t depth, std::size_t out,
                    Activation act) {
        Mlp m;
        m.activation = act;
        std::size_t prev = in;
        for (std::size_t i = 0; i < depth; ++i) {
            m.layers.push_back({name + ".l" + std::to_string(i), prev, hidden});
            prev = hidden;
        }
        m.layers.push_back({name + ".out", prev, out});
        return m;
    }

    void init(ParamStore& store, Rng& rng, double out_gain = 1.0) const {
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].init(store, rng, i + 1 == layers.size() ? out_gain : 1.0);
    }

    Var operator()(const Bound& p, Var x) const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            x = layers[i](p, x);
            if (i + 1 < layers.size()) x = activate(x, activation);
        }
        return x;
    }
};

struct LayerNorm {
    std::string name;
    std::size_t width = 0;

    void init(ParamStore& store) const {
        store.add(name + ".gain", RealArray(Shape{width}, 1.0));
        store.add(name + ".bias", RealArray(Shape{width}, 0.0));
    }

    Var operator()(const Bound& p, Var x) const { return layer_norm(x, p[name + ".gain"], p[name + ".bias"]); }
};

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
struct TransformerBlock {
    std::string name;
    std::size_t width = 0;
    std::size_t heads = 1;
    std::size_t mlp_ratio = 4;
    double rope_base = 10000.0;

    Linear q() const { return {name + ".q", width, width}; }
    Linear k() const { return {name + ".k", width, width}; }
    Linear v() const { return {name + ".v", width, width}; }
    Linear proj() const { return {name + ".proj", width, width}; }
    Linear fc1() const { return {name + ".fc1", width, width * mlp_ratio}; }
    Linear fc2() const { return {name + ".fc2", width * mlp_ratio, width}; }
    LayerNorm ln1() const { return {name + ".ln1", width}; }
    LayerNorm ln2() const { return {name + ".ln2", width}; }

    void init(ParamStore& store, Rng& rng) const {
        ln1().init(store);
        q().init(store, rng);
        k().init(store, rng);
        v().init(store, rng);
        proj().init(store, rng, 0.5);
        ln2().init(store);
        fc1().init(store, rng);
        fc2().init(store, rng, 0.5);
    }

    Var operator()(const Bound& p, Var x, const std::vector<Segment>& segments,
                   const std::vector<double>& positions) const {
        Var h = ln1()(p, x);
        Var att = rope_attention(q()(p, h), k()(p, h), v()(p, h), segments, positions, heads, rope_base);
        x = add(x, proj()(p, att));
        Var m = fc2()(p, silu(fc1()(p, ln2()(p, x))));
        return add(x, m);
    }
};

/// Sinusoidal features of a scalar time: [sin(t w_i), cos(t w_i)] with
/// geometrically spaced frequencies w_i from 1 to max_freq.
inline void time_embedding(double t, std::span<double> out, double max_freq = 100.0) {
    const std::size_t half = out.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double frac = half > 1 ? static_cast<double>(i) / static_cast<double>(half - 1) : 0.0;
        const double w = std::pow(max_freq, frac);
        out[i] = std::sin(t * w);
        out[half + i] = std::cos(t * w);
    }
}

} // namespace e1::nn
