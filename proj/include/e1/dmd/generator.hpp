#pragma once

#include <memory>
#include <string>

#include "e1/core/rng.hpp"
#include "e1/flow/drift.hpp"
#include "e1/flow/schedule.hpp"
#include "e1/nn/layers.hpp"

namespace e1::dmd {

/// Differentiable map from noise z ([rows x dim]) to samples.
class Generator {
public:
    virtual ~Generator() = default;

    virtual std::unique_ptr<Generator> clone() const = 0;
    virtual nn::Var generate(const nn::Bound& params, const RealArray& z, const flow::Conditioning* cond) const = 0;

    virtual nn::ParamStore& params() = 0;
    virtual const nn::ParamStore& params() const = 0;

    RealArray sample(const nn::ParamStore& params, const RealArray& z, const flow::Conditioning* cond) const {
        nn::Graph g;
        nn::Bound b(g, params, false);
        return g.value(generate(b, z, cond));
    }

    RealArray sample(const RealArray& z, const flow::Conditioning* cond) const { return sample(params(), z, cond); }
};

/// One Euler step over the whole interval with a drift network read out at
/// a fixed time: g(z) = z - v(z, t_gen). Identical to a one-step Euler sample
/// of the same network.
class DriftGenerator final : public Generator {
public:
    DriftGenerator(const flow::DriftModel& drift, double t_gen) : m_drift(drift.clone()), m_t_gen(t_gen) {}
    DriftGenerator(const DriftGenerator& other) : m_drift(other.m_drift->clone()), m_t_gen(other.m_t_gen) {}

    std::unique_ptr<Generator> clone() const override { return std::make_unique<DriftGenerator>(*this); }

    nn::Var generate(const nn::Bound& params, const RealArray& z, const flow::Conditioning* cond) const override {
        std::vector<double> t(z.rows(), m_t_gen);
        nn::Var v = m_drift->forward(params, z, t, cond);
        return nn::sub(params.graph().constant(z), v);
    }

    nn::ParamStore& params() override { return m_drift->params(); }
    const nn::ParamStore& params() const override { return m_drift->params(); }

    const flow::DriftModel& drift() const { return *m_drift; }
    double readout_time() const noexcept { return m_t_gen; }

private:
    std::unique_ptr<flow::DriftModel> m_drift;
    double m_t_gen;
};

/// g(z) = A z + b applied to each row. Stored as W = A^T so that a batch is
/// z W + b.
class AffineGenerator final : public Generator {
public:
    explicit AffineGenerator(std::size_t dim) {
        RealArray w = RealArray::matrix(dim, dim);
        for (std::size_t i = 0; i < dim; ++i) w(i, i) = 1.0;
        m_params.add("affine.weight", std::move(w));
        m_params.add("affine.bias", RealArray(Shape{dim}, 0.0));
    }

    std::unique_ptr<Generator> clone() const override { return std::make_unique<AffineGenerator>(*this); }

    nn::Var generate(const nn::Bound& params, const RealArray& z, const flow::Conditioning*) const override {
        nn::Graph& g = params.graph();
        return nn::add_bias(nn::matmul(g.constant(z), params["affine.weight"]), params["affine.bias"]);
    }

    nn::ParamStore& params() override { return m_params; }
    const nn::ParamStore& params() const override { return m_params; }

    /// A (the transpose of the stored weight).
    RealArray matrix() const {
        const auto& w = m_params.get("affine.weight");
        RealArray a(w.shape());
        for (std::size_t i = 0; i < w.rows(); ++i)
            for (std::size_t j = 0; j < w.cols(); ++j) a(i, j) = w(j, i);
        return a;
    }

    RealArray offset() const { return m_params.get("affine.bias"); }

    void set(const RealArray& a, const RealArray& b) {
        RealArray w(a.shape());
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) w(i, j) = a(j, i);
        m_params.set("affine.weight", w);
        m_params.set("affine.bias", b);
    }

private:
    nn::ParamStore m_params;
};

} // namespace e1::dmd
