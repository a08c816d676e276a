#pragma once

#include <cmath>
#include <string>

#include "e1/core/error.hpp"
#include "e1/nn/param_store.hpp"

namespace e1::oracle {

/// Central-difference gradient of a scalar function of a parameter store:
/// (f(w + h e_i) - f(w - h e_i)) / 2h for every coordinate.
template <typename ScalarFn>
nn::Grads finite_diff_grad(ScalarFn&& f, const nn::ParamStore& params, double h = 1e-5) {
    if (!(h > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
    nn::ParamStore work = params;
    nn::Grads out = params.zeros_like();
    for (std::size_t p = 0; p < work.size(); ++p) {
        auto& w = work[p].value;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + h;
            const double up = f(static_cast<const nn::ParamStore&>(work));
            w[i] = orig - h;
            const double down = f(static_cast<const nn::ParamStore&>(work));
            w[i] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NonFiniteError("finite_diff_grad: non-finite evaluation at '" + work[p].name + "'[" +
                                     std::to_string(i) + "]");
            }
            out[p].value[i] = (up - down) / (2.0 * h);
        }
    }
    return out;
}

/// Largest |a - b| / max(|a|, |b|, floor) over all entries.
inline double max_relative_error(const nn::Grads& a, const nn::Grads& b, double floor = 1e-8) {
    a.require_compatible(b, "max_relative_error");
    double worst = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p)
        for (std::size_t i = 0; i < a[p].value.size(); ++i) {
            const double x = a[p].value[i], y = b[p].value[i];
            worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
        }
    return worst;
}

/// |a - b| / max(|a|, |b|) over the concatenation of all entries.
inline double relative_error(const nn::Grads& a, const nn::Grads& b) {
    a.require_compatible(b, "relative_error");
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p)
        for (std::size_t i = 0; i < a[p].value.size(); ++i) {
            const double x = a[p].value[i], y = b[p].value[i];
            diff += (x - y) * (x - y);
            na += x * x;
            nb += y * y;
        }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

} // namespace e1::oracle
