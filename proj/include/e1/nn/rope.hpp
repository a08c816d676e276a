#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/real_array.hpp"

namespace e1::nn {

/// Rotates consecutive feature pairs (2k, 2k+1) of `v` by angle
/// position * base^(-2k/d). A negative position applies the inverse rotation.
inline void rope_rotate(std::span<double> v, double position, double base) {
    const std::size_t d = v.size();
    for (std::size_t k = 0; 2 * k < d; ++k) {
        const double freq = std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(d));
        const double angle = position * freq;
        const double c = std::cos(angle), s = std::sin(angle);
        const double x0 = v[2 * k], x1 = v[2 * k + 1];
        v[2 * k] = x0 * c - x1 * s;
        v[2 * k + 1] = x0 * s + x1 * c;
    }
}

/// Applies rotary position embedding to every row of `vectors` ([n x d]),
/// row i rotated by indices[i]. Indices may be fractional.
inline RealArray rope_apply(const RealArray& vectors, std::span<const double> indices, double base = 10000.0) {
    if (vectors.rank() != 2) throw ShapeError("rope_apply: expected [positions x features], got " +
                                              shape_string(vectors.shape()));
    if (vectors.cols() % 2 != 0) {
        throw ShapeError("rope_apply: feature dimension " + std::to_string(vectors.cols()) + " is odd");
    }
    if (indices.size() != vectors.rows()) {
        throw ShapeError("rope_apply: " + std::to_string(indices.size()) + " indices for " +
                         std::to_string(vectors.rows()) + " positions");
    }
    RealArray out = vectors;
    for (std::size_t i = 0; i < out.rows(); ++i) rope_rotate(out.row(i), indices[i], base);
    return out;
}

/// Position indices for a text sequence followed by a speech sequence. Speech
/// indices are spread over the same range as the text ones so that the initial
/// attention pattern between the two is diagonal.
struct PositionIndexing {
    std::vector<double> text_indices;
    std::vector<double> speech_indices;
    std::size_t n_text = 0;
    std::size_t n_speech = 0;

    /// Text indices followed by speech indices.
    std::vector<double> concatenated() const {
        std::vector<double> all = text_indices;
        all.insert(all.end(), speech_indices.begin(), speech_indices.end());
        return all;
    }
};

inline PositionIndexing assign_position_indices(std::size_t n_text, std::size_t n_speech) {
    if (n_text == 0 || n_speech == 0) {
        throw DomainError("assign_position_indices: lengths must be positive (n_text=" + std::to_string(n_text) +
                          ", n_speech=" + std::to_string(n_speech) + ")");
    }
    PositionIndexing p;
    p.n_text = n_text;
    p.n_speech = n_speech;
    p.text_indices.resize(n_text);
    p.speech_indices.resize(n_speech);
    for (std::size_t i = 0; i < n_text; ++i) p.text_indices[i] = static_cast<double>(i);
    const double nt = static_cast<double>(n_text), ns = static_cast<double>(n_speech);
    for (std::size_t k = 0; k < n_speech; ++k) p.speech_indices[k] = static_cast<double>(k) * nt / ns;
    return p;
}

} // namespace e1::nn
