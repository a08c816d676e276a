#pragma once

#include <string>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/rng.hpp"

namespace e1::toytts {

/// Speech span to regenerate: [start, start + length). Prefix and suffix
/// stay as clean context.
struct MaskSpec {
    enum class Mode { middle, full };

    Mode mode = Mode::middle;
    std::size_t start = 0;
    std::size_t length = 0;

    static MaskSpec full(std::size_t n) { return {Mode::full, 0, n}; }
    static MaskSpec middle(std::size_t start, std::size_t length) { return {Mode::middle, start, length}; }

    bool contains(std::size_t i) const { return i >= start && i < start + length; }

    void validate(std::size_t n_speech) const {
        if (length == 0 || start + length > n_speech) {
            throw DomainError("MaskSpec: span [" + std::to_string(start) + ", " + std::to_string(start + length) +
                              ") invalid for " + std::to_string(n_speech) + " tokens");
        }
        // A middle draw may still cover everything (e.g. n_speech = 1).
        if (mode == Mode::full && !(start == 0 && length == n_speech)) {
            throw DomainError("MaskSpec: full mode must cover the whole sequence");
        }
    }

    bool operator==(const MaskSpec&) const = default;
};

inline constexpr double kFullMaskProbability = 0.1;

/// Full mask with probability full_prob; otherwise a length uniform on
/// {1..n} and a start uniform on {0..n-length}.
inline MaskSpec sample_mask(std::size_t n_speech, Rng& rng, double full_prob = kFullMaskProbability) {
    if (n_speech == 0) throw DomainError("sample_mask: empty sequence");
    if (rng.bernoulli(full_prob)) return MaskSpec::full(n_speech);
    const std::size_t length = 1 + rng.below(n_speech);
    const std::size_t start = rng.below(n_speech - length + 1);
    return MaskSpec::middle(start, length);
}

/// Observation pattern for duration training: nothing observed with
/// probability full_prob, otherwise each symbol observed independently.
inline std::vector<bool> sample_duration_observation(std::size_t n_symbols, Rng& rng, double observe_prob = 0.5,
                                                     double full_prob = kFullMaskProbability) {
    std::vector<bool> observed(n_symbols, false);
    if (rng.bernoulli(full_prob)) return observed;
    for (std::size_t i = 0; i < n_symbols; ++i) observed[i] = rng.bernoulli(observe_prob);
    return observed;
}

} // namespace e1::toytts
