#pragma once

// Synthetic text/token pairs with known alignment. Each symbol is rendered
// as its codeword repeated `duration` times plus Gaussian jitter.
//
// Durations are tied to the symbol: symbol s belongs to class s mod R
// (R = number of repeat values) and usually repeats min_repeat + class
// times; with probability duration_noise the repeat count is redrawn
// uniformly instead. Classes are drawn uniformly, so the marginal repeat
// count stays uniform on the repeat range. Adjacent symbols never repeat,
// which keeps run-collapse decoding lossless.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/real_array.hpp"
#include "e1/core/rng.hpp"

namespace e1::toytts {

struct ToyTaskConfig {
    std::size_t alphabet_size = 16;
    std::size_t token_dim = 8;
    std::size_t min_repeat = 1;
    std::size_t max_repeat = 3;
    double jitter_sigma = 0.05;
    std::size_t min_length = 4;
    std::size_t max_length = 12;
    double duration_noise = 0.05;
    double max_codeword_cosine = 0.8;

    std::size_t repeat_values() const { return max_repeat - min_repeat + 1; }

    void validate() const {
        if (min_repeat < 1 || max_repeat < min_repeat) throw DomainError("ToyTask: need 1 <= min_repeat <= max_repeat");
        if (alphabet_size < 2 * repeat_values()) {
            throw DomainError("ToyTask: alphabet needs at least two symbols per repeat class");
        }
        if (token_dim < 2) throw DomainError("ToyTask: token_dim must be at least 2");
        if (min_length < 1 || max_length < min_length) throw DomainError("ToyTask: need 1 <= min_length <= max_length");
        if (jitter_sigma < 0.0) throw DomainError("ToyTask: jitter_sigma must be non-negative");
        if (duration_noise < 0.0 || duration_noise > 1.0) throw DomainError("ToyTask: duration_noise must lie in [0, 1]");
    }
};

struct ToyUtterance {
    std::vector<std::size_t> text;
    std::vector<std::size_t> durations;
    RealArray tokens;  // [sum(durations) x token_dim]

    std::size_t n_speech() const { return tokens.rows(); }

    bool operator==(const ToyUtterance&) const = default;
};

class ToyTask {
public:
    /// Codebook rows are unit-norm Gaussian directions, redrawn until every
    /// pair has cosine similarity below the configured bound.
    ToyTask(ToyTaskConfig config, std::uint64_t seed) : m_config(config), m_seed(seed) {
        m_config.validate();
        Rng rng = Rng(seed).split(0xC0DEB00C);
        const std::size_t k = m_config.alphabet_size, d = m_config.token_dim;
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000) throw DomainError("ToyTask: could not draw a separated codebook");
            m_codebook = rng.normal_array({k, d});
            for (std::size_t i = 0; i < k; ++i) {
                const double n = std::sqrt(squared_norm(m_codebook.row(i)));
                for (double& v : m_codebook.row(i)) v /= n;
            }
            if (max_cosine() < m_config.max_codeword_cosine) break;
        }
    }

    const ToyTaskConfig& config() const noexcept { return m_config; }
    std::uint64_t seed() const noexcept { return m_seed; }
    const RealArray& codebook() const noexcept { return m_codebook; }
    std::size_t alphabet_size() const noexcept { return m_config.alphabet_size; }
    std::size_t token_dim() const noexcept { return m_config.token_dim; }

    std::size_t repeat_class(std::size_t symbol) const { return symbol % m_config.repeat_values(); }
    std::size_t class_duration(std::size_t symbol) const { return m_config.min_repeat + repeat_class(symbol); }

    double max_cosine() const {
        double worst = -1.0;
        for (std::size_t i = 0; i < m_codebook.rows(); ++i)
            for (std::size_t j = 0; j < i; ++j) worst = std::max(worst, dot(m_codebook.row(i), m_codebook.row(j)));
        return worst;
    }

    /// Draws a text: uniform length, uniform class per position, uniform
    /// symbol within the class excluding the previous symbol.
    std::vector<std::size_t> draw_text(Rng& rng) const {
        const std::size_t len = static_cast<std::size_t>(rng.between(static_cast<long long>(m_config.min_length),
                                                                      static_cast<long long>(m_config.max_length)));
        const std::size_t r = m_config.repeat_values();
        std::vector<std::size_t> text;
        for (std::size_t i = 0; i < len; ++i) {
            const std::size_t cls = rng.below(r);
            std::vector<std::size_t> options;
            for (std::size_t s = cls; s < m_config.alphabet_size; s += r)
                if (text.empty() || s != text.back()) options.push_back(s);
            text.push_back(options[rng.below(options.size())]);
        }
        return text;
    }

    std::size_t draw_duration(std::size_t symbol, Rng& rng) const {
        if (rng.bernoulli(m_config.duration_noise)) {
            return m_config.min_repeat + rng.below(m_config.repeat_values());
        }
        return class_duration(symbol);
    }

    /// Codeword repeats plus N(0, jitter^2) noise.
    RealArray render(const std::vector<std::size_t>& text, const std::vector<std::size_t>& durations, Rng& rng) const {
        if (text.size() != durations.size()) throw ShapeError("render: one duration per symbol required");
        std::size_t n = 0;
        for (auto d : durations) n += d;
        const std::size_t dim = m_config.token_dim;
        RealArray tokens = RealArray::matrix(n, dim);
        std::size_t row = 0;
        for (std::size_t i = 0; i < text.size(); ++i) {
            check_symbol(text[i]);
            for (std::size_t k = 0; k < durations[i]; ++k, ++row)
                for (std::size_t j = 0; j < dim; ++j)
                    tokens(row, j) = m_codebook(text[i], j) + m_config.jitter_sigma * rng.normal();
        }
        return tokens;
    }

    ToyUtterance draw_utterance(Rng& rng) const {
        ToyUtterance u;
        u.text = draw_text(rng);
        for (auto s : u.text) u.durations.push_back(draw_duration(s, rng));
        u.tokens = render(u.text, u.durations, rng);
        return u;
    }

    /// Nearest codeword per token row.
    std::vector<std::size_t> nearest_symbols(const RealArray& tokens) const {
        std::vector<std::size_t> out(tokens.rows());
        for (std::size_t r = 0; r < tokens.rows(); ++r) {
            double best = INFINITY;
            for (std::size_t s = 0; s < m_codebook.rows(); ++s) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < m_config.token_dim; ++j) {
                    const double diff = tokens(r, j) - m_codebook(s, j);
                    d2 += diff * diff;
                }
                if (d2 < best) {
                    best = d2;
                    out[r] = s;
                }
            }
        }
        return out;
    }

    void check_symbol(std::size_t s) const {
        if (s >= m_config.alphabet_size) {
            throw DomainError("symbol " + std::to_string(s) + " outside alphabet of size " +
                              std::to_string(m_config.alphabet_size));
        }
    }

private:
    ToyTaskConfig m_config;
    std::uint64_t m_seed;
    RealArray m_codebook;
};

/// Symbols and run lengths after nearest-codeword decoding.
struct Decoded {
    std::vector<std::size_t> text;
    std::vector<std::size_t> durations;
};

inline Decoded decode(const ToyTask& task, const RealArray& tokens) {
    Decoded out;
    for (auto s : task.nearest_symbols(tokens)) {
        if (!out.text.empty() && out.text.back() == s) {
            ++out.durations.back();
        } else {
            out.text.push_back(s);
            out.durations.push_back(1);
        }
    }
    return out;
}

inline std::size_t edit_distance(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Accumulates edit distance against reference texts; the rate is total
/// edits over total reference symbols.
class ErrorCounter {
public:
    void add(const std::vector<std::size_t>& hypothesis, const std::vector<std::size_t>& reference) {
        m_edits += edit_distance(hypothesis, reference);
        m_symbols += reference.size();
    }

    std::size_t edits() const noexcept { return m_edits; }
    std::size_t symbols() const noexcept { return m_symbols; }
    double rate() const { return m_symbols == 0 ? 0.0 : static_cast<double>(m_edits) / static_cast<double>(m_symbols); }

private:
    std::size_t m_edits = 0;
    std::size_t m_symbols = 0;
};

/// Utterance i is drawn from stream i of the seed, so datasets can be built
/// in any order and prefixes agree across sizes.
inline std::vector<ToyUtterance> gen_dataset(const ToyTask& task, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw DomainError("gen_dataset: n must be at least 1");
    const Rng root(seed);
    std::vector<ToyUtterance> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = root.split(i);
        out.push_back(task.draw_utterance(rng));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset file
//
//   e1-toytts-dataset 1
//   task alphabet_size=16 token_dim=8 ... seed=7
//   data_seed 11
//   count 200
//   <text symbols> | <durations> | <hex tokens>
//
// Tokens are the raw little-endian f64 bytes in row-major order.

inline constexpr int kDatasetVersion = 1;

namespace detail {

inline std::string join(const std::vector<std::size_t>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
    return out;
}

inline std::vector<std::size_t> split_counts(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
            throw FormatError("dataset: bad integer list '" + s + "'");
        }
        out.push_back(std::stoul(item));
    }
    return out;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(' ');
    const auto b = s.find_last_not_of(' ');
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

} // namespace detail

inline std::string to_hex(const RealArray& a) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(a.size() * 16);
    for (double v : a.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            const auto byte = static_cast<unsigned>((bits >> (8 * b)) & 0xff);
            out += digits[byte >> 4];
            out += digits[byte & 0xf];
        }
    }
    return out;
}

inline RealArray from_hex(const std::string& hex, Shape shape) {
    if (hex.size() != shape_size(shape) * 16) throw FormatError("dataset: token payload has the wrong length");
    RealArray out(shape);
    auto nibble = [](char c) -> unsigned {
        if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
        throw FormatError("dataset: bad hex digit");
    };
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            const std::size_t p = i * 16 + static_cast<std::size_t>(b) * 2;
            bits |= static_cast<std::uint64_t>(nibble(hex[p]) << 4 | nibble(hex[p + 1])) << (8 * b);
        }
        std::memcpy(&out[i], &bits, sizeof bits);
    }
    return out;
}

inline void write_dataset(std::ostream& out, const ToyTask& task, std::uint64_t data_seed,
                          const std::vector<ToyUtterance>& data) {
    const auto& c = task.config();
    out << "e1-toytts-dataset " << kDatasetVersion << '\n';
    out << std::setprecision(17) << "task alphabet_size=" << c.alphabet_size << " token_dim=" << c.token_dim
        << " min_repeat=" << c.min_repeat << " max_repeat=" << c.max_repeat << " jitter_sigma=" << c.jitter_sigma
        << " min_length=" << c.min_length << " max_length=" << c.max_length << " duration_noise=" << c.duration_noise
        << " max_codeword_cosine=" << c.max_codeword_cosine << " seed=" << task.seed() << '\n';
    out << "data_seed " << data_seed << '\n';
    out << "count " << data.size() << '\n';
    for (const auto& u : data) {
        out << detail::join(u.text) << " | " << detail::join(u.durations) << " | " << to_hex(u.tokens) << '\n';
    }
}

struct DatasetFile {
    ToyTaskConfig config;
    std::uint64_t task_seed = 0;
    std::uint64_t data_seed = 0;
    std::vector<ToyUtterance> utterances;
};

inline DatasetFile read_dataset(std::istream& in) {
    DatasetFile f;
    std::string line, word;
    int version = 0;
    if (!std::getline(in, line) || std::sscanf(line.c_str(), "e1-toytts-dataset %d", &version) != 1) {
        throw FormatError("dataset: missing header");
    }
    if (version != kDatasetVersion) {
        throw FormatError("dataset: version " + std::to_string(version) + ", expected " + std::to_string(kDatasetVersion));
    }
    if (!std::getline(in, line)) throw FormatError("dataset: missing task line");
    std::stringstream task(line);
    task >> word;
    if (word != "task") throw FormatError("dataset: missing task line");
    while (task >> word) {
        const auto eq = word.find('=');
        if (eq == std::string::npos) throw FormatError("dataset: bad task field '" + word + "'");
        const std::string key = word.substr(0, eq), val = word.substr(eq + 1);
        auto& c = f.config;
        if (key == "alphabet_size") c.alphabet_size = std::stoul(val);
        else if (key == "token_dim") c.token_dim = std::stoul(val);
        else if (key == "min_repeat") c.min_repeat = std::stoul(val);
        else if (key == "max_repeat") c.max_repeat = std::stoul(val);
        else if (key == "jitter_sigma") c.jitter_sigma = std::stod(val);
        else if (key == "min_length") c.min_length = std::stoul(val);
        else if (key == "max_length") c.max_length = std::stoul(val);
        else if (key == "duration_noise") c.duration_noise = std::stod(val);
        else if (key == "max_codeword_cosine") c.max_codeword_cosine = std::stod(val);
        else if (key == "seed") f.task_seed = std::stoull(val);
        else throw FormatError("dataset: unknown task field '" + key + "'");
    }
    auto keyed = [&](const char* key, auto& value) {
        std::string k;
        if (!std::getline(in, line) || !(std::istringstream(line) >> k >> value) || k != key) {
            throw FormatError(std::string("dataset: missing ") + key);
        }
    };
    std::size_t count = 0;
    keyed("data_seed", f.data_seed);
    keyed("count", count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw FormatError("dataset: truncated after " + std::to_string(i) + " records");
        const auto a = line.find('|'), b = line.rfind('|');
        if (a == std::string::npos || a == b) throw FormatError("dataset: malformed record " + std::to_string(i));
        ToyUtterance u;
        u.text = detail::split_counts(detail::trim(line.substr(0, a)));
        u.durations = detail::split_counts(detail::trim(line.substr(a + 1, b - a - 1)));
        if (u.text.size() != u.durations.size()) throw FormatError("dataset: record " + std::to_string(i) + " has mismatched lengths");
        std::size_t n = 0;
        for (auto d : u.durations) n += d;
        u.tokens = from_hex(detail::trim(line.substr(b + 1)), {n, f.config.token_dim});
        f.utterances.push_back(std::move(u));
    }
    return f;
}

} // namespace e1::toytts
