#pragma once

// E1CK checkpoint layout (all integers little-endian):
//
//   "E1CK"                      4 bytes magic
//   version                     u32
//   entry count                 u64
//   per entry:
//     name length               u32
//     name                      UTF-8 bytes
//     rank                      u32
//     dims                      rank x u64
//     payload                   prod(dims) x f64 (IEEE-754 bits)

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/nn/param_store.hpp"

namespace e1::nn {

inline constexpr char kCheckpointMagic[4] = {'E', '1', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointVersionError : public FormatError {
public:
    CheckpointVersionError(std::uint32_t found, std::uint32_t expected)
        : FormatError("checkpoint version " + std::to_string(found) + " is not supported (expected " +
                      std::to_string(expected) + ")"),
          found_version(found),
          expected_version(expected) {}

    std::uint32_t found_version;
    std::uint32_t expected_version;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : m_bytes(bytes) {}

    template <typename T>
    T get(const char* what) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        need(sizeof(U), what);
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            bits |= static_cast<U>(static_cast<unsigned char>(m_bytes[m_pos + i])) << (8 * i);
        m_pos += sizeof(U);
        return std::bit_cast<T>(bits);
    }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto s = m_bytes.substr(m_pos, n);
        m_pos += n;
        return s;
    }

    bool at_end() const { return m_pos == m_bytes.size(); }

private:
    void need(std::size_t n, const char* what) {
        if (m_bytes.size() - m_pos < n) {
            throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                              std::to_string(m_pos));
        }
    }

    std::string_view m_bytes;
    std::size_t m_pos = 0;
};

} // namespace detail

inline std::string encode_checkpoint(const ParamStore& store, std::uint32_t version = kCheckpointVersion) {
    std::string out(kCheckpointMagic, 4);
    detail::put_le<std::uint32_t>(out, version);
    detail::put_le<std::uint64_t>(out, store.size());
    for (const auto& e : store) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
        for (auto d : e.value.shape()) detail::put_le<std::uint64_t>(out, d);
        for (double v : e.value.values()) detail::put_le<double>(out, v);
    }
    return out;
}

inline ParamStore decode_checkpoint(std::string_view bytes) {
    detail::Reader in(bytes);
    if (in.take(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
        throw FormatError("not an E1CK checkpoint: bad magic bytes");
    }
    const auto version = in.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) throw CheckpointVersionError(version, kCheckpointVersion);
    const auto count = in.get<std::uint64_t>("entry count");
    ParamStore store;
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto name_len = in.get<std::uint32_t>("name length");
        std::string name(in.take(name_len, "name"));
        const auto rank = in.get<std::uint32_t>("rank");
        Shape shape(rank);
        for (auto& d : shape) d = in.get<std::uint64_t>("dims");
        const std::size_t n = shape_size(shape);
        std::vector<double> values(n);
        for (auto& v : values) v = in.get<double>("payload");
        store.add(name, RealArray(std::move(shape), std::move(values)));
    }
    if (!in.at_end()) throw FormatError("checkpoint has trailing bytes");
    return store;
}

inline void save_checkpoint(const std::string& path, const ParamStore& store) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    const auto bytes = encode_checkpoint(store);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

inline ParamStore load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

/// Several stores in one checkpoint, entry names prefixed with "<store>/".
using NamedStores = std::map<std::string, ParamStore>;

inline ParamStore flatten_stores(const NamedStores& stores) {
    ParamStore flat;
    for (const auto& [prefix, store] : stores)
        for (const auto& e : store) flat.add(prefix + "/" + e.name, e.value);
    return flat;
}

inline NamedStores split_stores(const ParamStore& flat) {
    NamedStores out;
    for (const auto& e : flat) {
        const auto slash = e.name.find('/');
        if (slash == std::string::npos) throw FormatError("checkpoint entry '" + e.name + "' has no store prefix");
        out[e.name.substr(0, slash)].add(e.name.substr(slash + 1), e.value);
    }
    return out;
}

inline void save_stores(const std::string& path, const NamedStores& stores) {
    save_checkpoint(path, flatten_stores(stores));
}

inline NamedStores load_stores(const std::string& path) { return split_stores(load_checkpoint(path)); }

} // namespace e1::nn
