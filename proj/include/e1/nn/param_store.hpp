#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/real_array.hpp"

namespace e1::nn {

/// Named arrays in insertion order. Shapes are fixed once an entry exists.
class ParamStore {
public:
    struct Entry {
        std::string name;
        RealArray value;
    };

    /// Adds a new entry; names must be unique.
    RealArray& add(const std::string& name, RealArray value) {
        if (m_index.contains(name)) throw std::invalid_argument("ParamStore: duplicate entry '" + name + "'");
        m_index.emplace(name, m_entries.size());
        m_entries.push_back({name, std::move(value)});
        return m_entries.back().value;
    }

    bool contains(const std::string& name) const { return m_index.contains(name); }

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = m_index.find(name);
        if (it == m_index.end()) return std::nullopt;
        return it->second;
    }

    const RealArray& get(const std::string& name) const { return m_entries[index_of(name)].value; }

    /// Replaces the values of an entry. The shape must match the existing one.
    void set(const std::string& name, const RealArray& value) {
        auto& slot = m_entries[index_of(name)].value;
        if (!slot.same_shape(value)) {
            throw ShapeError("ParamStore: entry '" + name + "' has shape " + shape_string(slot.shape()) +
                             ", got " + shape_string(value.shape()));
        }
        slot = value;
    }

    std::size_t size() const noexcept { return m_entries.size(); }
    bool empty() const noexcept { return m_entries.empty(); }

    Entry& operator[](std::size_t i) { return m_entries[i]; }
    const Entry& operator[](std::size_t i) const { return m_entries[i]; }

    auto begin() { return m_entries.begin(); }
    auto end() { return m_entries.end(); }
    auto begin() const { return m_entries.begin(); }
    auto end() const { return m_entries.end(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& e : m_entries) n += e.value.size();
        return n;
    }

    /// Same names and shapes, all values zero.
    ParamStore zeros_like() const {
        ParamStore out;
        for (const auto& e : m_entries) out.add(e.name, RealArray(e.value.shape(), 0.0));
        return out;
    }

    /// Throws ShapeError naming the first entry whose name or shape differs.
    void require_compatible(const ParamStore& other, const std::string& what) const {
        if (other.size() != size()) {
            throw ShapeError(what + ": " + std::to_string(other.size()) + " entries, expected " +
                             std::to_string(size()));
        }
        for (std::size_t i = 0; i < size(); ++i) {
            const auto& a = m_entries[i];
            const auto& b = other.m_entries[i];
            if (a.name != b.name) throw ShapeError(what + ": entry '" + b.name + "' where '" + a.name + "' expected");
            if (!a.value.same_shape(b.value)) {
                throw ShapeError(what + ": entry '" + a.name + "' has shape " + shape_string(b.value.shape()) +
                                 ", expected " + shape_string(a.value.shape()));
            }
        }
    }

    /// Overwrites all values from a compatible store.
    void assign_values(const ParamStore& other) {
        require_compatible(other, "ParamStore::assign_values");
        for (std::size_t i = 0; i < size(); ++i) m_entries[i].value = other.m_entries[i].value;
    }

    double l2_norm() const {
        double s = 0.0;
        for (const auto& e : m_entries) s += squared_norm(e.value.span());
        return std::sqrt(s);
    }

    /// FNV-1a over names, shapes and raw value bits.
    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto feed = [&h](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 1099511628211ULL;
            }
        };
        for (const auto& e : m_entries) {
            feed(e.name.data(), e.name.size());
            for (auto d : e.value.shape()) feed(&d, sizeof d);
            feed(e.value.data(), e.value.size() * sizeof(double));
        }
        return h;
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a.m_entries[i].name != b.m_entries[i].name || !(a.m_entries[i].value == b.m_entries[i].value))
                return false;
        }
        return true;
    }

private:
    std::size_t index_of(const std::string& name) const {
        auto it = m_index.find(name);
        if (it == m_index.end()) throw std::out_of_range("ParamStore: no entry '" + name + "'");
        return it->second;
    }

    std::vector<Entry> m_entries;
    std::unordered_map<std::string, std::size_t> m_index;
};

/// Gradients share the layout of the store they were computed for.
using Grads = ParamStore;

} // namespace e1::nn
