#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "e1/core/error.hpp"

namespace e1 {

using Shape = std::vector<std::size_t>;

// Every buffer starts on a 64-byte boundary. Vectorized reductions then split
// work the same way on every run, which keeps results bitwise reproducible.
template <class T>
struct CacheAlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    CacheAlignedAllocator() = default;
    template <class U>
    CacheAlignedAllocator(const CacheAlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const CacheAlignedAllocator<U>&) const noexcept { return true; }
};

using RealStorage = std::vector<double, CacheAlignedAllocator<double>>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array of doubles. Rank 0 is a scalar.
class RealArray {
public:
    RealArray() = default;

    explicit RealArray(Shape shape, double fill = 0.0)
        : m_shape(std::move(shape)), m_data(shape_size(m_shape), fill) {}

    RealArray(Shape shape, const std::vector<double>& data)
        : RealArray(std::move(shape), RealStorage(data.begin(), data.end())) {}

    RealArray(Shape shape, RealStorage data) : m_shape(std::move(shape)), m_data(std::move(data)) {
        if (m_data.size() != shape_size(m_shape)) {
            throw ShapeError("RealArray: payload of " + std::to_string(m_data.size()) +
                             " values does not fit shape " + shape_string(m_shape));
        }
    }

    static RealArray scalar(double v) { return RealArray(Shape{}, RealStorage{v}); }

    static RealArray matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return RealArray(Shape{rows, cols}, fill);
    }

    static RealArray matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
        return RealArray(Shape{rows, cols}, RealStorage(values));
    }

    static RealArray vector(std::initializer_list<double> values) {
        return RealArray(Shape{values.size()}, RealStorage(values));
    }

    static RealArray vector(const std::vector<double>& values) { return RealArray(Shape{values.size()}, values); }

    const Shape& shape() const noexcept { return m_shape; }
    std::size_t rank() const noexcept { return m_shape.size(); }
    std::size_t size() const noexcept { return m_data.size(); }
    bool empty() const noexcept { return m_data.empty(); }

    /// Rows of the array viewed as a matrix: leading dimension, 1 for scalars.
    std::size_t rows() const noexcept { return m_shape.empty() ? 1 : m_shape.front(); }
    /// Columns of the array viewed as a matrix: product of trailing dimensions.
    std::size_t cols() const noexcept {
        if (m_shape.empty()) return 1;
        return m_shape.front() == 0 ? 0 : m_data.size() / m_shape.front();
    }

    double* data() noexcept { return m_data.data(); }
    const double* data() const noexcept { return m_data.data(); }
    RealStorage& values() noexcept { return m_data; }
    const RealStorage& values() const noexcept { return m_data; }
    std::span<double> span() noexcept { return m_data; }
    std::span<const double> span() const noexcept { return m_data; }

    double& operator[](std::size_t i) { return m_data[i]; }
    double operator[](std::size_t i) const { return m_data[i]; }
    double& operator()(std::size_t r, std::size_t c) { return m_data[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return m_data[r * cols() + c]; }

    std::span<double> row(std::size_t r) { return std::span<double>(m_data).subspan(r * cols(), cols()); }
    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(m_data).subspan(r * cols(), cols());
    }

    bool same_shape(const RealArray& other) const noexcept { return m_shape == other.m_shape; }

    RealArray reshaped(Shape shape) const { return RealArray(std::move(shape), m_data); }

    void fill(double v) { std::fill(m_data.begin(), m_data.end(), v); }

    bool all_finite() const noexcept {
        for (double v : m_data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const RealArray&, const RealArray&) = default;

private:
    Shape m_shape;
    RealStorage m_data;
};

inline void require_same_shape(const RealArray& a, const RealArray& b, const std::string& what) {
    if (!a.same_shape(b)) {
        throw ShapeError(what + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double max_abs_diff(const RealArray& a, const RealArray& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace e1
