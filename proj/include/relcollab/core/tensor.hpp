#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace relcollab {

/// Dense row-major n-dimensional array. The last axis varies fastest.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
    Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("tensor: data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(std::vector<int64_t> s) const {
        if (numel_of(s) != numel()) throw std::invalid_argument("tensor: reshape changes element count");
        return Tensor(std::move(s), data);
    }

    /// Flat offset of a multi-index.
    int64_t offset(const std::vector<int64_t>& idx) const {
        int64_t off = 0;
        for (size_t a = 0; a < shape.size(); ++a) off = off * shape[a] + idx[a];
        return off;
    }

    T& at(const std::vector<int64_t>& idx) { return data[static_cast<size_t>(offset(idx))]; }
    const T& at(const std::vector<int64_t>& idx) const { return data[static_cast<size_t>(offset(idx))]; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) { return Tensor<T>(t.shape); }

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

/// Step a multi-index through `dims` in row-major order. Returns false after the last index.
inline bool next_index(std::vector<int64_t>& idx, const std::vector<int64_t>& dims) {
    for (int a = static_cast<int>(dims.size()) - 1; a >= 0; --a) {
        if (++idx[a] < dims[a]) return true;
        idx[a] = 0;
    }
    return false;
}

inline int64_t prod(const std::vector<int64_t>& dims) {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
}

}  // namespace relcollab
