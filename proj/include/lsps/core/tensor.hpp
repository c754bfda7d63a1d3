#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "lsps/core/errors.hpp"

namespace lsps {

// Dense row-major tensor. Shapes are small vectors of ints; data is owned.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data((size_t)numel_of(shape)) {}
    Tensor(std::vector<int> s, T fill_value)
        : shape(std::move(s)), data((size_t)numel_of(shape), fill_value) {}

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t numel() const { return (int64_t)data.size(); }
    int ndim() const { return (int)shape.size(); }
    int dim(int i) const { return shape[(size_t)i]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](int64_t i) { return data[(size_t)i]; }
    const T& operator[](int64_t i) const { return data[(size_t)i]; }

    // (n,c,h,w) accessor for 4-d tensors.
    T& at4(int n, int c, int h, int w) {
        return data[(size_t)(((int64_t)n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    const T& at4(int n, int c, int h, int w) const {
        return data[(size_t)(((int64_t)n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    T& at2(int r, int c) { return data[(size_t)((int64_t)r * shape[1] + c)]; }
    const T& at2(int r, int c) const { return data[(size_t)((int64_t)r * shape[1] + c)]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite((double)v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (int64_t i = 0; i < numel(); ++i) out[i] = (U)data[(size_t)i];
        return out;
    }
};

template <typename T>
inline void require_shape(const Tensor<T>& t, const std::vector<int>& s, const char* where) {
    if (t.shape != s) {
        Tensor<T> want(s);
        throw ShapeError(std::string(where) + ": expected " + want.shape_str() + ", got " +
                         t.shape_str());
    }
}

}  // namespace lsps
