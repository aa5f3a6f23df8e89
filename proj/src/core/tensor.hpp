#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/rng.hpp"

namespace msce {

// Dense rank-3 array [batch, channels, time], row-major. The scalar type is
// float for training/inference and double for gradient checking.
template <class T>
struct Tensor {
    int batch = 0;
    int channels = 0;
    int length = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int b, int c, int t) : batch(b), channels(c), length(t) {
        if (b < 1 || c < 1 || t < 1) fail_invalid("tensor dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(b) * c * t, T(0));
    }

    std::size_t numel() const { return data.size(); }

    T* row(int b, int c) { return data.data() + (static_cast<std::size_t>(b) * channels + c) * length; }
    const T* row(int b, int c) const {
        return data.data() + (static_cast<std::size_t>(b) * channels + c) * length;
    }

    T& at(int b, int c, int t) { return row(b, c)[t]; }
    T at(int b, int c, int t) const { return row(b, c)[t]; }

    bool same_shape(const Tensor& o) const {
        return batch == o.batch && channels == o.channels && length == o.length;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    static Tensor random_uniform(int b, int c, int t, Rng& rng, double lo = -1.0, double hi = 1.0) {
        Tensor out(b, c, t);
        for (auto& v : out.data) v = static_cast<T>(rng.uniform(lo, hi));
        return out;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(batch, channels, length);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

// Learnable value with a gradient buffer of identical shape.
template <class T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;
    std::string name;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : value(std::move(v)), name(std::move(n)) {
        grad = Tensor<T>(value.batch, value.channels, value.length);
    }

    void zero_grad() { grad.fill(T(0)); }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace msce
