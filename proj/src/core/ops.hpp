#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace msce {

// Convolution here is cross-correlation (no kernel flip), stride 1, zero
// same-padding (K-1)/2 with odd K, so output time length always equals the
// input's. The reference path is the plain nested loop; the optimized path
// restructures the loops for vectorization. Both accumulate every output
// element in double, so they agree far inside 1e-6 relative.
enum class ConvPath { optimized, reference };

// x: [B, Cin, T], w: [Cout, Cin, K], bias: [1, 1, Cout] -> y: [B, Cout, T]
template <class T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                         ConvPath path = ConvPath::optimized);

// Returns dx. dw/db accumulate (+=) into the provided buffers when non-null.
template <class T>
Tensor<T> conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                          Tensor<T>* dw_acc, Tensor<T>* db_acc,
                          ConvPath path = ConvPath::optimized);

// Per-channel running statistics plus a one-element counter so that inference
// before any statistics exist can be rejected. The counter lives in a vector
// so it serializes like any other state buffer.
template <class T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    std::vector<T> tracked{T(0)};

    bool has_stats() const { return tracked[0] > T(0); }
};

template <class T>
struct BatchNormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
    bool train_mode = false;
    bool valid = false;
};

// Train mode normalizes with batch statistics over (B, T) per channel and
// updates running stats as new = (1-momentum)*old + momentum*batch; inference
// mode is a pure per-sample affine map using the running stats.
template <class T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            BatchNormState<T>& state, bool train, double eps, double momentum,
                            BatchNormCache<T>* cache);

template <class T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                             const BatchNormCache<T>& cache, Tensor<T>* dgamma_acc,
                             Tensor<T>* dbeta_acc);

template <class T>
Tensor<T> leaky_relu_forward(const Tensor<T>& x, T alpha);

template <class T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x_saved, const Tensor<T>& dy, T alpha);

template <class T>
Tensor<T> tanh_forward(const Tensor<T>& x);

// y_saved is the forward output; d tanh = 1 - y^2.
template <class T>
Tensor<T> tanh_backward(const Tensor<T>& y_saved, const Tensor<T>& dy);

}  // namespace msce
