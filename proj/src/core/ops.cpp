#include "core/ops.hpp"

#include <algorithm>
#include <cmath>

namespace msce {

namespace {

// acc[i] += s * x[i], double accumulation over float or double inputs.
template <class T>
inline void axpy_acc(double* acc, const T* x, double s, int n) {
    for (int i = 0; i < n; ++i) acc[i] += s * static_cast<double>(x[i]);
}

// Dot product with four interleaved accumulators; deterministic and easy for
// the compiler to vectorize.
template <class T>
inline double dot4(const T* a, const T* b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        s1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
        s2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
        s3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

template <class T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    if (w.length % 2 == 0) fail_invalid("conv1d kernel length must be odd");
    if (w.channels != x.channels) fail_invalid("conv1d weight input channels do not match input");
    if (static_cast<int>(bias.numel()) != w.batch) fail_invalid("conv1d bias size does not match output channels");
}

}  // namespace

template <class T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                         ConvPath path) {
    check_conv_shapes(x, w, bias);
    const int kb = x.batch, cin = x.channels, t_len = x.length;
    const int cout = w.batch, klen = w.length, pad = (klen - 1) / 2;
    Tensor<T> y(kb, cout, t_len);

    if (path == ConvPath::reference) {
        for (int b = 0; b < kb; ++b) {
            for (int co = 0; co < cout; ++co) {
                for (int t = 0; t < t_len; ++t) {
                    double acc = static_cast<double>(bias.data[co]);
                    for (int ci = 0; ci < cin; ++ci) {
                        const T* xr = x.row(b, ci);
                        const T* wr = w.row(co, ci);
                        for (int k = 0; k < klen; ++k) {
                            const int src = t + k - pad;
                            if (src >= 0 && src < t_len) acc += static_cast<double>(wr[k]) * static_cast<double>(xr[src]);
                        }
                    }
                    y.row(b, co)[t] = static_cast<T>(acc);
                }
            }
        }
        return y;
    }

    std::vector<double> acc(static_cast<std::size_t>(t_len));
    for (int b = 0; b < kb; ++b) {
        for (int co = 0; co < cout; ++co) {
            std::fill(acc.begin(), acc.end(), static_cast<double>(bias.data[co]));
            for (int ci = 0; ci < cin; ++ci) {
                const T* xr = x.row(b, ci);
                const T* wr = w.row(co, ci);
                for (int k = 0; k < klen; ++k) {
                    const int off = k - pad;
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(t_len, t_len - off);
                    if (t1 > t0) axpy_acc(acc.data() + t0, xr + t0 + off, static_cast<double>(wr[k]), t1 - t0);
                }
            }
            T* yr = y.row(b, co);
            for (int t = 0; t < t_len; ++t) yr[t] = static_cast<T>(acc[t]);
        }
    }
    return y;
}

template <class T>
Tensor<T> conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                          Tensor<T>* dw_acc, Tensor<T>* db_acc, ConvPath path) {
    const int kb = x.batch, cin = x.channels, t_len = x.length;
    const int cout = w.batch, klen = w.length, pad = (klen - 1) / 2;
    if (dy.batch != kb || dy.channels != cout || dy.length != t_len)
        fail_invalid("conv1d backward: upstream gradient shape does not match forward output");
    if (dw_acc && !dw_acc->same_shape(w)) fail_invalid("conv1d backward: dw shape mismatch");
    if (db_acc && static_cast<int>(db_acc->numel()) != cout) fail_invalid("conv1d backward: db shape mismatch");

    Tensor<T> dx(kb, cin, t_len);

    if (db_acc) {
        for (int co = 0; co < cout; ++co) {
            double s = 0.0;
            for (int b = 0; b < kb; ++b) {
                const T* dyr = dy.row(b, co);
                for (int t = 0; t < t_len; ++t) s += static_cast<double>(dyr[t]);
            }
            db_acc->data[co] = static_cast<T>(static_cast<double>(db_acc->data[co]) + s);
        }
    }

    if (dw_acc) {
        for (int co = 0; co < cout; ++co) {
            for (int ci = 0; ci < cin; ++ci) {
                T* dwr = dw_acc->row(co, ci);
                for (int k = 0; k < klen; ++k) {
                    const int off = k - pad;
                    double s = 0.0;
                    for (int b = 0; b < kb; ++b) {
                        const T* dyr = dy.row(b, co);
                        const T* xr = x.row(b, ci);
                        const int t0 = std::max(0, -off);
                        const int t1 = std::min(t_len, t_len - off);
                        if (path == ConvPath::reference) {
                            for (int t = t0; t < t1; ++t)
                                s += static_cast<double>(dyr[t]) * static_cast<double>(xr[t + off]);
                        } else if (t1 > t0) {
                            s += dot4(dyr + t0, xr + t0 + off, t1 - t0);
                        }
                    }
                    dwr[k] = static_cast<T>(static_cast<double>(dwr[k]) + s);
                }
            }
        }
    }

    // dx[ci][t] = sum_{co,k} w[co][ci][k] * dy[co][t + pad - k]
    std::vector<double> acc(static_cast<std::size_t>(t_len));
    for (int b = 0; b < kb; ++b) {
        for (int ci = 0; ci < cin; ++ci) {
            if (path == ConvPath::reference) {
                for (int t = 0; t < t_len; ++t) {
                    double s = 0.0;
                    for (int co = 0; co < cout; ++co) {
                        const T* dyr = dy.row(b, co);
                        const T* wr = w.row(co, ci);
                        for (int k = 0; k < klen; ++k) {
                            const int src = t + pad - k;
                            if (src >= 0 && src < t_len) s += static_cast<double>(wr[k]) * static_cast<double>(dyr[src]);
                        }
                    }
                    dx.row(b, ci)[t] = static_cast<T>(s);
                }
                continue;
            }
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int co = 0; co < cout; ++co) {
                const T* dyr = dy.row(b, co);
                const T* wr = w.row(co, ci);
                for (int k = 0; k < klen; ++k) {
                    const int off = pad - k;
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(t_len, t_len - off);
                    if (t1 > t0) axpy_acc(acc.data() + t0, dyr + t0 + off, static_cast<double>(wr[k]), t1 - t0);
                }
            }
            T* dxr = dx.row(b, ci);
            for (int t = 0; t < t_len; ++t) dxr[t] = static_cast<T>(acc[t]);
        }
    }
    return dx;
}

template <class T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            BatchNormState<T>& state, bool train, double eps, double momentum,
                            BatchNormCache<T>* cache) {
    const int kb = x.batch, ch = x.channels, t_len = x.length;
    if (static_cast<int>(gamma.numel()) != ch || static_cast<int>(beta.numel()) != ch)
        fail_invalid("batchnorm: affine parameter size does not match channel count");
    if (static_cast<int>(state.running_mean.size()) != ch || static_cast<int>(state.running_var.size()) != ch)
        fail_invalid("batchnorm: running stats size does not match channel count");

    const long long n = static_cast<long long>(kb) * t_len;
    Tensor<T> y(kb, ch, t_len);

    if (train) {
        if (n < 2) fail_invalid("batchnorm train mode needs at least 2 samples per channel");
        if (cache) {
            cache->xhat = Tensor<T>(kb, ch, t_len);
            cache->inv_std.assign(ch, T(0));
            cache->train_mode = true;
            cache->valid = true;
        }
        for (int c = 0; c < ch; ++c) {
            double sum = 0.0;
            for (int b = 0; b < kb; ++b) {
                const T* xr = x.row(b, c);
                for (int t = 0; t < t_len; ++t) sum += static_cast<double>(xr[t]);
            }
            const double mean = sum / static_cast<double>(n);
            double sq = 0.0;
            for (int b = 0; b < kb; ++b) {
                const T* xr = x.row(b, c);
                for (int t = 0; t < t_len; ++t) {
                    const double d = static_cast<double>(xr[t]) - mean;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(n);
            const double inv_std = 1.0 / std::sqrt(var + eps);
            const double g = static_cast<double>(gamma.data[c]);
            const double be = static_cast<double>(beta.data[c]);
            for (int b = 0; b < kb; ++b) {
                const T* xr = x.row(b, c);
                T* yr = y.row(b, c);
                T* hr = cache ? cache->xhat.row(b, c) : nullptr;
                for (int t = 0; t < t_len; ++t) {
                    const double xh = (static_cast<double>(xr[t]) - mean) * inv_std;
                    if (hr) hr[t] = static_cast<T>(xh);
                    yr[t] = static_cast<T>(g * xh + be);
                }
            }
            if (cache) cache->inv_std[c] = static_cast<T>(inv_std);
            state.running_mean[c] =
                static_cast<T>((1.0 - momentum) * static_cast<double>(state.running_mean[c]) + momentum * mean);
            state.running_var[c] =
                static_cast<T>((1.0 - momentum) * static_cast<double>(state.running_var[c]) + momentum * var);
        }
        state.tracked[0] += T(1);
        return y;
    }

    if (!state.has_stats())
        fail_invalid("batchnorm inference requested before any statistics exist");
    if (cache) {
        cache->xhat = Tensor<T>(kb, ch, t_len);
        cache->inv_std.assign(ch, T(0));
        cache->train_mode = false;
        cache->valid = true;
    }
    for (int c = 0; c < ch; ++c) {
        const double mean = static_cast<double>(state.running_mean[c]);
        const double inv_std = 1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + eps);
        const double g = static_cast<double>(gamma.data[c]);
        const double be = static_cast<double>(beta.data[c]);
        for (int b = 0; b < kb; ++b) {
            const T* xr = x.row(b, c);
            T* yr = y.row(b, c);
            T* hr = cache ? cache->xhat.row(b, c) : nullptr;
            for (int t = 0; t < t_len; ++t) {
                const double xh = (static_cast<double>(xr[t]) - mean) * inv_std;
                if (hr) hr[t] = static_cast<T>(xh);
                yr[t] = static_cast<T>(g * xh + be);
            }
        }
        if (cache) cache->inv_std[c] = static_cast<T>(inv_std);
    }
    return y;
}

template <class T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                             const BatchNormCache<T>& cache, Tensor<T>* dgamma_acc,
                             Tensor<T>* dbeta_acc) {
    if (!cache.valid) fail_invalid("batchnorm backward without a preceding forward");
    if (!dy.same_shape(cache.xhat)) fail_invalid("batchnorm backward: gradient shape mismatch");
    const int kb = dy.batch, ch = dy.channels, t_len = dy.length;
    const double n = static_cast<double>(kb) * t_len;
    Tensor<T> dx(kb, ch, t_len);

    for (int c = 0; c < ch; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int b = 0; b < kb; ++b) {
            const T* dyr = dy.row(b, c);
            const T* hr = cache.xhat.row(b, c);
            for (int t = 0; t < t_len; ++t) {
                sum_dy += static_cast<double>(dyr[t]);
                sum_dy_xhat += static_cast<double>(dyr[t]) * static_cast<double>(hr[t]);
            }
        }
        if (dgamma_acc)
            dgamma_acc->data[c] = static_cast<T>(static_cast<double>(dgamma_acc->data[c]) + sum_dy_xhat);
        if (dbeta_acc)
            dbeta_acc->data[c] = static_cast<T>(static_cast<double>(dbeta_acc->data[c]) + sum_dy);

        const double g = static_cast<double>(gamma.data[c]);
        const double inv_std = static_cast<double>(cache.inv_std[c]);
        for (int b = 0; b < kb; ++b) {
            const T* dyr = dy.row(b, c);
            const T* hr = cache.xhat.row(b, c);
            T* dxr = dx.row(b, c);
            if (cache.train_mode) {
                for (int t = 0; t < t_len; ++t) {
                    const double dxhat = static_cast<double>(dyr[t]) * g;
                    const double v = (n * dxhat - g * sum_dy - static_cast<double>(hr[t]) * g * sum_dy_xhat) *
                                     inv_std / n;
                    dxr[t] = static_cast<T>(v);
                }
            } else {
                for (int t = 0; t < t_len; ++t)
                    dxr[t] = static_cast<T>(static_cast<double>(dyr[t]) * g * inv_std);
            }
        }
    }
    return dx;
}

template <class T>
Tensor<T> leaky_relu_forward(const Tensor<T>& x, T alpha) {
    if (!(alpha > T(0) && alpha < T(1))) fail_invalid("leaky_relu slope must be in (0, 1)");
    Tensor<T> y(x.batch, x.channels, x.length);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T v = x.data[i];
        y.data[i] = v >= T(0) ? v : alpha * v;
    }
    return y;
}

template <class T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x_saved, const Tensor<T>& dy, T alpha) {
    if (!dy.same_shape(x_saved)) fail_invalid("leaky_relu backward: shape mismatch");
    Tensor<T> dx(dy.batch, dy.channels, dy.length);
    for (std::size_t i = 0; i < dy.data.size(); ++i)
        dx.data[i] = x_saved.data[i] >= T(0) ? dy.data[i] : alpha * dy.data[i];
    return dx;
}

template <class T>
Tensor<T> tanh_forward(const Tensor<T>& x) {
    Tensor<T> y(x.batch, x.channels, x.length);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = std::tanh(x.data[i]);
    return y;
}

template <class T>
Tensor<T> tanh_backward(const Tensor<T>& y_saved, const Tensor<T>& dy) {
    if (!dy.same_shape(y_saved)) fail_invalid("tanh backward: shape mismatch");
    Tensor<T> dx(dy.batch, dy.channels, dy.length);
    for (std::size_t i = 0; i < dy.data.size(); ++i) {
        const T y = y_saved.data[i];
        dx.data[i] = dy.data[i] * (T(1) - y * y);
    }
    return dx;
}

template Tensor<float> conv1d_forward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, ConvPath);
template Tensor<double> conv1d_forward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, ConvPath);
template Tensor<float> conv1d_backward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, Tensor<float>*, Tensor<float>*, ConvPath);
template Tensor<double> conv1d_backward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, Tensor<double>*, Tensor<double>*, ConvPath);
template Tensor<float> batchnorm_forward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, BatchNormState<float>&, bool, double, double, BatchNormCache<float>*);
template Tensor<double> batchnorm_forward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, BatchNormState<double>&, bool, double, double, BatchNormCache<double>*);
template Tensor<float> batchnorm_backward(const Tensor<float>&, const Tensor<float>&, const BatchNormCache<float>&, Tensor<float>*, Tensor<float>*);
template Tensor<double> batchnorm_backward(const Tensor<double>&, const Tensor<double>&, const BatchNormCache<double>&, Tensor<double>*, Tensor<double>*);
template Tensor<float> leaky_relu_forward(const Tensor<float>&, float);
template Tensor<double> leaky_relu_forward(const Tensor<double>&, double);
template Tensor<float> leaky_relu_backward(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> leaky_relu_backward(const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> tanh_forward(const Tensor<float>&);
template Tensor<double> tanh_forward(const Tensor<double>&);
template Tensor<float> tanh_backward(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> tanh_backward(const Tensor<double>&, const Tensor<double>&);

}  // namespace msce
