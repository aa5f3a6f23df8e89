#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace msce {

// Parametric band-pass filter bank: each filter is defined by a learnable low
// cutoff f1 and band width df (both normalized to the sample rate) and
// materialized as
//   g[n] = (2*f2*sinc(2*pi*f2*n) - 2*f1*sinc(2*pi*f1*n)) * hamming[n]
// with n centered at 0, f2 = min(clamp(f1) + |df|, 0.5). Cutoffs are clamped
// at materialization time rather than rejected, so optimization stays
// unconstrained. The window is fixed; gradients flow to f1 and df only.
template <class T>
struct SincBank {
    Parameter<T> low_cut;    // [1, 1, F]
    Parameter<T> band_width; // [1, 1, F]
    int kernel_length = 0;
    std::vector<T> window;   // fixed Hamming, length kernel_length

    int filters() const { return static_cast<int>(low_cut.value.numel()); }
};

// F bands with edges equally spaced on the mel scale over [30 Hz, sr/2].
template <class T>
SincBank<T> make_mel_sinc_bank(int filters, int kernel_length, int sample_rate);

// Materializes the bank as conv kernels [F, 1, K].
template <class T>
Tensor<T> sinc_kernels(const SincBank<T>& bank);

// Accumulates kernel-space gradients into the bank's cutoff gradients.
template <class T>
void sinc_kernels_backward(SincBank<T>& bank, const Tensor<T>& dkernels);

}  // namespace msce
