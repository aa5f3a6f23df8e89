#pragma once

#include <complex>
#include <vector>

namespace msce {

// In-place radix-2 complex FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& x);

// Real-input FFT returning bins 0..n/2 (inclusive). x is zero-padded or
// truncated to fft_size, which must be a power of two.
std::vector<std::complex<double>> rfft(const double* x, std::size_t n, std::size_t fft_size);

}  // namespace msce
