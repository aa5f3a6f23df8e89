#include "core/fft.hpp"

#include <cmath>

#include "core/common.hpp"

namespace msce {

void fft_inplace(std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0) fail_invalid("fft size must be a power of two");

    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = x[i + k];
                const std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

std::vector<std::complex<double>> rfft(const double* x, std::size_t n, std::size_t fft_size) {
    std::vector<std::complex<double>> buf(fft_size, {0.0, 0.0});
    const std::size_t m = n < fft_size ? n : fft_size;
    for (std::size_t i = 0; i < m; ++i) buf[i] = {x[i], 0.0};
    fft_inplace(buf);
    buf.resize(fft_size / 2 + 1);
    return buf;
}

}  // namespace msce
