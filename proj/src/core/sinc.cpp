#include "core/sinc.hpp"

#include <cmath>

namespace msce {

namespace {

double mel_from_hz(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double hz_from_mel(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double norm_sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

}  // namespace

template <class T>
SincBank<T> make_mel_sinc_bank(int filters, int kernel_length, int sample_rate) {
    if (filters < 1) fail_invalid("sinc bank needs at least one filter");
    if (kernel_length % 2 == 0) fail_invalid("sinc kernel length must be odd");

    SincBank<T> bank;
    bank.kernel_length = kernel_length;
    bank.low_cut = Parameter<T>("sinc.low_cut", Tensor<T>(1, 1, filters));
    bank.band_width = Parameter<T>("sinc.band_width", Tensor<T>(1, 1, filters));

    const double mel_lo = mel_from_hz(30.0);
    const double mel_hi = mel_from_hz(sample_rate / 2.0);
    for (int f = 0; f < filters; ++f) {
        const double m0 = mel_lo + (mel_hi - mel_lo) * f / filters;
        const double m1 = mel_lo + (mel_hi - mel_lo) * (f + 1) / filters;
        const double hz0 = hz_from_mel(m0);
        const double hz1 = hz_from_mel(m1);
        bank.low_cut.value.data[f] = static_cast<T>(hz0 / sample_rate);
        bank.band_width.value.data[f] = static_cast<T>((hz1 - hz0) / sample_rate);
    }

    bank.window.resize(kernel_length);
    for (int i = 0; i < kernel_length; ++i)
        bank.window[i] = static_cast<T>(0.54 - 0.46 * std::cos(2.0 * M_PI * i / (kernel_length - 1)));
    return bank;
}

template <class T>
Tensor<T> sinc_kernels(const SincBank<T>& bank) {
    const int filters = bank.filters();
    const int klen = bank.kernel_length;
    const int half = (klen - 1) / 2;
    Tensor<T> kernels(filters, 1, klen);

    for (int f = 0; f < filters; ++f) {
        const double f1 = std::clamp(static_cast<double>(bank.low_cut.value.data[f]), 0.0, 0.5);
        const double f2 = std::min(f1 + std::abs(static_cast<double>(bank.band_width.value.data[f])), 0.5);
        T* kr = kernels.row(f, 0);
        for (int i = 0; i < klen; ++i) {
            const double n = i - half;
            const double hi = 2.0 * f2 * norm_sinc(2.0 * M_PI * f2 * n);
            const double lo = 2.0 * f1 * norm_sinc(2.0 * M_PI * f1 * n);
            kr[i] = static_cast<T>((hi - lo) * static_cast<double>(bank.window[i]));
        }
    }
    return kernels;
}

template <class T>
void sinc_kernels_backward(SincBank<T>& bank, const Tensor<T>& dkernels) {
    const int filters = bank.filters();
    const int klen = bank.kernel_length;
    const int half = (klen - 1) / 2;
    if (dkernels.batch != filters || dkernels.channels != 1 || dkernels.length != klen)
        fail_invalid("sinc backward: kernel gradient shape mismatch");

    for (int f = 0; f < filters; ++f) {
        const double f1_raw = static_cast<double>(bank.low_cut.value.data[f]);
        const double df_raw = static_cast<double>(bank.band_width.value.data[f]);
        const double f1 = std::clamp(f1_raw, 0.0, 0.5);
        const double f2 = std::min(f1 + std::abs(df_raw), 0.5);
        const bool f1_interior = f1_raw > 0.0 && f1_raw < 0.5;
        const bool f2_interior = f1 + std::abs(df_raw) < 0.5;
        const double dsign = df_raw >= 0.0 ? 1.0 : -1.0;

        // d/df of 2*f*sinc(2*pi*f*n) is 2*cos(2*pi*f*n), uniformly in n.
        double g1 = 0.0, g2 = 0.0;
        const T* dkr = dkernels.row(f, 0);
        for (int i = 0; i < klen; ++i) {
            const double n = i - half;
            const double wd = static_cast<double>(bank.window[i]) * static_cast<double>(dkr[i]);
            g2 += wd * 2.0 * std::cos(2.0 * M_PI * f2 * n);
            g1 += wd * -2.0 * std::cos(2.0 * M_PI * f1 * n);
        }

        double grad_f1 = 0.0, grad_df = 0.0;
        if (f1_interior) {
            grad_f1 += g1;
            if (f2_interior) grad_f1 += g2;  // f2 = f1 + |df| moves with f1
        }
        if (f2_interior) grad_df += g2 * dsign;

        bank.low_cut.grad.data[f] = static_cast<T>(static_cast<double>(bank.low_cut.grad.data[f]) + grad_f1);
        bank.band_width.grad.data[f] =
            static_cast<T>(static_cast<double>(bank.band_width.grad.data[f]) + grad_df);
    }
}

template SincBank<float> make_mel_sinc_bank(int, int, int);
template SincBank<double> make_mel_sinc_bank(int, int, int);
template Tensor<float> sinc_kernels(const SincBank<float>&);
template Tensor<double> sinc_kernels(const SincBank<double>&);
template void sinc_kernels_backward(SincBank<float>&, const Tensor<float>&);
template void sinc_kernels_backward(SincBank<double>&, const Tensor<double>&);

}  // namespace msce
