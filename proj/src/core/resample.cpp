#include "core/resample.hpp"

#include <cmath>
#include <numeric>

#include "core/common.hpp"

namespace msce {

double bessel_i0(double x) {
    const double half = x / 2.0;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 1000; ++k) {
        term *= (half / k) * (half / k);
        sum += term;
        if (term < sum * 1e-18) break;
    }
    return sum;
}

std::vector<double> design_resample_filter(int p, int q) {
    if (p < 1 || q < 1) fail_invalid("resample: factors must be positive");
    const int g = std::gcd(p, q);
    p /= g;
    q /= g;

    const double rejection_db = 60.0;
    const double cutoff = 1.0 / (2.0 * std::max(p, q));
    const double rolloff = cutoff / 10.0;
    const long l_half = static_cast<long>(std::ceil((rejection_db - 8.0) / (28.714 * rolloff)));
    const long taps = 2 * l_half + 1;
    const double beta = 0.1102 * (rejection_db - 8.7);

    std::vector<double> h(taps);
    const double i0_beta = bessel_i0(beta);
    double sum = 0.0;
    for (long i = 0; i < taps; ++i) {
        const double t = static_cast<double>(i - l_half);
        const double x = 2.0 * cutoff * t;
        const double ideal = 2.0 * p * cutoff * (x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x));
        const double r = 2.0 * static_cast<double>(i) / (taps - 1) - 1.0;
        const double kaiser = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
        h[i] = ideal * kaiser;
        sum += h[i];
    }
    for (auto& v : h) v = v / sum * p;
    return h;
}

std::vector<double> resample_poly(const std::vector<double>& x, int p, int q) {
    const int g = std::gcd(p, q);
    p /= g;
    q /= g;
    if (p == 1 && q == 1) return x;

    const std::vector<double> h = design_resample_filter(p, q);
    const long l_half = (static_cast<long>(h.size()) - 1) / 2;
    const long long n = static_cast<long long>(x.size());
    const long long n_out = (n * p + q - 1) / q;

    std::vector<double> y(n_out, 0.0);
    for (long long j = 0; j < n_out; ++j) {
        // h index j*q - i*p + l_half must lie in [0, 2*l_half]
        const long long num_lo = j * q - l_half;
        long long i_lo = num_lo <= 0 ? 0 : (num_lo + p - 1) / p;
        long long i_hi = (j * q + l_half) / p;
        if (i_hi > n - 1) i_hi = n - 1;
        double acc = 0.0;
        for (long long i = i_lo; i <= i_hi; ++i) acc += x[i] * h[j * q - i * p + l_half];
        y[j] = acc;
    }
    return y;
}

}  // namespace msce
