#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "core/common.hpp"

namespace msce {

double si_sdr(const float* reference, const float* estimate, long long n) {
    if (n < 1) fail_invalid("si_sdr: empty input");
    double rr = 0.0, er = 0.0;
    for (long long i = 0; i < n; ++i) {
        rr += static_cast<double>(reference[i]) * reference[i];
        er += static_cast<double>(estimate[i]) * reference[i];
    }
    if (rr == 0.0) fail_data("si_sdr: reference is all zero");
    const double alpha = er / rr;
    double target = 0.0, residual = 0.0;
    for (long long i = 0; i < n; ++i) {
        const double t = alpha * reference[i];
        const double d = estimate[i] - t;
        target += t * t;
        residual += d * d;
    }
    if (residual == 0.0) return 100.0;
    if (target == 0.0) return -100.0;
    return std::clamp(10.0 * std::log10(target / residual), -100.0, 100.0);
}

double seg_snr(const float* reference, const float* estimate, long long n, int frame, int hop) {
    if (frame < 1 || hop < 1) fail_invalid("seg_snr: frame and hop must be positive");
    if (n < frame) fail_invalid("seg_snr: input shorter than one frame");

    std::vector<double> energies, snrs;
    for (long long start = 0; start + frame <= n; start += hop) {
        double sig = 0.0, err = 0.0;
        for (int i = 0; i < frame; ++i) {
            const double r = reference[start + i];
            const double d = static_cast<double>(estimate[start + i]) - r;
            sig += r * r;
            err += d * d;
        }
        energies.push_back(sig);
        double snr;
        if (err == 0.0) snr = 35.0;
        else if (sig == 0.0) snr = -10.0;
        else snr = std::clamp(10.0 * std::log10(sig / err), -10.0, 35.0);
        snrs.push_back(snr);
    }

    const double max_energy = *std::max_element(energies.begin(), energies.end());
    if (max_energy == 0.0) fail_data("seg_snr: reference is silent");
    const double floor = max_energy * std::pow(10.0, -40.0 / 10.0);
    double acc = 0.0;
    long long kept = 0;
    for (std::size_t i = 0; i < snrs.size(); ++i) {
        if (energies[i] > floor) {
            acc += snrs[i];
            ++kept;
        }
    }
    if (kept == 0) fail_data("seg_snr: all frames below the silence floor");
    return acc / static_cast<double>(kept);
}

}  // namespace msce
