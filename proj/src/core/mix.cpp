#include "core/mix.hpp"

#include <cmath>

namespace msce {

double rms(const float* x, long long n) {
    double acc = 0.0;
    for (long long i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
    return std::sqrt(acc / static_cast<double>(n));
}

Audio mix_at_snr(const Audio& clean, const Audio& noise, const MixSpec& spec) {
    clean.check_consistent();
    noise.check_consistent();
    if (noise.num_channels() != 1) fail_invalid("mix: noise must be mono");
    if (noise.sample_rate != clean.sample_rate) fail_data("mix: sample rate mismatch");
    if (!std::isfinite(spec.snr_db)) fail_invalid("mix: SNR must be finite");

    const auto& nz = noise.channels[0];
    const long long noise_len = noise.length();
    const long long t_len = clean.length();
    const double snr_gain = std::pow(10.0, -spec.snr_db / 20.0);

    Rng rng(spec.seed);
    Audio out;
    out.sample_rate = clean.sample_rate;
    out.channels.assign(clean.num_channels(), std::vector<float>(t_len));
    for (int c = 0; c < clean.num_channels(); ++c) {
        const auto& ch = clean.channels[c];
        const double clean_rms = rms(ch.data(), t_len);
        if (clean_rms == 0.0) fail_data("mix: clean channel " + std::to_string(c) + " is silent");

        const std::size_t offset = rng.uniform_index(static_cast<std::size_t>(noise_len));
        std::vector<float> seg(t_len);
        for (long long t = 0; t < t_len; ++t)
            seg[t] = nz[(offset + static_cast<std::size_t>(t)) % noise_len];
        const double seg_rms = rms(seg.data(), t_len);
        if (seg_rms == 0.0) fail_data("mix: noise segment is all zero");

        const double alpha = clean_rms / seg_rms * snr_gain;
        for (long long t = 0; t < t_len; ++t)
            out.channels[c][t] = static_cast<float>(ch[t] + alpha * seg[t]);
    }
    return out;
}

}  // namespace msce
