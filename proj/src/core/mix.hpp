#pragma once

#include <cstdint>

#include "core/rng.hpp"
#include "core/wav.hpp"

namespace msce {

struct MixSpec {
    double snr_db = 0.0;
    std::uint64_t seed = 0;
};

// noisy = clean + alpha * noise_segment per channel, with
// alpha = RMS(clean_ch) / RMS(segment) * 10^(-snr/20), so the post-mix SNR
// measured as 10*log10(sum(clean^2)/sum((alpha*segment)^2)) hits the target
// exactly. Each channel draws an independent start offset from the seed;
// noise shorter than the clean signal wraps around.
Audio mix_at_snr(const Audio& clean, const Audio& noise, const MixSpec& spec);

double rms(const float* x, long long n);

}  // namespace msce
