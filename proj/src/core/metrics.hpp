#pragma once

#include <vector>

namespace msce {

// Scale-invariant SDR: project the estimate onto the reference
// (alpha = <e,r>/<r,r>) and compare projected energy to the residual, in dB,
// capped at +-100 so identical signals stay finite.
double si_sdr(const float* reference, const float* estimate, long long n);

// Segmental SNR: per-frame SNR clamped to [-10, 35] dB, averaged over frames
// whose reference energy is within 40 dB of the loudest frame.
double seg_snr(const float* reference, const float* estimate, long long n, int frame = 256,
               int hop = 128);

}  // namespace msce
