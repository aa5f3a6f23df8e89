#pragma once

#include <utility>
#include <vector>

namespace msce {

// Short-time objective intelligibility (Taal et al. 2011): resample both
// signals to 10 kHz, drop frames more than 40 dB below the loudest clean
// frame, take 256-sample Hann-windowed STFTs zero-padded to 512, group into
// 15 one-third-octave bands starting at 150 Hz, slide 30-frame segments,
// normalize and clip the processed envelope at -15 dB SDR, and average the
// band/segment correlation coefficients. Scores land in [0, 1].
double stoi(const std::vector<double>& clean, const std::vector<double>& processed,
            int sample_rate);

// The 15 one-third-octave [low, high) DFT bin ranges at 10 kHz / 512-point
// analysis, exposed so the frozen reference table stays pinned in tests.
std::vector<std::pair<int, int>> stoi_band_edges();

}  // namespace msce
