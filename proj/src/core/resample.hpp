#pragma once

#include <vector>

namespace msce {

// Rational polyphase resampler matching the classic Octave design: a Kaiser-
// windowed ideal low-pass at 1/(2*max(p,q)) of the upsampled rate, 60 dB
// stopband rejection, length 2L+1 with L = ceil((60-8)/(28.714*rolloff)) and
// rolloff = cutoff/10; the filter is normalized to unit DC gain and scaled by
// p. Output length is ceil(n*p/q); output j = sum_i x[i]*h[j*q - i*p + L].
std::vector<double> design_resample_filter(int p, int q);
std::vector<double> resample_poly(const std::vector<double>& x, int p, int q);

// Zeroth-order modified Bessel function, for the Kaiser window.
double bessel_i0(double x);

}  // namespace msce
