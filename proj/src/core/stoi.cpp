#include "core/stoi.hpp"

#include <algorithm>
#include <cmath>

#include "core/common.hpp"
#include "core/fft.hpp"
#include "core/resample.hpp"

namespace msce {

namespace {

constexpr int kFs = 10000;
constexpr int kFrame = 256;
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr int kSegFrames = 30;
constexpr double kDynRange = 40.0;
constexpr double kBeta = -15.0;
constexpr double kEps = 2.220446049250313e-16;

// Periodic-symmetric Hann without the zero endpoints: hanning(N+2)[1..N].
std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * (i + 1) / (n + 1));
    return w;
}

// Boolean membership of FFT bins in the 15 one-third-octave bands: band k
// spans [150*2^((2k-1)/6), 150*2^((2k+1)/6)), each edge snapped to the
// nearest bin.
std::vector<std::pair<int, int>> third_octave_bands() {
    std::vector<double> f(kFft / 2 + 1);
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = static_cast<double>(kFs) * static_cast<double>(i) / kFft;
    auto nearest_bin = [&f](double target) {
        int best = 0;
        double best_d = std::abs(f[0] - target);
        for (std::size_t i = 1; i < f.size(); ++i) {
            const double d = std::abs(f[i] - target);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        return best;
    };
    std::vector<std::pair<int, int>> bands(kBands);
    for (int k = 0; k < kBands; ++k) {
        const double lo = kMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0);
        const double hi = kMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0);
        bands[k] = {nearest_bin(lo), nearest_bin(hi)};
    }
    return bands;
}

void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
    const std::vector<double> w = hann_window(kFrame);
    std::vector<long long> starts;
    // Strict bound: a frame ending exactly at the signal end is skipped,
    // like the reference implementation's range(0, len - frame, hop).
    for (long long s = 0; s + kFrame < static_cast<long long>(x.size()); s += kHop)
        starts.push_back(s);
    if (starts.empty()) fail_data("stoi: signal shorter than one frame");

    std::vector<double> energies(starts.size());
    double max_energy = -1e300;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        double acc = 0.0;
        for (int t = 0; t < kFrame; ++t) {
            const double v = w[t] * x[starts[i] + t];
            acc += v * v;
        }
        energies[i] = 20.0 * std::log10(std::sqrt(acc) + kEps);
        max_energy = std::max(max_energy, energies[i]);
    }

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < starts.size(); ++i)
        if (max_energy - kDynRange - energies[i] < 0) keep.push_back(i);
    if (keep.empty()) fail_data("stoi: input is fully silent");

    const std::size_t out_len = (keep.size() - 1) * kHop + kFrame;
    std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const long long src = starts[keep[i]];
        const std::size_t dst = i * kHop;
        for (int t = 0; t < kFrame; ++t) {
            xs[dst + t] += w[t] * x[src + t];
            ys[dst + t] += w[t] * y[src + t];
        }
    }
    x = std::move(xs);
    y = std::move(ys);
}

// Rows: bands, columns: frames; values are band magnitudes
// sqrt(sum |X_bin|^2).
std::vector<std::vector<double>> band_spectrogram(const std::vector<double>& x,
                                                  const std::vector<std::pair<int, int>>& bands) {
    const std::vector<double> w = hann_window(kFrame);
    std::vector<long long> starts;
    for (long long s = 0; s + kFrame < static_cast<long long>(x.size()); s += kHop)
        starts.push_back(s);
    std::vector<std::vector<double>> tob(kBands, std::vector<double>(starts.size()));
    std::vector<double> buf(kFrame);
    for (std::size_t m = 0; m < starts.size(); ++m) {
        for (int t = 0; t < kFrame; ++t) buf[t] = w[t] * x[starts[m] + t];
        const auto spec = rfft(buf.data(), kFrame, kFft);
        for (int k = 0; k < kBands; ++k) {
            double acc = 0.0;
            for (int bin = bands[k].first; bin < bands[k].second; ++bin)
                acc += std::norm(spec[bin]);
            tob[k][m] = std::sqrt(acc);
        }
    }
    return tob;
}

}  // namespace

std::vector<std::pair<int, int>> stoi_band_edges() { return third_octave_bands(); }

double stoi(const std::vector<double>& clean, const std::vector<double>& processed,
            int sample_rate) {
    if (clean.size() != processed.size()) fail_invalid("stoi: length mismatch");
    if (clean.empty()) fail_invalid("stoi: empty input");
    if (sample_rate < 1) fail_invalid("stoi: bad sample rate");

    std::vector<double> x = clean, y = processed;
    if (sample_rate != kFs) {
        x = resample_poly(x, kFs, sample_rate);
        y = resample_poly(y, kFs, sample_rate);
    }
    remove_silent_frames(x, y);

    const auto bands = third_octave_bands();
    const auto x_tob = band_spectrogram(x, bands);
    const auto y_tob = band_spectrogram(y, bands);
    const int n_frames = static_cast<int>(x_tob[0].size());
    if (n_frames < kSegFrames) fail_data("stoi: too few frames after silence removal");

    const double clip = 1.0 + std::pow(10.0, -kBeta / 20.0);
    const int n_segments = n_frames - kSegFrames + 1;
    double total = 0.0;
    std::vector<double> xs(kSegFrames), ys(kSegFrames);
    for (int seg = 0; seg < n_segments; ++seg) {
        for (int j = 0; j < kBands; ++j) {
            double xn = 0.0, yn = 0.0;
            for (int t = 0; t < kSegFrames; ++t) {
                xs[t] = x_tob[j][seg + t];
                ys[t] = y_tob[j][seg + t];
                xn += xs[t] * xs[t];
                yn += ys[t] * ys[t];
            }
            const double scale = std::sqrt(xn) / (std::sqrt(yn) + kEps);
            double xm = 0.0, ym = 0.0;
            for (int t = 0; t < kSegFrames; ++t) {
                ys[t] = std::min(ys[t] * scale, xs[t] * clip);
                xm += xs[t];
                ym += ys[t];
            }
            xm /= kSegFrames;
            ym /= kSegFrames;
            double xd = 0.0, yd = 0.0, cross = 0.0;
            for (int t = 0; t < kSegFrames; ++t) {
                const double a = xs[t] - xm;
                const double b = ys[t] - ym;
                xd += a * a;
                yd += b * b;
                cross += a * b;
            }
            total += cross / ((std::sqrt(xd) + kEps) * (std::sqrt(yd) + kEps));
        }
    }
    return total / (static_cast<double>(kBands) * n_segments);
}

}  // namespace msce
