#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace msce {

// In-memory audio: planar float channels in [-1, 1], equal lengths. Mono
// signals are the single-channel case.
struct Audio {
    int sample_rate = 0;
    std::vector<std::vector<float>> channels;

    int num_channels() const { return static_cast<int>(channels.size()); }
    long long length() const { return channels.empty() ? 0 : static_cast<long long>(channels[0].size()); }
    void check_consistent() const;
};

enum class WavFormat { pcm16, float32 };

// RIFF/WAVE reader for PCM 16-bit and IEEE float 32-bit. 16-bit samples map
// to [-1, 1) by /32768; float data is taken verbatim, so a float round trip
// is bit-exact.
Audio read_wav(const std::string& path, WavFormat* format_out = nullptr);
Audio parse_wav(const std::string& bytes, WavFormat* format_out = nullptr);

// The float32 sample width written by write_wav(float32), used for bandwidth
// accounting.
int wav_sample_width(WavFormat fmt);

void write_wav(const Audio& audio, const std::string& path, WavFormat fmt = WavFormat::float32);
std::string serialize_wav(const Audio& audio, WavFormat fmt = WavFormat::float32);

// Conversions to the model's [1, N, T] layout and back.
Tensor<float> tensor_from_audio(const Audio& audio);
Audio audio_from_tensor(const Tensor<float>& x, int sample_rate);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace msce
