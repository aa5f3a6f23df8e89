#include "core/wav.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "core/bytes.hpp"

namespace msce {

void Audio::check_consistent() const {
    if (sample_rate < 1) fail_invalid("audio sample rate must be positive");
    if (channels.empty()) fail_invalid("audio must have at least one channel");
    for (const auto& ch : channels)
        if (static_cast<long long>(ch.size()) != length())
            fail_invalid("audio channels must have equal length");
    if (length() == 0) fail_invalid("audio must be non-empty");
}

std::string read_file(const std::string& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!f) fail_data("cannot open file: " + path);
    std::string out;
    char buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f.get())) > 0) out.append(buf, n);
    if (std::ferror(f.get())) fail_data("read error: " + path);
    return out;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!f) fail_data("cannot open file for writing: " + path);
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        fail_data("write error: " + path);
}

Audio parse_wav(const std::string& bytes, WavFormat* format_out) {
    ByteReader r(bytes.data(), bytes.size());
    if (!r.has(12)) fail_data("wav: file too short for RIFF header");
    if (std::memcmp(r.bytes(4), "RIFF", 4) != 0) fail_data("wav: missing RIFF magic");
    r.u32le();
    if (std::memcmp(r.bytes(4), "WAVE", 4) != 0) fail_data("wav: missing WAVE tag");

    bool have_fmt = false;
    std::uint16_t format = 0, num_channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::uint32_t data_len = 0;

    while (r.has(8)) {
        char id[4];
        std::memcpy(id, r.bytes(4), 4);
        std::uint32_t chunk_len = r.u32le();
        if (!r.has(chunk_len)) fail_data("wav: truncated chunk");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_len < 16) fail_data("wav: fmt chunk too short");
            ByteReader fr(r.bytes(chunk_len), chunk_len);
            format = fr.u16le();
            num_channels = fr.u16le();
            rate = fr.u32le();
            fr.u32le();
            fr.u16le();
            bits = fr.u16le();
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = r.bytes(chunk_len);
            data_len = chunk_len;
        } else {
            r.skip(chunk_len);
        }
        if (chunk_len % 2 == 1 && r.has(1)) r.skip(1);
    }

    if (!have_fmt) fail_data("wav: missing fmt chunk");
    if (data == nullptr) fail_data("wav: missing data chunk");
    if (num_channels < 1) fail_data("wav: zero channels");
    if (rate < 1) fail_data("wav: zero sample rate");

    int width;
    if (format == 1 && bits == 16) width = 2;
    else if (format == 3 && bits == 32) width = 4;
    else fail_data("wav: unsupported codec (format " + std::to_string(format) + ", " +
                   std::to_string(bits) + " bits); need PCM-16 or float-32");
    if (format_out) *format_out = width == 2 ? WavFormat::pcm16 : WavFormat::float32;

    const std::uint32_t frame_size = static_cast<std::uint32_t>(width) * num_channels;
    if (data_len == 0 || data_len < frame_size) fail_data("wav: empty data chunk");
    const std::uint32_t frames = data_len / frame_size;

    Audio audio;
    audio.sample_rate = static_cast<int>(rate);
    audio.channels.assign(num_channels, std::vector<float>(frames));
    ByteReader dr(data, static_cast<std::size_t>(frames) * frame_size);
    for (std::uint32_t t = 0; t < frames; ++t) {
        for (int c = 0; c < num_channels; ++c) {
            if (width == 2)
                audio.channels[c][t] = static_cast<float>(dr.i16le()) / 32768.0f;
            else
                audio.channels[c][t] = dr.f32le();
        }
    }
    return audio;
}

Audio read_wav(const std::string& path, WavFormat* format_out) {
    return parse_wav(read_file(path), format_out);
}

int wav_sample_width(WavFormat fmt) { return fmt == WavFormat::pcm16 ? 2 : 4; }

std::string serialize_wav(const Audio& audio, WavFormat fmt) {
    audio.check_consistent();
    const int width = wav_sample_width(fmt);
    const int nch = audio.num_channels();
    const long long frames = audio.length();
    const std::uint32_t data_len = static_cast<std::uint32_t>(frames * nch * width);

    std::string out;
    out.reserve(44 + data_len);
    out.append("RIFF");
    put_u32le(out, 36 + data_len);
    out.append("WAVE");
    out.append("fmt ");
    put_u32le(out, 16);
    put_u16le(out, fmt == WavFormat::pcm16 ? 1 : 3);
    put_u16le(out, static_cast<std::uint16_t>(nch));
    put_u32le(out, static_cast<std::uint32_t>(audio.sample_rate));
    put_u32le(out, static_cast<std::uint32_t>(audio.sample_rate) * nch * width);
    put_u16le(out, static_cast<std::uint16_t>(nch * width));
    put_u16le(out, static_cast<std::uint16_t>(width * 8));
    out.append("data");
    put_u32le(out, data_len);
    for (long long t = 0; t < frames; ++t) {
        for (int c = 0; c < nch; ++c) {
            float v = audio.channels[c][t];
            if (fmt == WavFormat::pcm16) {
                long s = std::lround(static_cast<double>(v) * 32768.0);
                if (s > 32767) s = 32767;
                if (s < -32768) s = -32768;
                put_i16le(out, static_cast<std::int16_t>(s));
            } else {
                put_f32le(out, v);
            }
        }
    }
    return out;
}

void write_wav(const Audio& audio, const std::string& path, WavFormat fmt) {
    write_file(path, serialize_wav(audio, fmt));
}

Tensor<float> tensor_from_audio(const Audio& audio) {
    audio.check_consistent();
    Tensor<float> x(1, audio.num_channels(), static_cast<int>(audio.length()));
    for (int c = 0; c < x.channels; ++c)
        std::copy(audio.channels[c].begin(), audio.channels[c].end(), x.row(0, c));
    return x;
}

Audio audio_from_tensor(const Tensor<float>& x, int sample_rate) {
    if (x.batch != 1) fail_invalid("audio_from_tensor expects batch 1");
    Audio audio;
    audio.sample_rate = sample_rate;
    audio.channels.assign(x.channels, std::vector<float>(x.length));
    for (int c = 0; c < x.channels; ++c)
        std::copy(x.row(0, c), x.row(0, c) + x.length, audio.channels[c].begin());
    return audio;
}

}  // namespace msce
