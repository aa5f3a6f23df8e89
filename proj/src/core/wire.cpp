#include "core/wire.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "core/bytes.hpp"
#include "core/crc32.hpp"

namespace msce {

using nlohmann::json;

std::string StreamHeader::serialize() const {
    std::string out;
    out.append(kStreamMagic, 4);
    put_u8(out, version);
    put_u8(out, flags);
    put_u32le(out, sample_rate);
    put_u8(out, input_channels);
    put_u8(out, latent_channels);
    put_u32le(out, chunk_len);
    put_u32le(out, context_pad);
    put_u32le(out, model_crc);
    return out;
}

StreamHeader StreamHeader::parse(const void* bytes, std::size_t size) {
    if (size < kStreamHeaderSize) fail_protocol("stream header: too few bytes");
    ByteReader r(bytes, size);
    if (std::memcmp(r.bytes(4), kStreamMagic, 4) != 0) fail_protocol("stream header: bad magic");
    StreamHeader h;
    h.version = r.u8();
    if (h.version != kStreamVersion)
        fail_protocol("stream header: unsupported version " + std::to_string(h.version));
    h.flags = r.u8();
    h.sample_rate = r.u32le();
    h.input_channels = r.u8();
    h.latent_channels = r.u8();
    h.chunk_len = r.u32le();
    h.context_pad = r.u32le();
    h.model_crc = r.u32le();
    if (h.chunk_len == 0) fail_protocol("stream header: zero chunk length");
    if (h.input_channels == 0 || h.latent_channels == 0)
        fail_protocol("stream header: zero channel count");
    return h;
}

std::vector<std::int16_t> quantize_payload(const std::vector<float>& payload, float* scale) {
    float peak = 0.0f;
    for (float v : payload) peak = std::max(peak, std::abs(v));
    const float s = peak == 0.0f ? 1.0f : peak / 32767.0f;
    std::vector<std::int16_t> out(payload.size());
    for (std::size_t i = 0; i < payload.size(); ++i) {
        long q = std::lround(payload[i] / s);
        q = std::clamp(q, -32767L, 32767L);
        out[i] = static_cast<std::int16_t>(q);
    }
    *scale = s;
    return out;
}

std::string LatentFrame::serialize(bool quantized) const {
    std::string out;
    put_u64le(out, index);
    std::string body;
    if (quantized) {
        float s = scale;
        std::vector<std::int16_t> q = quantize_payload(payload, &s);
        put_f32le(body, s);
        for (std::int16_t v : q) put_i16le(body, v);
    } else {
        for (float v : payload) put_f32le(body, v);
    }
    put_u32le(out, static_cast<std::uint32_t>(body.size()));
    out += body;
    put_u32le(out, crc32(out.data(), out.size()));
    return out;
}

json BandwidthStats::to_json() const {
    return json{{"input_bytes", input_bytes},
                {"payload_bytes", payload_bytes},
                {"overhead_bytes", overhead_bytes},
                {"ratio", ratio}};
}

namespace {

// Runs the model half on a window of real samples around [start, start+count)
// and returns exactly that span. Windows never include synthetic margins, so
// the result equals the whole-signal pass bit for bit: the conv stack's own
// zero padding applies at true signal edges only, and interior window edges
// stay outside the span's receptive field.
Tensor<float> run_windowed(Model<float>& model, bool encoder_half,
                           const std::vector<std::vector<float>>& channels, long long total,
                           long long start, int count, int context) {
    const long long win_lo = std::max<long long>(0, start - context);
    const long long win_hi = std::min<long long>(total, start + count + context);
    Tensor<float> window(1, static_cast<int>(channels.size()), static_cast<int>(win_hi - win_lo));
    for (std::size_t c = 0; c < channels.size(); ++c)
        std::copy(channels[c].begin() + win_lo, channels[c].begin() + win_hi, window.row(0, c));
    Tensor<float> full =
        encoder_half ? model.encode(window, false) : model.decode(window, false);
    Tensor<float> out(1, full.channels, count);
    const int offset = static_cast<int>(start - win_lo);
    for (int c = 0; c < full.channels; ++c)
        std::copy(full.row(0, c) + offset, full.row(0, c) + offset + count, out.row(0, c));
    return out;
}

}  // namespace

StreamEncoder::StreamEncoder(std::shared_ptr<Model<float>> model, std::uint32_t model_crc,
                             int chunk_len, bool quantize, int input_sample_width)
    : model_(std::move(model)), chunk_len_(chunk_len), input_sample_width_(input_sample_width) {
    if (!model_) fail_invalid("stream encoder: null model");
    if (chunk_len < 1) fail_invalid("stream encoder: chunk length must be >= 1");
    if (input_sample_width != 2 && input_sample_width != 4)
        fail_invalid("stream encoder: input sample width must be 2 or 4");
    if (!model_->has_running_stats())
        fail_invalid("stream encoder: model has no batchnorm statistics (untrained?)");
    const ModelConfig& cfg = model_->config();
    context_ = cfg.encoder_context();
    header_.flags = quantize ? kFlagQuantized : 0;
    header_.sample_rate = static_cast<std::uint32_t>(cfg.sample_rate);
    header_.input_channels = static_cast<std::uint8_t>(cfg.input_channels);
    header_.latent_channels = static_cast<std::uint8_t>(cfg.bottleneck_channels);
    header_.chunk_len = static_cast<std::uint32_t>(chunk_len);
    header_.context_pad = static_cast<std::uint32_t>(context_);
    header_.model_crc = model_crc;
    buffer_.assign(cfg.input_channels, {});
    out_ = header_.serialize();
    stats_.overhead_bytes += out_.size();
    const int latent_width = quantize ? 2 : 4;
    stats_.ratio = static_cast<double>(cfg.input_channels * input_sample_width) /
                   static_cast<double>(cfg.bottleneck_channels * latent_width);
}

void StreamEncoder::push(const std::vector<const float*>& channels, long long count) {
    if (input_done_) fail_invalid("stream encoder: push after finish");
    if (static_cast<int>(channels.size()) != model_->config().input_channels)
        fail_invalid("stream encoder: channel count mismatch");
    if (count < 0) fail_invalid("stream encoder: negative sample count");
    for (std::size_t c = 0; c < channels.size(); ++c)
        buffer_[c].insert(buffer_[c].end(), channels[c], channels[c] + count);
    stats_.input_bytes += static_cast<std::uint64_t>(count) * channels.size() * input_sample_width_;
    emit_ready_frames();
}

void StreamEncoder::push(const Tensor<float>& x) {
    if (x.batch != 1) fail_invalid("stream encoder: expected batch 1");
    std::vector<const float*> chans(x.channels);
    for (int c = 0; c < x.channels; ++c) chans[c] = x.row(0, c);
    push(chans, x.length);
}

void StreamEncoder::finish() {
    if (finished_) return;
    input_done_ = true;
    emit_ready_frames();
    finished_ = true;
}

void StreamEncoder::emit_ready_frames() {
    const long long total = static_cast<long long>(buffer_[0].size());
    while (true) {
        const long long remaining = total - consumed_;
        if (remaining <= 0) break;
        if (!input_done_ && remaining < chunk_len_ + context_) break;
        const int count = static_cast<int>(std::min<long long>(chunk_len_, remaining));
        emit_frame(consumed_, count);
        consumed_ += count;
    }
}

void StreamEncoder::emit_frame(long long start, int count) {
    const long long total = static_cast<long long>(buffer_[0].size());
    Tensor<float> latent = run_windowed(*model_, true, buffer_, total, start, count, context_);

    LatentFrame frame;
    frame.index = next_index_++;
    frame.payload.reserve(static_cast<std::size_t>(latent.channels) * count);
    for (int c = 0; c < latent.channels; ++c)
        frame.payload.insert(frame.payload.end(), latent.row(0, c), latent.row(0, c) + count);

    const std::string bytes = frame.serialize(header_.quantized());
    const std::uint64_t payload_bytes =
        static_cast<std::uint64_t>(frame.payload.size()) * (header_.quantized() ? 2 : 4);
    stats_.payload_bytes += payload_bytes;
    stats_.overhead_bytes += bytes.size() - payload_bytes;
    out_ += bytes;
}

std::string StreamEncoder::take_bytes() {
    std::string out;
    out.swap(out_);
    return out;
}

StreamDecoder::StreamDecoder(std::shared_ptr<Model<float>> model, std::uint32_t model_crc)
    : model_(std::move(model)), expected_crc_(model_crc) {
    if (!model_) fail_invalid("stream decoder: null model");
    if (!model_->has_running_stats())
        fail_invalid("stream decoder: model has no batchnorm statistics (untrained?)");
    const ModelConfig& cfg = model_->config();
    latent_.assign(cfg.bottleneck_channels, {});
    decoded_channels_.assign(cfg.output_channels(), {});
}

const StreamHeader& StreamDecoder::header() const {
    if (!header_ready_) fail_invalid("stream decoder: header not parsed yet");
    return header_;
}

void StreamDecoder::push(const void* bytes, std::size_t size) {
    if (finished_) fail_invalid("stream decoder: push after finish");
    buffer_.append(static_cast<const char*>(bytes), size);
    process_buffer();
}

void StreamDecoder::process_buffer() {
    if (!header_ready_) {
        if (buffer_.size() < kStreamHeaderSize) return;
        header_ = StreamHeader::parse(buffer_.data(), buffer_.size());
        const ModelConfig& cfg = model_->config();
        if (header_.model_crc != expected_crc_)
            fail_protocol("stream header: model checksum mismatch (got " +
                          std::to_string(header_.model_crc) + ", expected " +
                          std::to_string(expected_crc_) + ")");
        if (header_.input_channels != cfg.input_channels ||
            header_.latent_channels != cfg.bottleneck_channels ||
            header_.sample_rate != static_cast<std::uint32_t>(cfg.sample_rate) ||
            header_.context_pad != static_cast<std::uint32_t>(cfg.encoder_context()))
            fail_protocol("stream header: fields do not match the model configuration");
        buffer_.erase(0, kStreamHeaderSize);
        header_ready_ = true;
        stats_.overhead_bytes += kStreamHeaderSize;
        const int latent_width = header_.quantized() ? 2 : 4;
        stats_.ratio = static_cast<double>(cfg.input_channels * 4) /
                       static_cast<double>(cfg.bottleneck_channels * latent_width);
    }

    const std::size_t full_payload =
        (header_.quantized() ? 4 : 0) +
        static_cast<std::size_t>(header_.latent_channels) * header_.chunk_len *
            (header_.quantized() ? 2 : 4);
    while (buffer_.size() >= 12) {
        ByteReader peek(buffer_.data(), buffer_.size());
        const std::uint64_t index = peek.u64le();
        const std::uint32_t payload_len = peek.u32le();
        if (stream_ended_) fail_protocol("frame after the final short frame");
        if (payload_len > full_payload)
            fail_protocol("frame payload longer than a full chunk");
        const std::size_t frame_size = 12 + payload_len + 4;
        if (buffer_.size() < frame_size) return;
        const std::uint32_t computed = crc32(buffer_.data(), 12 + payload_len);
        ByteReader tail(buffer_.data() + 12 + payload_len, 4);
        if (tail.u32le() != computed) fail_protocol("frame CRC mismatch");
        if (index != next_index_)
            fail_protocol("frame index gap: got " + std::to_string(index) + ", expected " +
                          std::to_string(next_index_));
        ++next_index_;
        consume_payload(reinterpret_cast<const unsigned char*>(buffer_.data()) + 12, payload_len);
        stats_.overhead_bytes += frame_size - payload_len + (header_.quantized() ? 4 : 0);
        buffer_.erase(0, frame_size);
        decode_ready(stream_ended_);
    }
}

void StreamDecoder::consume_payload(const unsigned char* payload, std::size_t payload_len) {
    const int channels = header_.latent_channels;
    std::vector<float> values;
    if (header_.quantized()) {
        if (payload_len < 4 || (payload_len - 4) % 2 != 0)
            fail_protocol("quantized frame payload has invalid length");
        ByteReader r(payload, payload_len);
        const float scale = r.f32le();
        if (!std::isfinite(scale) || scale <= 0.0f)
            fail_protocol("quantized frame has a non-positive scale");
        const std::size_t count = (payload_len - 4) / 2;
        values.resize(count);
        for (auto& v : values) v = scale * static_cast<float>(r.i16le());
        stats_.payload_bytes += count * 2;
    } else {
        if (payload_len % 4 != 0) fail_protocol("frame payload has invalid length");
        ByteReader r(payload, payload_len);
        values.resize(payload_len / 4);
        for (auto& v : values) v = r.f32le();
        stats_.payload_bytes += values.size() * 4;
    }
    if (values.empty() || values.size() % channels != 0)
        fail_protocol("frame payload not divisible across latent channels");
    const std::size_t per_channel = values.size() / channels;
    if (per_channel > header_.chunk_len) fail_protocol("frame covers more than one chunk");
    if (per_channel < header_.chunk_len) stream_ended_ = true;
    for (int c = 0; c < channels; ++c)
        latent_[c].insert(latent_[c].end(), values.begin() + c * per_channel,
                          values.begin() + (c + 1) * per_channel);
}

void StreamDecoder::decode_ready(bool at_end) {
    const long long total = static_cast<long long>(latent_[0].size());
    const int context = model_->config().decoder_context();
    const int chunk = static_cast<int>(header_.chunk_len);
    while (true) {
        const long long remaining = total - decoded_;
        if (remaining <= 0) break;
        if (!at_end && remaining < chunk + context) break;
        const int count = static_cast<int>(std::min<long long>(chunk, remaining));
        Tensor<float> out = run_windowed(*model_, false, latent_, total, decoded_, count, context);
        for (int c = 0; c < out.channels; ++c)
            decoded_channels_[c].insert(decoded_channels_[c].end(), out.row(0, c),
                                        out.row(0, c) + count);
        decoded_ += count;
    }
    stats_.input_bytes = static_cast<std::uint64_t>(decoded_) * decoded_channels_.size() * 4;
}

void StreamDecoder::finish() {
    if (finished_) return;
    // Flush everything decodable before reporting a truncation, so partial
    // output survives a dropped connection.
    if (header_ready_) decode_ready(true);
    finished_ = true;
    if (!header_ready_) fail_protocol("stream ended before a complete header");
    if (!buffer_.empty()) fail_protocol("stream ended mid-frame");
}

Audio StreamDecoder::output_audio() const {
    if (decoded_ == 0) fail_data("stream decoder: no output decoded");
    Audio audio;
    audio.sample_rate = static_cast<int>(header_.sample_rate);
    audio.channels = decoded_channels_;
    return audio;
}

}  // namespace msce
