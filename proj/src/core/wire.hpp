#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/model.hpp"
#include "core/wav.hpp"

namespace msce {

// Stream layout, all little-endian:
//   header: "MSCL" | version u8 | flags u8 (bit0: 16-bit payload) |
//           sample_rate u32 | N u8 | C_num u8 | chunk_len u32 |
//           context_pad u32 | model CRC-32 u32
//   frame:  index u64 | payload length u32 | payload | CRC-32 of the frame
//           bytes before the CRC field
// Payloads are float32, or a float32 scale followed by int16 values when
// quantized. The final frame may cover fewer than chunk_len samples; a clean
// stream ends exactly on a frame boundary.
inline constexpr char kStreamMagic[4] = {'M', 'S', 'C', 'L'};
inline constexpr std::uint8_t kStreamVersion = 1;
inline constexpr std::uint8_t kFlagQuantized = 0x01;
inline constexpr std::size_t kStreamHeaderSize = 24;

struct StreamHeader {
    std::uint8_t version = kStreamVersion;
    std::uint8_t flags = 0;
    std::uint32_t sample_rate = 0;
    std::uint8_t input_channels = 0;   // N
    std::uint8_t latent_channels = 0;  // C_num
    std::uint32_t chunk_len = 0;
    std::uint32_t context_pad = 0;
    std::uint32_t model_crc = 0;

    bool quantized() const { return (flags & kFlagQuantized) != 0; }
    std::string serialize() const;
    static StreamHeader parse(const void* bytes, std::size_t size);
};

struct LatentFrame {
    std::uint64_t index = 0;
    std::vector<float> payload;  // latent samples, channel-major per chunk
    float scale = 0.0f;          // quantized mode only

    std::string serialize(bool quantized) const;
};

// Serialize-side quantizer: scale = max|v|/32767 (1 when silent), values
// rounded to int16. Dequantized payloads land within scale/2 of the input.
std::vector<std::int16_t> quantize_payload(const std::vector<float>& payload, float* scale);

struct BandwidthStats {
    std::uint64_t input_bytes = 0;    // PCM bytes consumed (or produced)
    std::uint64_t payload_bytes = 0;  // latent samples only
    std::uint64_t overhead_bytes = 0; // stream header + frame framing + scales
    double ratio = 0.0;               // N*input_width / (C_num*latent_width)

    nlohmann::json to_json() const;
};

// Overlap-save streaming encoder: N-channel samples in, wire bytes out. The
// left/right context equals the encoder receptive-field half-width, so the
// concatenated latent matches the whole-utterance encode bit for bit.
class StreamEncoder {
  public:
    StreamEncoder(std::shared_ptr<Model<float>> model, std::uint32_t model_crc, int chunk_len,
                  bool quantize, int input_sample_width = 4);

    // Planar samples: data[c][i], all channels the same count.
    void push(const std::vector<const float*>& channels, long long count);
    void push(const Tensor<float>& x);  // [1, N, T]
    void finish();

    // Drains pending wire bytes (header first).
    std::string take_bytes();
    bool finished() const { return finished_; }
    const BandwidthStats& stats() const { return stats_; }

  private:
    void emit_ready_frames();
    void emit_frame(long long start, int count);

    std::shared_ptr<Model<float>> model_;
    StreamHeader header_;
    int chunk_len_;
    int context_;
    std::vector<std::vector<float>> buffer_;  // per channel, grows from t=0
    long long consumed_ = 0;                  // samples fully encoded so far
    std::uint64_t next_index_ = 0;
    bool finished_ = false;
    bool input_done_ = false;
    std::string out_;
    BandwidthStats stats_;
    int input_sample_width_;
};

// Streaming decoder: wire bytes in, N-channel samples out. Verifies magic,
// version, model CRC, frame CRCs and index continuity; a short frame marks
// the end of the latent stream, and finish() before a frame boundary is a
// protocol error (everything decoded so far remains readable).
class StreamDecoder {
  public:
    StreamDecoder(std::shared_ptr<Model<float>> model, std::uint32_t model_crc);

    void push(const void* bytes, std::size_t size);
    void finish();

    bool header_ready() const { return header_ready_; }
    const StreamHeader& header() const;
    // Samples decoded so far; grows as frames arrive, flushed by finish().
    long long decoded_length() const { return decoded_; }
    Audio output_audio() const;
    bool finished() const { return finished_; }
    const BandwidthStats& stats() const { return stats_; }

  private:
    void process_buffer();
    void consume_payload(const unsigned char* payload, std::size_t payload_len);
    void decode_ready(bool at_end);

    std::shared_ptr<Model<float>> model_;
    std::uint32_t expected_crc_;
    StreamHeader header_;
    bool header_ready_ = false;
    bool stream_ended_ = false;  // saw a short (final) frame
    bool finished_ = false;
    std::string buffer_;
    std::uint64_t next_index_ = 0;
    std::vector<std::vector<float>> latent_;   // per latent channel
    std::vector<std::vector<float>> decoded_channels_;
    long long decoded_ = 0;  // output samples produced
    BandwidthStats stats_;
};

}  // namespace msce
