#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/rng.hpp"
#include "core/wire.hpp"

using namespace msce;

namespace {

std::shared_ptr<Model<float>> make_model(int n_ch = 7, int c_num = 1, int fn = 4, int fl = 5) {
    ModelConfig cfg;
    cfg.variant = Variant::fcn;
    cfg.mode = Mode::mimo;
    cfg.input_channels = n_ch;
    cfg.hidden_filters = fn;
    cfg.filter_length = fl;
    cfg.bottleneck_channels = c_num;
    auto model = std::make_shared<Model<float>>(cfg, 404);
    model->init_running_stats();
    return model;
}

Tensor<float> random_audio(int n_ch, int t_len, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> x(1, n_ch, t_len);
    for (auto& v : x.data) v = static_cast<float>(0.7 * rng.uniform(-1.0, 1.0));
    return x;
}

std::string encode_all(std::shared_ptr<Model<float>> model, const Tensor<float>& x, int chunk,
                       bool quantize, BandwidthStats* stats_out = nullptr) {
    StreamEncoder enc(model, model_crc(*model), chunk, quantize);
    std::string bytes;
    for (long long t = 0; t < x.length; t += chunk) {
        const int count = static_cast<int>(std::min<long long>(chunk, x.length - t));
        Tensor<float> slice(1, x.channels, count);
        for (int c = 0; c < x.channels; ++c)
            std::memcpy(slice.row(0, c), x.row(0, c) + t, sizeof(float) * count);
        enc.push(slice);
        bytes += enc.take_bytes();
    }
    enc.finish();
    bytes += enc.take_bytes();
    if (stats_out) *stats_out = enc.stats();
    return bytes;
}

Audio decode_all(std::shared_ptr<Model<float>> model, const std::string& bytes,
                 std::size_t step = 4096, BandwidthStats* stats_out = nullptr) {
    StreamDecoder dec(model, model_crc(*model));
    for (std::size_t i = 0; i < bytes.size(); i += step)
        dec.push(bytes.data() + i, std::min(step, bytes.size() - i));
    dec.finish();
    if (stats_out) *stats_out = dec.stats();
    return dec.output_audio();
}

}  // namespace

TEST_CASE("stream header round trips") {
    StreamHeader h;
    h.flags = kFlagQuantized;
    h.sample_rate = 16000;
    h.input_channels = 7;
    h.latent_channels = 2;
    h.chunk_len = 4096;
    h.context_pad = 135;
    h.model_crc = 0xDEADBEEF;
    const std::string bytes = h.serialize();
    REQUIRE(bytes.size() == kStreamHeaderSize);
    CHECK(std::memcmp(bytes.data(), kStreamMagic, 4) == 0);
    StreamHeader back = StreamHeader::parse(bytes.data(), bytes.size());
    CHECK(back.version == kStreamVersion);
    CHECK(back.quantized());
    CHECK(back.sample_rate == 16000);
    CHECK(back.input_channels == 7);
    CHECK(back.latent_channels == 2);
    CHECK(back.chunk_len == 4096);
    CHECK(back.context_pad == 135);
    CHECK(back.model_crc == 0xDEADBEEF);
}

TEST_CASE("stream header rejects damage") {
    StreamHeader h;
    h.sample_rate = 16000;
    h.input_channels = 2;
    h.latent_channels = 1;
    h.chunk_len = 1024;
    std::string bytes = h.serialize();
    CHECK_THROWS_AS(StreamHeader::parse(bytes.data(), bytes.size() - 1), Error);
    std::string magic = bytes;
    magic[1] = 'X';
    CHECK_THROWS_AS(StreamHeader::parse(magic.data(), magic.size()), Error);
    std::string version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(StreamHeader::parse(version.data(), version.size()), Error);
}

TEST_CASE("latent frames round trip across sizes and contents") {
    Rng rng(50);
    for (int trial = 0; trial < 1000; ++trial) {
        LatentFrame f;
        f.index = rng.next_u64() % 100000;
        const int n = 1 + static_cast<int>(rng.uniform_index(64));
        f.payload.resize(n);
        for (auto& v : f.payload) v = static_cast<float>(rng.uniform(-3.0, 3.0));
        const std::string bytes = f.serialize(false);
        REQUIRE(bytes.size() == 8 + 4 + 4 * f.payload.size() + 4);
        // parse it back by hand: index, length, payload, crc
        std::uint64_t idx;
        std::uint32_t len;
        std::memcpy(&idx, bytes.data(), 8);
        std::memcpy(&len, bytes.data() + 8, 4);
        CHECK(idx == f.index);
        CHECK(len == 4 * f.payload.size());
        std::vector<float> vals(n);
        std::memcpy(vals.data(), bytes.data() + 12, 4 * n);
        CHECK(vals == f.payload);
    }
}

TEST_CASE("quantized payloads land within half a step") {
    Rng rng(51);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<float> payload(1 + rng.uniform_index(256));
        for (auto& v : payload) v = static_cast<float>(rng.uniform(-2.0, 2.0));
        float scale = 0.0f;
        std::vector<std::int16_t> q = quantize_payload(payload, &scale);
        REQUIRE(q.size() == payload.size());
        CHECK(scale > 0.0f);
        for (std::size_t i = 0; i < q.size(); ++i)
            CHECK(std::abs(q[i] * scale - payload[i]) <= scale * 0.5 + 1e-7);
    }
    // silence quantizes with unit scale
    std::vector<float> silent(8, 0.0f);
    float scale = -1.0f;
    auto q = quantize_payload(silent, &scale);
    CHECK(scale == 1.0f);
    for (auto v : q) CHECK(v == 0);
}

TEST_CASE("streamed encode-decode equals the offline forward pass bit for bit") {
    auto model = make_model(3, 2);
    const int t_len = 3000;
    Tensor<float> x = random_audio(3, t_len, 60);
    Tensor<float> offline = model->forward(x, false);

    for (int chunk : {257, 1024, 4096}) {
        CAPTURE(chunk);
        const std::string bytes = encode_all(model, x, chunk, false);
        Audio out = decode_all(model, bytes);
        REQUIRE(out.num_channels() == 3);
        REQUIRE(out.length() == t_len);
        for (int c = 0; c < 3; ++c)
            for (int t = 0; t < t_len; ++t) CHECK(out.channels[c][t] == offline.at(0, c, t));
    }
}

TEST_CASE("a chunk at least as long as the input produces one frame, still bit-exact") {
    auto model = make_model(2, 1);
    Tensor<float> x = random_audio(2, 1500, 61);
    Tensor<float> offline = model->forward(x, false);
    const std::string bytes = encode_all(model, x, 4000, false);

    // exactly one full-size final frame after the header
    std::uint32_t payload_len;
    std::memcpy(&payload_len, bytes.data() + kStreamHeaderSize + 8, 4);
    CHECK(payload_len == 1500 * 4u);
    CHECK(bytes.size() == kStreamHeaderSize + (8 + 4 + 1500 * 4 + 4));

    Audio out = decode_all(model, bytes, 999);
    REQUIRE(out.length() == 1500);
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t < 1500; ++t) CHECK(out.channels[c][t] == offline.at(0, c, t));
}

TEST_CASE("quantized streaming stays within one quantization step of offline") {
    auto model = make_model(2, 1);
    Tensor<float> x = random_audio(2, 2000, 62);
    Tensor<float> offline = model->forward(x, false);
    const std::string bytes = encode_all(model, x, 512, true);
    Audio out = decode_all(model, bytes);
    REQUIRE(out.length() == 2000);
    // latent quantization error is bounded by scale/2; after the decoder's
    // lipschitz-ish conv stack the output error stays small but nonzero
    double max_err = 0.0;
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t < 2000; ++t)
            max_err = std::max(max_err,
                               std::abs(static_cast<double>(out.channels[c][t]) - offline.at(0, c, t)));
    CHECK(max_err < 1e-2);
    CHECK(max_err > 0.0);  // it is actually lossy
}

TEST_CASE("seven to one compression arithmetic on a 16000-sample float stream") {
    auto model = make_model(7, 1);
    Tensor<float> x = random_audio(7, 16000, 63);
    BandwidthStats enc_stats;
    const std::string bytes = encode_all(model, x, 4096, false, &enc_stats);
    CHECK(enc_stats.input_bytes == 7u * 16000 * 4);   // 448000
    CHECK(enc_stats.payload_bytes == 16000u * 4);     // 64000
    CHECK(enc_stats.ratio == 7.0);
    // latent sample count equals input length / N exactly
    CHECK(enc_stats.payload_bytes / 4 == enc_stats.input_bytes / 4 / 7);

    BandwidthStats dec_stats;
    Audio out = decode_all(model, bytes, 8192, &dec_stats);
    CHECK(out.length() == 16000);
    CHECK(dec_stats.payload_bytes == 64000u);
    CHECK(dec_stats.ratio == 7.0);
}

TEST_CASE("decoder refuses the wrong model before decoding any frame") {
    auto model = make_model(2, 1);
    auto other = make_model(2, 1, 4, 7);  // different architecture, different crc
    Tensor<float> x = random_audio(2, 800, 64);
    const std::string bytes = encode_all(model, x, 256, false);
    StreamDecoder dec(other, model_crc(*other));
    CHECK_THROWS_AS(dec.push(bytes.data(), bytes.size()), Error);
    CHECK(dec.decoded_length() == 0);
    try {
        StreamDecoder dec2(other, model_crc(*other));
        dec2.push(bytes.data(), bytes.size());
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::protocol);
        CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
}

TEST_CASE("frame corruption is a protocol error") {
    auto model = make_model(2, 1);
    Tensor<float> x = random_audio(2, 1200, 65);
    std::string bytes = encode_all(model, x, 300, false);
    bytes[kStreamHeaderSize + 20] ^= 0x01;  // flip a payload bit in frame 0
    StreamDecoder dec(model, model_crc(*model));
    CHECK_THROWS_AS(dec.push(bytes.data(), bytes.size()), Error);
}

TEST_CASE("an out-of-order frame is a protocol error") {
    auto model = make_model(2, 1);
    Tensor<float> x = random_audio(2, 1200, 66);
    const std::string bytes = encode_all(model, x, 300, false);
    // frames: 4 x 300 latent samples; every full frame is 8+4+1200+4 bytes
    const std::size_t frame_size = 8 + 4 + 300 * 4 + 4;
    std::string reordered = bytes.substr(0, kStreamHeaderSize);
    reordered += bytes.substr(kStreamHeaderSize + frame_size, frame_size);  // frame 1 first
    reordered += bytes.substr(kStreamHeaderSize, frame_size);
    StreamDecoder dec(model, model_crc(*model));
    CHECK_THROWS_AS(dec.push(reordered.data(), reordered.size()), Error);
    try {
        StreamDecoder dec2(model, model_crc(*model));
        dec2.push(reordered.data(), reordered.size());
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::protocol);
    }
}

TEST_CASE("data after the final short frame is a protocol error") {
    auto model = make_model(2, 1);
    Tensor<float> x = random_audio(2, 1000, 67);  // 3 x 300 + short 100
    std::string bytes = encode_all(model, x, 300, false);
    LatentFrame extra;
    extra.index = 4;
    extra.payload.assign(300, 0.0f);
    const std::string tail = extra.serialize(false);
    std::string extended = bytes + tail;
    StreamDecoder dec(model, model_crc(*model));
    CHECK_THROWS_AS(dec.push(extended.data(), extended.size()), Error);
}

TEST_CASE("truncation mid-frame keeps earlier output and fails at finish") {
    auto model = make_model(2, 1);
    Tensor<float> x = random_audio(2, 1200, 68);
    const std::string bytes = encode_all(model, x, 300, false);
    const std::size_t frame_size = 8 + 4 + 300 * 4 + 4;
    // keep the header, two full frames, and half of the third
    const std::size_t cut = kStreamHeaderSize + 2 * frame_size + frame_size / 2;
    StreamDecoder dec(model, model_crc(*model));
    dec.push(bytes.data(), cut);
    CHECK(dec.decoded_length() > 0);
    CHECK_THROWS_AS(dec.finish(), Error);
    // what was decoded before the cut is still readable and correct
    Tensor<float> offline = model->forward(x, false);
    Audio partial = dec.output_audio();
    REQUIRE(partial.length() >= 300);
    for (int t = 0; t < 300; ++t) CHECK(partial.channels[0][t] == offline.at(0, 0, t));
}

TEST_CASE("an empty stream fails at finish") {
    auto model = make_model(2, 1);
    StreamDecoder dec(model, model_crc(*model));
    CHECK_THROWS_AS(dec.finish(), Error);
}

TEST_CASE("encoder validates channel shape and rejects pushes after finish") {
    auto model = make_model(3, 1);
    StreamEncoder enc(model, model_crc(*model), 256, false);
    Tensor<float> wrong(1, 2, 100);
    CHECK_THROWS_AS(enc.push(wrong), Error);
    Tensor<float> ok(1, 3, 100);
    enc.push(ok);
    enc.finish();
    CHECK(enc.finished());
    CHECK_THROWS_AS(enc.push(ok), Error);
}

TEST_CASE("planar pointer push matches tensor push") {
    auto model = make_model(2, 1);
    Tensor<float> x = random_audio(2, 700, 69);
    const std::string via_tensor = encode_all(model, x, 200, false);

    StreamEncoder enc(model, model_crc(*model), 200, false);
    std::vector<const float*> ptrs{x.row(0, 0), x.row(0, 1)};
    enc.push(ptrs, x.length);
    enc.finish();
    std::string via_ptrs = enc.take_bytes();
    CHECK(via_ptrs == via_tensor);
}
