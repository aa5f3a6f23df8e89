#include "mimosce.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/array_sim.hpp"
#include "core/checkpoint.hpp"
#include "core/common.hpp"
#include "core/crc32.hpp"
#include "core/dataset.hpp"
#include "core/gradcheck.hpp"
#include "core/metrics.hpp"
#include "core/mix.hpp"
#include "core/model.hpp"
#include "core/report.hpp"
#include "core/stoi.hpp"
#include "core/trainer.hpp"
#include "core/wav.hpp"
#include "core/wire.hpp"

using nlohmann::json;

namespace {

thread_local std::string t_last_error;

int status_of(msce::ErrorKind kind) {
    switch (kind) {
        case msce::ErrorKind::invalid_argument: return MSCE_ERR_INVALID;
        case msce::ErrorKind::data: return MSCE_ERR_DATA;
        case msce::ErrorKind::protocol: return MSCE_ERR_PROTOCOL;
        case msce::ErrorKind::numeric: return MSCE_ERR_NUMERIC;
    }
    return MSCE_ERR_INVALID;
}

template <class F>
int guarded(F&& body) {
    try {
        body();
        return MSCE_OK;
    } catch (const msce::Error& e) {
        t_last_error = e.what();
        return status_of(e.kind());
    } catch (const json::exception& e) {
        t_last_error = e.what();
        return MSCE_ERR_DATA;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return MSCE_ERR_INVALID;
    }
}

char* dup_cstring(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(bool ok, const char* what) {
    if (!ok) msce::fail_invalid(std::string("null or invalid argument: ") + what);
}

json parse_json_text(const char* text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        msce::fail_data(std::string(what) + ": " + e.what());
    }
}

msce::MicGeometry geometry_from_arg(const char* geometry_json) {
    if (!geometry_json || !*geometry_json) return msce::default_geometry();
    if (geometry_json[0] == '@')
        return msce::MicGeometry::from_json(
            parse_json_text(msce::read_file(geometry_json + 1).c_str(), "geometry file"));
    return msce::MicGeometry::from_json(parse_json_text(geometry_json, "geometry"));
}

}  // namespace

struct msce_model {
    std::shared_ptr<msce::Model<float>> model;
    std::uint32_t crc = 0;
};

struct msce_encoder {
    std::unique_ptr<msce::StreamEncoder> enc;
    std::string pending;
    std::vector<std::vector<float>> planar;
};

struct msce_decoder {
    std::unique_ptr<msce::StreamDecoder> dec;
    long long read_pos = 0;
};

extern "C" {

uint32_t msce_abi_version(void) { return 1; }

const char* msce_last_error(void) { return t_last_error.c_str(); }

void msce_string_free(char* s) { std::free(s); }

int msce_model_create(const char* config_json, uint64_t seed, msce_model** out) {
    return guarded([&] {
        require(config_json && out, "msce_model_create");
        auto cfg = msce::ModelConfig::from_json(parse_json_text(config_json, "model config"));
        cfg.validate();
        auto handle = std::make_unique<msce_model>();
        handle->model = std::make_shared<msce::Model<float>>(cfg, seed);
        handle->model->init_running_stats();
        handle->crc = msce::model_crc(*handle->model);
        *out = handle.release();
    });
}

int msce_model_load(const char* path, msce_model** out) {
    return guarded([&] {
        require(path && out, "msce_model_load");
        const std::string bytes = msce::read_file(path);
        auto handle = std::make_unique<msce_model>();
        handle->model = std::shared_ptr<msce::Model<float>>(msce::model_from_bytes(bytes));
        handle->crc = msce::checkpoint_crc(bytes);
        *out = handle.release();
    });
}

int msce_model_save(msce_model* model, const char* path) {
    return guarded([&] {
        require(model && path, "msce_model_save");
        msce::save_checkpoint(*model->model, path);
    });
}

void msce_model_free(msce_model* model) { delete model; }

int msce_model_info(msce_model* model, char** out_json) {
    return guarded([&] {
        require(model && out_json, "msce_model_info");
        const auto& cfg = model->model->config();
        json j{{"config", cfg.to_json()},
               {"parameters", model->model->parameter_count()},
               {"compression_ratio", cfg.compression_ratio()},
               {"encoder_context", cfg.encoder_context()},
               {"decoder_context", cfg.decoder_context()},
               {"checkpoint_crc32", model->crc}};
        *out_json = dup_cstring(j.dump(2));
    });
}

int msce_enhance_wav(msce_model* model, const char* in_wav, const char* out_wav) {
    return guarded([&] {
        require(model && in_wav && out_wav, "msce_enhance_wav");
        msce::Audio audio = msce::read_wav(in_wav);
        if (audio.num_channels() != model->model->config().input_channels)
            msce::fail_data("enhance: input has " + std::to_string(audio.num_channels()) +
                            " channels, model expects " +
                            std::to_string(model->model->config().input_channels));
        msce::Tensor<float> y = model->model->forward(msce::tensor_from_audio(audio), false);
        msce::write_wav(msce::audio_from_tensor(y, audio.sample_rate), out_wav);
    });
}

int msce_simulate_array(const char* in_wav, const char* geometry_json, const char* out_wav) {
    return guarded([&] {
        require(in_wav && out_wav, "msce_simulate_array");
        msce::Audio source = msce::read_wav(in_wav);
        msce::Audio captured = msce::simulate_array(source, geometry_from_arg(geometry_json));
        msce::write_wav(captured, out_wav);
    });
}

int msce_mix_wav(const char* clean_wav, const char* noise_wav, double snr_db, uint64_t seed,
                 const char* out_wav) {
    return guarded([&] {
        require(clean_wav && noise_wav && out_wav, "msce_mix_wav");
        msce::Audio clean = msce::read_wav(clean_wav);
        msce::Audio noise = msce::read_wav(noise_wav);
        msce::Audio noisy = msce::mix_at_snr(clean, noise, msce::MixSpec{snr_db, seed});
        msce::write_wav(noisy, out_wav);
    });
}

int msce_mix_manifest(const char* manifest_path, const char* out_dir, uint64_t seed,
                      char** out_json) {
    return guarded([&] {
        require(manifest_path && out_dir, "msce_mix_manifest");
        msce::Manifest manifest = msce::Manifest::load(manifest_path);
        std::filesystem::create_directories(out_dir);
        json pairs = json::array();
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            const auto& entry = manifest.entries[i];
            msce::UtterancePair pair = msce::synthesize_pair(
                entry, manifest.geometry, msce::Rng::derive(seed, static_cast<std::uint64_t>(i)));
            char stem[32];
            std::snprintf(stem, sizeof stem, "pair_%04zu", i);
            const std::string clean_path =
                (std::filesystem::path(out_dir) / (std::string(stem) + ".clean.wav")).string();
            const std::string noisy_path =
                (std::filesystem::path(out_dir) / (std::string(stem) + ".noisy.wav")).string();
            msce::write_wav(msce::audio_from_tensor(pair.clean, pair.sample_rate), clean_path);
            msce::write_wav(msce::audio_from_tensor(pair.noisy, pair.sample_rate), noisy_path);
            pairs.push_back({{"index", i},
                             {"split", entry.split},
                             {"clean", clean_path},
                             {"noisy", noisy_path},
                             {"source", entry.clean},
                             {"noise", entry.noise},
                             {"snr_db", entry.snr_db}});
        }
        if (out_json) *out_json = dup_cstring(json{{"pairs", pairs}}.dump(2));
    });
}

int msce_train(const char* run_config_json, char** out_summary_json) {
    return guarded([&] {
        require(run_config_json && out_summary_json, "msce_train");
        json j = parse_json_text(run_config_json, "run config");
        if (!j.is_object()) msce::fail_data("run config: expected a JSON object");
        for (const auto& [key, value] : j.items()) {
            (void)value;
            if (key != "version" && key != "model" && key != "train" && key != "manifest" &&
                key != "checkpoint" && key != "log" && key != "resume")
                msce::fail_data("run config: unknown key '" + key + "'");
        }
        const int version = j.value("version", 1);
        if (version > 1)
            msce::fail_data("run config: version " + std::to_string(version) +
                            " is newer than this build supports");
        auto model_cfg = msce::ModelConfig::from_json(j.at("model"));
        model_cfg.validate();
        auto train_cfg = msce::TrainConfig::from_json(j.value("train", json::object()));
        train_cfg.validate();
        const std::string manifest_path = j.at("manifest").get<std::string>();
        const std::string checkpoint = j.at("checkpoint").get<std::string>();
        const std::string log = j.value("log", checkpoint + ".loss.ndjson");
        const bool resume = j.value("resume", false);

        msce::Manifest manifest = msce::Manifest::load(manifest_path);
        msce::TrainResult result =
            msce::train_loop(manifest, model_cfg, train_cfg, checkpoint, log, resume);

        json summary{{"steps", result.steps},
                     {"first_loss", result.first_loss},
                     {"final_loss", result.final_loss},
                     {"checkpoint", checkpoint},
                     {"log", log},
                     {"checkpoint_crc32", msce::checkpoint_crc(msce::read_file(checkpoint))}};
        *out_summary_json = dup_cstring(summary.dump(2));
    });
}

int msce_gradcheck(char** out_report_json) {
    int rc = guarded([&] {
        require(out_report_json, "msce_gradcheck");
        auto results = msce::run_gradcheck();
        *out_report_json = dup_cstring(msce::gradcheck_report(results).dump(2));
        if (!msce::gradcheck_all_passed(results))
            msce::fail_numeric("gradient checks failed");
    });
    return rc;
}

int msce_si_sdr(const float* reference, const float* estimate, int64_t n, double* out_db) {
    return guarded([&] {
        require(reference && estimate && out_db && n > 0, "msce_si_sdr");
        *out_db = msce::si_sdr(reference, estimate, n);
    });
}

int msce_seg_snr(const float* reference, const float* estimate, int64_t n, double* out_db) {
    return guarded([&] {
        require(reference && estimate && out_db && n > 0, "msce_seg_snr");
        *out_db = msce::seg_snr(reference, estimate, n);
    });
}

int msce_stoi(const float* clean, const float* processed, int64_t n, int sample_rate,
              double* out_score) {
    return guarded([&] {
        require(clean && processed && out_score && n > 0, "msce_stoi");
        std::vector<double> x(clean, clean + n), y(processed, processed + n);
        *out_score = msce::stoi(x, y, sample_rate);
    });
}

int msce_eval(const char* eval_manifest_path, const char* out_prefix, const char* pesq_csv_path,
              char** out_summary_json) {
    return guarded([&] {
        require(eval_manifest_path && out_prefix, "msce_eval");
        msce::MetricsReport report = msce::run_eval(eval_manifest_path);
        if (pesq_csv_path && *pesq_csv_path)
            report.merge_pesq_csv(msce::read_file(pesq_csv_path));
        msce::write_report_files(report, out_prefix);
        if (out_summary_json) *out_summary_json = dup_cstring(report.summary_json().dump(2));
    });
}

int msce_encoder_open(msce_model* model, int chunk_len, int quantize, int input_sample_width,
                      msce_encoder** out) {
    return guarded([&] {
        require(model && out, "msce_encoder_open");
        auto handle = std::make_unique<msce_encoder>();
        handle->enc = std::make_unique<msce::StreamEncoder>(model->model, model->crc, chunk_len,
                                                            quantize != 0, input_sample_width);
        handle->planar.resize(model->model->config().input_channels);
        *out = handle.release();
    });
}

int msce_encoder_push(msce_encoder* enc, const float* interleaved, int64_t count) {
    return guarded([&] {
        require(enc && enc->enc && (count == 0 || interleaved), "msce_encoder_push");
        const int n = static_cast<int>(enc->planar.size());
        for (auto& ch : enc->planar) ch.resize(static_cast<std::size_t>(count));
        for (int64_t t = 0; t < count; ++t)
            for (int c = 0; c < n; ++c) enc->planar[c][t] = interleaved[t * n + c];
        std::vector<const float*> ptrs(n);
        for (int c = 0; c < n; ++c) ptrs[c] = enc->planar[c].data();
        enc->enc->push(ptrs, count);
        enc->pending += enc->enc->take_bytes();
    });
}

int msce_encoder_finish(msce_encoder* enc) {
    return guarded([&] {
        require(enc && enc->enc, "msce_encoder_finish");
        enc->enc->finish();
        enc->pending += enc->enc->take_bytes();
    });
}

int64_t msce_encoder_read(msce_encoder* enc, void* buf, int64_t cap) {
    if (!enc || !enc->enc || (!buf && cap > 0) || cap < 0) {
        t_last_error = "null or invalid argument: msce_encoder_read";
        return -1;
    }
    enc->pending += enc->enc->take_bytes();
    const int64_t n = std::min<int64_t>(cap, static_cast<int64_t>(enc->pending.size()));
    std::memcpy(buf, enc->pending.data(), static_cast<std::size_t>(n));
    enc->pending.erase(0, static_cast<std::size_t>(n));
    return n;
}

int msce_encoder_stats(msce_encoder* enc, char** out_json) {
    return guarded([&] {
        require(enc && enc->enc && out_json, "msce_encoder_stats");
        *out_json = dup_cstring(enc->enc->stats().to_json().dump(2));
    });
}

void msce_encoder_free(msce_encoder* enc) { delete enc; }

int msce_decoder_open(msce_model* model, msce_decoder** out) {
    return guarded([&] {
        require(model && out, "msce_decoder_open");
        auto handle = std::make_unique<msce_decoder>();
        handle->dec = std::make_unique<msce::StreamDecoder>(model->model, model->crc);
        *out = handle.release();
    });
}

int msce_decoder_push(msce_decoder* dec, const void* bytes, int64_t count) {
    return guarded([&] {
        require(dec && dec->dec && (count == 0 || bytes), "msce_decoder_push");
        dec->dec->push(bytes, static_cast<std::size_t>(count));
    });
}

int msce_decoder_finish(msce_decoder* dec) {
    return guarded([&] {
        require(dec && dec->dec, "msce_decoder_finish");
        dec->dec->finish();
    });
}

int64_t msce_decoder_read(msce_decoder* dec, float* interleaved, int64_t cap_samples) {
    if (!dec || !dec->dec || (!interleaved && cap_samples > 0) || cap_samples < 0) {
        t_last_error = "null or invalid argument: msce_decoder_read";
        return -1;
    }
    const int64_t available = dec->dec->decoded_length() - dec->read_pos;
    const int64_t n = std::min<int64_t>(cap_samples, available);
    if (n <= 0) return 0;
    const msce::Audio audio = dec->dec->output_audio();
    const int ch = audio.num_channels();
    for (int64_t t = 0; t < n; ++t)
        for (int c = 0; c < ch; ++c)
            interleaved[t * ch + c] = audio.channels[c][static_cast<std::size_t>(dec->read_pos + t)];
    dec->read_pos += n;
    return n;
}

int msce_decoder_channels(msce_decoder* dec) {
    if (!dec || !dec->dec || !dec->dec->header_ready()) return -1;
    return dec->dec->header().input_channels;
}

int msce_decoder_sample_rate(msce_decoder* dec) {
    if (!dec || !dec->dec || !dec->dec->header_ready()) return -1;
    return static_cast<int>(dec->dec->header().sample_rate);
}

int msce_decoder_stats(msce_decoder* dec, char** out_json) {
    return guarded([&] {
        require(dec && dec->dec && out_json, "msce_decoder_stats");
        *out_json = dup_cstring(dec->dec->stats().to_json().dump(2));
    });
}

void msce_decoder_free(msce_decoder* dec) { delete dec; }

int msce_encode_wav(msce_model* model, const char* in_wav, int chunk_len, int quantize,
                    msce_write_fn sink, void* user, char** out_stats_json) {
    return guarded([&] {
        require(model && in_wav && sink, "msce_encode_wav");
        msce::WavFormat fmt = msce::WavFormat::float32;
        msce::Audio audio = msce::read_wav(in_wav, &fmt);
        if (audio.num_channels() != model->model->config().input_channels)
            msce::fail_data("encode: input has " + std::to_string(audio.num_channels()) +
                            " channels, model expects " +
                            std::to_string(model->model->config().input_channels));
        msce::StreamEncoder enc(model->model, model->crc, chunk_len, quantize != 0,
                                msce::wav_sample_width(fmt));
        auto drain = [&] {
            std::string bytes = enc.take_bytes();
            std::size_t off = 0;
            while (off < bytes.size()) {
                int64_t wrote =
                    sink(user, bytes.data() + off, static_cast<int64_t>(bytes.size() - off));
                if (wrote <= 0) msce::fail_data("encode: stream sink failed");
                off += static_cast<std::size_t>(wrote);
            }
        };
        // Push chunk-sized slices so frames go out as they are ready instead
        // of in one burst at the end.
        const int n = audio.num_channels();
        const long long total = audio.length();
        std::vector<const float*> ptrs(n);
        for (long long start = 0; start < total; start += chunk_len) {
            const long long count = std::min<long long>(chunk_len, total - start);
            for (int c = 0; c < n; ++c) ptrs[c] = audio.channels[c].data() + start;
            enc.push(ptrs, count);
            drain();
        }
        enc.finish();
        drain();
        if (out_stats_json) *out_stats_json = dup_cstring(enc.stats().to_json().dump(2));
    });
}

int msce_decode_to_wav(msce_model* model, msce_read_fn source, void* user, const char* out_wav,
                       char** out_stats_json) {
    return guarded([&] {
        require(model && source && out_wav, "msce_decode_to_wav");
        msce::StreamDecoder dec(model->model, model->crc);
        std::string failure;
        msce::ErrorKind failure_kind = msce::ErrorKind::data;
        try {
            std::vector<char> buf(1 << 16);
            for (;;) {
                int64_t got = source(user, buf.data(), static_cast<int64_t>(buf.size()));
                if (got < 0) msce::fail_data("decode: stream source failed");
                if (got == 0) break;
                dec.push(buf.data(), static_cast<std::size_t>(got));
            }
            dec.finish();
        } catch (const msce::Error& e) {
            failure = e.what();
            failure_kind = e.kind();
        }
        // Whatever decoded cleanly is still written out.
        if (dec.decoded_length() > 0) {
            msce::write_wav(dec.output_audio(), out_wav);
        } else if (failure.empty()) {
            msce::fail_data("decode: stream contained no samples");
        }
        if (out_stats_json) *out_stats_json = dup_cstring(dec.stats().to_json().dump(2));
        if (!failure.empty()) throw msce::Error(failure_kind, failure);
    });
}

}  // extern "C"
