#include "core/dataset.hpp"

#include <algorithm>
#include <set>

#include "core/crc32.hpp"
#include "core/wav.hpp"

namespace msce {

using nlohmann::json;

namespace {

std::string dirname_of(const std::string& path) {
    const auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string() : path.substr(0, pos + 1);
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    if (path.empty() || path.front() == '/' || base_dir.empty()) return path;
    return base_dir + path;
}

}  // namespace

std::vector<int> Manifest::split_indices(const std::string& split) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) out.push_back(static_cast<int>(i));
    return out;
}

void Manifest::validate() const {
    geometry.validate();
    std::set<std::string> train_clean, test_clean;
    for (const auto& e : entries) {
        if (e.clean.empty() || e.noise.empty()) fail_data("manifest entry needs clean and noise paths");
        if (e.split == "train") train_clean.insert(e.clean);
        else if (e.split == "test") test_clean.insert(e.clean);
        else fail_data("manifest split must be train or test, got: " + e.split);
    }
    for (const auto& path : train_clean)
        if (test_clean.count(path))
            fail_data("utterance appears in both train and test splits: " + path);
}

Manifest Manifest::from_json(const json& j, const std::string& base_dir) {
    Manifest m;
    if (!j.is_object()) fail_data("manifest must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "version") {
            if (value.get<int>() > 1) fail_data("manifest version newer than supported");
        } else if (key == "geometry") {
            if (value.is_string())
                m.geometry = MicGeometry::from_json(
                    json::parse(read_file(resolve(base_dir, value.get<std::string>()))));
            else
                m.geometry = MicGeometry::from_json(value);
        } else if (key == "entries") {
            if (!value.is_array()) fail_data("manifest entries must be an array");
            for (const auto& item : value) {
                ManifestEntry e;
                if (!item.is_object()) fail_data("manifest entry must be an object");
                for (const auto& [k2, v2] : item.items()) {
                    if (k2 == "clean") e.clean = resolve(base_dir, v2.get<std::string>());
                    else if (k2 == "noise") e.noise = resolve(base_dir, v2.get<std::string>());
                    else if (k2 == "snr_db") e.snr_db = v2.get<double>();
                    else if (k2 == "split") e.split = v2.get<std::string>();
                    else fail_data("unknown manifest entry key: " + k2);
                }
                m.entries.push_back(std::move(e));
            }
        } else fail_data("unknown manifest key: " + key);
    }
    m.validate();
    return m;
}

Manifest Manifest::load(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        fail_data("manifest parse error: " + std::string(e.what()));
    }
    return from_json(j, dirname_of(path));
}

long long segment_count(long long t_len, long long seg_len, long long hop) {
    if (t_len <= seg_len) return 1;
    return (t_len - seg_len + hop - 1) / hop + 1;
}

UtterancePair synthesize_pair(const ManifestEntry& entry, const MicGeometry& geometry,
                              std::uint64_t seed) {
    Audio clean_src = read_wav(entry.clean);
    Audio clean_multi =
        clean_src.num_channels() == 1 ? simulate_array(clean_src, geometry) : clean_src;
    Audio noise = read_wav(entry.noise);
    if (noise.num_channels() != 1) fail_data("noise must be mono: " + entry.noise);

    MixSpec spec;
    spec.snr_db = entry.snr_db;
    spec.seed = seed;
    Audio noisy = mix_at_snr(clean_multi, noise, spec);

    UtterancePair pair;
    pair.noisy = tensor_from_audio(noisy);
    pair.clean = tensor_from_audio(clean_multi);
    pair.sample_rate = clean_multi.sample_rate;
    return pair;
}

Dataset::Dataset(const Manifest& manifest, const std::string& split, int segment_length, int hop,
                 std::uint64_t seed)
    : segment_length_(segment_length), seed_(seed) {
    if (segment_length < 1 || hop < 1) fail_invalid("segment length and hop must be positive");
    const auto indices = manifest.split_indices(split);
    if (indices.empty()) fail_data("manifest has no entries for split: " + split);

    for (int idx : indices) {
        UtterancePair pair = synthesize_pair(manifest.entries[idx], manifest.geometry,
                                             Rng::derive(seed, static_cast<std::uint64_t>(idx)));
        if (channels_ == 0) channels_ = pair.noisy.channels;
        if (pair.noisy.channels != channels_) fail_data("channel count differs across manifest entries");

        const int pair_index = static_cast<int>(pairs_.size());
        const long long t_len = pair.noisy.length;
        const long long count = segment_count(t_len, segment_length, hop);
        for (long long s = 0; s < count; ++s)
            segments_.push_back({pair_index, s * hop});
        pairs_.push_back(std::move(pair));
    }
}

void Dataset::copy_segment(const SegmentRef& ref, Tensor<float>& noisy, Tensor<float>& clean,
                           int row) const {
    const UtterancePair& p = pairs_[ref.pair];
    const long long t_len = p.noisy.length;
    for (int c = 0; c < channels_; ++c) {
        const float* src_n = p.noisy.row(0, c);
        const float* src_c = p.clean.row(0, c);
        float* dst_n = noisy.row(row, c);
        float* dst_c = clean.row(row, c);
        for (int t = 0; t < segment_length_; ++t) {
            const long long pos = ref.start + t;
            dst_n[t] = pos < t_len ? src_n[pos] : 0.0f;
            dst_c[t] = pos < t_len ? src_c[pos] : 0.0f;
        }
    }
}

void Dataset::batch_for_step(long long step, int batch_size, Tensor<float>& noisy,
                             Tensor<float>& clean) const {
    if (batch_size < 1) fail_invalid("batch size must be >= 1");
    const long long n = num_segments();
    const long long batches_per_epoch = (n + batch_size - 1) / batch_size;
    const long long epoch = step / batches_per_epoch;
    const long long batch_in_epoch = step % batches_per_epoch;

    std::vector<std::uint32_t> order(n);
    for (long long i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(Rng::derive(seed_, 0x5d1ce5 ^ static_cast<std::uint64_t>(epoch)));
    for (long long i = n - 1; i > 0; --i) {
        const std::size_t j = rng.uniform_index(static_cast<std::size_t>(i) + 1);
        std::swap(order[i], order[j]);
    }

    noisy = Tensor<float>(batch_size, channels_, segment_length_);
    clean = Tensor<float>(batch_size, channels_, segment_length_);
    for (int b = 0; b < batch_size; ++b) {
        const long long pos = (batch_in_epoch * batch_size + b) % n;
        copy_segment(segments_[order[pos]], noisy, clean, b);
    }
}

std::uint32_t Dataset::digest() const {
    std::uint32_t crc = 0;
    for (const auto& p : pairs_) {
        crc = crc32(p.noisy.data.data(), p.noisy.numel() * sizeof(float), crc);
        crc = crc32(p.clean.data.data(), p.clean.numel() * sizeof(float), crc);
    }
    return crc;
}

}  // namespace msce
