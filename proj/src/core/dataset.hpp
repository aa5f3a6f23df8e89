#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/array_sim.hpp"
#include "core/mix.hpp"
#include "core/tensor.hpp"

namespace msce {

struct ManifestEntry {
    std::string clean;
    std::string noise;
    double snr_db = 0.0;
    std::string split;  // "train" or "test"
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    MicGeometry geometry = default_geometry();

    std::vector<int> split_indices(const std::string& split) const;
    void validate() const;
    static Manifest load(const std::string& path);
    static Manifest from_json(const nlohmann::json& j, const std::string& base_dir);
};

// Segment counting for length T, window L, hop H: one segment if T <= L,
// otherwise ceil((T - L) / H) + 1; the tail is zero-padded.
long long segment_count(long long t_len, long long seg_len, long long hop);

// One aligned noisy/clean utterance pair, fully synthesized in memory: clean
// mono (or premade multichannel) -> array simulation -> SNR mix.
struct UtterancePair {
    Tensor<float> noisy;  // [1, N, T]
    Tensor<float> clean;  // [1, N, T]
    int sample_rate = 0;
};

UtterancePair synthesize_pair(const ManifestEntry& entry, const MicGeometry& geometry,
                              std::uint64_t seed);

// In-memory dataset over one split: synthesizes every pair up front, then
// serves deterministic shuffled fixed-length segment batches. batch_for_step
// is a pure function of (seed, step), which makes resume exact.
class Dataset {
  public:
    Dataset(const Manifest& manifest, const std::string& split, int segment_length, int hop,
            std::uint64_t seed);

    int num_pairs() const { return static_cast<int>(pairs_.size()); }
    long long num_segments() const { return static_cast<long long>(segments_.size()); }
    int channels() const { return channels_; }
    int segment_length() const { return segment_length_; }
    const UtterancePair& pair(int i) const { return pairs_[i]; }

    // Fills [B, N, L] noisy/clean tensors for the given optimizer step; the
    // final partial batch of an epoch wraps around to the epoch's start.
    void batch_for_step(long long step, int batch_size, Tensor<float>& noisy,
                        Tensor<float>& clean) const;

    // Order-insensitive content digest for determinism checks.
    std::uint32_t digest() const;

  private:
    struct SegmentRef {
        int pair;
        long long start;
    };
    void copy_segment(const SegmentRef& ref, Tensor<float>& noisy, Tensor<float>& clean,
                      int row) const;

    std::vector<UtterancePair> pairs_;
    std::vector<SegmentRef> segments_;
    int segment_length_;
    int channels_ = 0;
    std::uint64_t seed_;
};

}  // namespace msce
