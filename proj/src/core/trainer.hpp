#pragma once

#include <functional>
#include <string>

#include <json.hpp>

#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/optimizer.hpp"

namespace msce {

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 4;
    long long steps = 1000;
    std::uint64_t seed = 0;
    std::string precision = "float32";  // or "float64"
    long long checkpoint_every = 0;     // 0 = final only
    int segment_length = 16384;
    int hop = 8192;
    double grad_clip = 0.0;  // 0 = off; otherwise max global grad norm

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// One optimizer step on a prepared batch: zero grads, forward, loss,
// backward, clip (optional), Adam update. Non-finite loss aborts.
template <class T>
double train_step(Model<T>& model, Adam<T>& opt, const Tensor<T>& noisy, const Tensor<T>& clean,
                  const TrainConfig& cfg);

struct TrainResult {
    double first_loss = 0.0;
    double final_loss = 0.0;
    long long steps = 0;
};

// Full loop: deterministic batches from the dataset, loss log lines
// {step, loss, wallclock} as newline-delimited JSON, checkpoints (plus the
// optimizer sidecar "<checkpoint>.opt") at the configured cadence and at the
// end. Resumes from the checkpoint pair when resume is true. The progress
// callback, when set, may stop training early by returning false.
TrainResult train_loop(const Manifest& manifest, const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, const std::string& checkpoint_path,
                       const std::string& log_path, bool resume = false,
                       const std::function<bool(long long, double)>& progress = nullptr);

// MISO training keeps channel 0 of the clean reference as the single target.
template <class T>
Tensor<T> select_target(const Tensor<T>& clean, Mode mode);

}  // namespace msce
