#include "core/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "core/checkpoint.hpp"
#include "core/loss.hpp"
#include "core/wav.hpp"

namespace msce {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr > 0.0)) fail_invalid("learning rate must be positive");
    if (batch_size < 1) fail_invalid("batch size must be >= 1");
    if (steps < 1) fail_invalid("step budget must be >= 1");
    if (segment_length < 1 || hop < 1) fail_invalid("segment length and hop must be positive");
    if (precision != "float32" && precision != "float64")
        fail_invalid("precision must be float32 or float64");
    if (grad_clip < 0.0) fail_invalid("grad_clip must be >= 0");
}

json TrainConfig::to_json() const {
    return json{{"lr", lr},
                {"beta1", beta1},
                {"beta2", beta2},
                {"eps", eps},
                {"batch_size", batch_size},
                {"steps", steps},
                {"seed", seed},
                {"precision", precision},
                {"checkpoint_every", checkpoint_every},
                {"segment_length", segment_length},
                {"hop", hop},
                {"grad_clip", grad_clip}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig cfg;
    if (!j.is_object()) fail_data("train config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "lr") cfg.lr = value.get<double>();
        else if (key == "beta1") cfg.beta1 = value.get<double>();
        else if (key == "beta2") cfg.beta2 = value.get<double>();
        else if (key == "eps") cfg.eps = value.get<double>();
        else if (key == "batch_size") cfg.batch_size = value.get<int>();
        else if (key == "steps") cfg.steps = value.get<long long>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "precision") cfg.precision = value.get<std::string>();
        else if (key == "checkpoint_every") cfg.checkpoint_every = value.get<long long>();
        else if (key == "segment_length") cfg.segment_length = value.get<int>();
        else if (key == "hop") cfg.hop = value.get<int>();
        else if (key == "grad_clip") cfg.grad_clip = value.get<double>();
        else fail_data("unknown train config key: " + key);
    }
    cfg.validate();
    return cfg;
}

template <class T>
Tensor<T> select_target(const Tensor<T>& clean, Mode mode) {
    if (mode == Mode::mimo) return clean;
    Tensor<T> out(clean.batch, 1, clean.length);
    for (int b = 0; b < clean.batch; ++b)
        std::copy(clean.row(b, 0), clean.row(b, 0) + clean.length, out.row(b, 0));
    return out;
}

template <class T>
double train_step(Model<T>& model, Adam<T>& opt, const Tensor<T>& noisy, const Tensor<T>& clean,
                  const TrainConfig& cfg) {
    model.zero_grad();
    Tensor<T> estimate = model.forward(noisy, true);
    Tensor<T> target = select_target(clean, model.config().mode);
    Tensor<T> grad;
    const double loss = mse_loss(estimate, target, &grad);
    if (!std::isfinite(loss))
        fail_numeric("training loss is not finite at optimizer step " +
                     std::to_string(opt.step_count() + 1));
    model.backward(grad);

    if (cfg.grad_clip > 0.0) {
        double norm_sq = 0.0;
        for (auto* p : model.parameters())
            for (T g : p->grad.data) norm_sq += static_cast<double>(g) * g;
        const double norm = std::sqrt(norm_sq);
        if (norm > cfg.grad_clip) {
            const double scale = cfg.grad_clip / norm;
            for (auto* p : model.parameters())
                for (auto& g : p->grad.data) g = static_cast<T>(g * scale);
        }
    }
    opt.step(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    return loss;
}

namespace {

template <class T>
TrainResult run_loop(const Manifest& manifest, const ModelConfig& model_cfg,
                     const TrainConfig& cfg, const std::string& checkpoint_path,
                     const std::string& log_path, bool resume,
                     const std::function<bool(long long, double)>& progress) {
    Dataset dataset(manifest, "train", cfg.segment_length, cfg.hop, cfg.seed);
    if (dataset.channels() != model_cfg.input_channels)
        fail_data("dataset has " + std::to_string(dataset.channels()) +
                  " channels, model expects " + std::to_string(model_cfg.input_channels));

    Model<T> model(model_cfg, cfg.seed);
    model.init_running_stats();  // momentum updates blend from mean 0, var 1
    Adam<T> opt(model.parameters());

    if (resume) {
        auto loaded = load_checkpoint(checkpoint_path);
        if (loaded->config().to_json() != model_cfg.to_json())
            fail_data("resume: checkpoint config does not match the requested config");
        auto src = loaded->named_tensors();
        auto dst = model.named_tensors();
        for (std::size_t i = 0; i < src.size(); ++i)
            dst[i].data->assign(src[i].data->begin(), src[i].data->end());
        opt.load(checkpoint_path + ".opt");
    }

    std::unique_ptr<std::FILE, int (*)(std::FILE*)> log(
        std::fopen(log_path.c_str(), resume ? "ab" : "wb"), &std::fclose);
    if (!log) fail_data("cannot open loss log for writing: " + log_path);

    auto save_pair = [&]() {
        save_checkpoint(model, checkpoint_path);
        opt.save(checkpoint_path + ".opt");
    };

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    Tensor<float> noisy_f, clean_f;
    for (long long step = opt.step_count(); step < cfg.steps; ++step) {
        dataset.batch_for_step(step, cfg.batch_size, noisy_f, clean_f);
        double loss;
        if constexpr (std::is_same_v<T, float>) {
            loss = train_step(model, opt, noisy_f, clean_f, cfg);
        } else {
            loss = train_step(model, opt, noisy_f.template cast<T>(), clean_f.template cast<T>(), cfg);
        }
        if (result.steps == 0) result.first_loss = loss;
        result.final_loss = loss;
        ++result.steps;

        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(log.get(), "{\"step\":%lld,\"loss\":%.9g,\"wallclock\":%.3f}\n",
                     opt.step_count(), loss, wall);
        if (cfg.checkpoint_every > 0 && opt.step_count() % cfg.checkpoint_every == 0 &&
            opt.step_count() < cfg.steps)
            save_pair();
        if (progress && !progress(opt.step_count(), loss)) break;
    }
    std::fflush(log.get());
    save_pair();
    return result;
}

}  // namespace

TrainResult train_loop(const Manifest& manifest, const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, const std::string& checkpoint_path,
                       const std::string& log_path, bool resume,
                       const std::function<bool(long long, double)>& progress) {
    train_cfg.validate();
    model_cfg.validate();
    if (train_cfg.precision == "float64")
        return run_loop<double>(manifest, model_cfg, train_cfg, checkpoint_path, log_path, resume,
                                progress);
    return run_loop<float>(manifest, model_cfg, train_cfg, checkpoint_path, log_path, resume,
                           progress);
}

template Tensor<float> select_target<float>(const Tensor<float>&, Mode);
template Tensor<double> select_target<double>(const Tensor<double>&, Mode);
template double train_step<float>(Model<float>&, Adam<float>&, const Tensor<float>&,
                                  const Tensor<float>&, const TrainConfig&);
template double train_step<double>(Model<double>&, Adam<double>&, const Tensor<double>&,
                                   const Tensor<double>&, const TrainConfig&);

}  // namespace msce
