#include "core/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "core/loss.hpp"
#include "core/model.hpp"

namespace msce {

namespace {

constexpr double kTolerance = 1e-4;
constexpr double kErrFloor = 1e-4;
constexpr double kFdStep = 1e-5;

double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({std::abs(analytic), std::abs(numeric), kErrFloor});
}

// Weighted-sum scalarization: loss = sum(w .* f(theta)), so dloss/dtheta comes
// out of the backward pass with dy = w.
TensorD random_weights(const TensorD& like, Rng& rng) {
    TensorD w(like.batch, like.channels, like.length);
    for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
    return w;
}

double weighted_sum(const TensorD& y, const TensorD& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += y.data[i] * w.data[i];
    return acc;
}

// Max relative error between analytic gradients and central differences over
// every element of every listed tensor.
double check_param_grads(const std::vector<std::pair<TensorD*, const TensorD*>>& pairs,
                         const std::function<double()>& loss_fn) {
    double worst = 0.0;
    for (auto& [value, grad] : pairs) {
        for (std::size_t i = 0; i < value->numel(); ++i) {
            const double saved = value->data[i];
            const double h = kFdStep * std::max(1.0, std::abs(saved));
            value->data[i] = saved + h;
            const double up = loss_fn();
            value->data[i] = saved - h;
            const double down = loss_fn();
            value->data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            worst = std::max(worst, rel_err(grad->data[i], numeric));
        }
    }
    return worst;
}

GradCheckResult check_conv1d(Rng& rng) {
    const int batch = 2, cin = 3, cout = 4, t_len = 17, klen = 5;
    TensorD x = TensorD::random_uniform(batch, cin, t_len, rng);
    TensorD w = TensorD::random_uniform(cout, cin, klen, rng, -0.5, 0.5);
    TensorD b = TensorD::random_uniform(1, 1, cout, rng, -0.5, 0.5);
    const TensorD wsum = random_weights(TensorD(batch, cout, t_len), rng);

    auto loss_fn = [&]() { return weighted_sum(conv1d_forward(x, w, b), wsum); };
    TensorD dw(cout, cin, klen), db(1, 1, cout);
    TensorD dx = conv1d_backward(x, w, wsum, &dw, &db);

    double worst = 0.0;
    TensorD dx_expected = dx;
    worst = std::max(worst, check_param_grads({{&x, &dx_expected}}, loss_fn));
    worst = std::max(worst, check_param_grads({{&w, &dw}, {&b, &db}}, loss_fn));
    return {"conv1d", worst, kTolerance, worst < kTolerance};
}

GradCheckResult check_batchnorm(Rng& rng) {
    const int batch = 3, ch = 4, t_len = 11;
    TensorD x = TensorD::random_uniform(batch, ch, t_len, rng);
    TensorD gamma = TensorD::random_uniform(1, 1, ch, rng, 0.5, 1.5);
    TensorD beta = TensorD::random_uniform(1, 1, ch, rng, -0.5, 0.5);
    const TensorD wsum = random_weights(TensorD(batch, ch, t_len), rng);

    auto loss_fn = [&]() {
        BatchNormState<double> state;
        state.running_mean.assign(ch, 0.0);
        state.running_var.assign(ch, 1.0);
        return weighted_sum(batchnorm_forward(x, gamma, beta, state, true, kBatchNormEps,
                                              kBatchNormMomentum,
                                              static_cast<BatchNormCache<double>*>(nullptr)),
                            wsum);
    };

    BatchNormState<double> state;
    state.running_mean.assign(ch, 0.0);
    state.running_var.assign(ch, 1.0);
    BatchNormCache<double> cache;
    batchnorm_forward(x, gamma, beta, state, true, kBatchNormEps, kBatchNormMomentum, &cache);
    TensorD dgamma(1, 1, ch), dbeta(1, 1, ch);
    TensorD dx = batchnorm_backward(wsum, gamma, cache, &dgamma, &dbeta);

    double worst = 0.0;
    worst = std::max(worst, check_param_grads({{&x, &dx}}, loss_fn));
    worst = std::max(worst, check_param_grads({{&gamma, &dgamma}, {&beta, &dbeta}}, loss_fn));
    return {"batchnorm", worst, kTolerance, worst < kTolerance};
}

GradCheckResult check_leaky_relu(Rng& rng) {
    const int batch = 2, ch = 3, t_len = 19;
    // Keep inputs away from the kink at 0, where finite differences are wrong.
    TensorD x(batch, ch, t_len);
    for (auto& v : x.data) {
        v = rng.uniform(0.05, 1.0);
        if (rng.uniform() < 0.5) v = -v;
    }
    const TensorD wsum = random_weights(x, rng);
    const double alpha = kLeakySlope;

    auto loss_fn = [&]() { return weighted_sum(leaky_relu_forward(x, alpha), wsum); };
    TensorD dx = leaky_relu_backward(x, wsum, alpha);
    const double worst = check_param_grads({{&x, &dx}}, loss_fn);
    return {"leaky_relu", worst, kTolerance, worst < kTolerance};
}

GradCheckResult check_tanh(Rng& rng) {
    const int batch = 2, ch = 3, t_len = 19;
    TensorD x = TensorD::random_uniform(batch, ch, t_len, rng, -2.0, 2.0);
    const TensorD wsum = random_weights(x, rng);

    auto loss_fn = [&]() { return weighted_sum(tanh_forward(x), wsum); };
    TensorD y = tanh_forward(x);
    TensorD dx = tanh_backward(y, wsum);
    const double worst = check_param_grads({{&x, &dx}}, loss_fn);
    return {"tanh", worst, kTolerance, worst < kTolerance};
}

GradCheckResult check_sinc_kernels(Rng& rng) {
    const int filters = 6, klen = 33;
    SincBank<double> bank = make_mel_sinc_bank<double>(filters, klen, 16000);
    // Interior points only: the clamps at 0 and 0.5 are kinks.
    for (int f = 0; f < filters; ++f) {
        bank.low_cut.value.data[f] = rng.uniform(0.02, 0.3);
        bank.band_width.value.data[f] = rng.uniform(0.02, 0.15);
    }
    const TensorD wsum = random_weights(TensorD(filters, 1, klen), rng);

    auto loss_fn = [&]() { return weighted_sum(sinc_kernels(bank), wsum); };
    bank.low_cut.zero_grad();
    bank.band_width.zero_grad();
    sinc_kernels_backward(bank, wsum);

    double worst = 0.0;
    worst = std::max(worst, check_param_grads({{&bank.low_cut.value, &bank.low_cut.grad}}, loss_fn));
    worst = std::max(worst,
                     check_param_grads({{&bank.band_width.value, &bank.band_width.grad}}, loss_fn));
    return {"sinc_kernels", worst, kTolerance, worst < kTolerance};
}

GradCheckResult check_model(Variant variant, Rng& rng) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.mode = Mode::mimo;
    cfg.input_channels = 2;
    cfg.hidden_filters = 4;
    cfg.filter_length = 5;
    cfg.bottleneck_channels = 1;
    cfg.sinc_filters = 2;
    cfg.sinc_length = 5;
    Model<double> model(cfg, rng.next_u64());

    // The mel init puts the top band's upper edge exactly on the 0.5 clamp,
    // a kink where central differences are undefined; check at an interior
    // point instead. Clamp subgradients are covered by the sinc unit tests.
    for (auto* p : model.parameters()) {
        if (p->name == "encoder.sinc.low_cut")
            for (auto& v : p->value.data) v = rng.uniform(0.02, 0.25);
        if (p->name == "encoder.sinc.band_width")
            for (auto& v : p->value.data) v = rng.uniform(0.02, 0.2);
    }

    TensorD x = TensorD::random_uniform(1, 2, 32, rng, -0.8, 0.8);
    TensorD target = TensorD::random_uniform(1, 2, 32, rng, -0.8, 0.8);

    auto loss_fn = [&]() {
        TensorD y = model.forward(x, true);
        return mse_loss(y, target, static_cast<TensorD*>(nullptr));
    };

    model.zero_grad();
    TensorD y = model.forward(x, true);
    TensorD grad;
    mse_loss(y, target, &grad);
    model.backward(grad);

    double worst = 0.0;
    for (auto* p : model.parameters())
        worst = std::max(worst, check_param_grads({{&p->value, &p->grad}}, loss_fn));
    return {variant == Variant::fcn ? "model_fcn" : "model_sfcn", worst, kTolerance,
            worst < kTolerance};
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck() {
    Rng rng(0x6e61627a);
    std::vector<GradCheckResult> results;
    results.push_back(check_conv1d(rng));
    results.push_back(check_batchnorm(rng));
    results.push_back(check_leaky_relu(rng));
    results.push_back(check_tanh(rng));
    results.push_back(check_sinc_kernels(rng));
    results.push_back(check_model(Variant::fcn, rng));
    results.push_back(check_model(Variant::sfcn, rng));
    return results;
}

bool gradcheck_all_passed(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

nlohmann::json gradcheck_report(const std::vector<GradCheckResult>& results) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& r : results)
        checks.push_back({{"name", r.name},
                          {"max_rel_err", r.max_rel_err},
                          {"tolerance", r.tolerance},
                          {"pass", r.pass}});
    return {{"checks", checks}, {"pass", gradcheck_all_passed(results)}};
}

}  // namespace msce
