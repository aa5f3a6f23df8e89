#include "core/model.hpp"

#include <algorithm>
#include <cmath>

namespace msce {

using nlohmann::json;

void ModelConfig::validate() const {
    if (input_channels < 1) fail_invalid("input_channels must be >= 1");
    if (hidden_filters < 1) fail_invalid("hidden_filters must be >= 1");
    if (filter_length < 1 || filter_length % 2 == 0) fail_invalid("filter_length must be odd and >= 1");
    if (bottleneck_channels < 1 || bottleneck_channels > input_channels)
        fail_invalid("bottleneck_channels must be in [1, input_channels]");
    if (sample_rate < 1) fail_invalid("sample_rate must be positive");
    if (variant == Variant::sfcn) {
        if (sinc_filters < 1) fail_invalid("sinc_filters must be >= 1");
        if (sinc_length < 1 || sinc_length % 2 == 0) fail_invalid("sinc_length must be odd and >= 1");
    }
}

json ModelConfig::to_json() const {
    return json{{"variant", variant == Variant::fcn ? "fcn" : "sfcn"},
                {"mode", mode == Mode::mimo ? "mimo" : "miso"},
                {"input_channels", input_channels},
                {"hidden_filters", hidden_filters},
                {"filter_length", filter_length},
                {"bottleneck_channels", bottleneck_channels},
                {"sinc_filters", sinc_filters},
                {"sinc_length", sinc_length},
                {"sample_rate", sample_rate}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig cfg;
    if (!j.is_object()) fail_data("model config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "variant") {
            const auto s = value.get<std::string>();
            if (s == "fcn") cfg.variant = Variant::fcn;
            else if (s == "sfcn") cfg.variant = Variant::sfcn;
            else fail_data("unknown model variant: " + s);
        } else if (key == "mode") {
            const auto s = value.get<std::string>();
            if (s == "mimo") cfg.mode = Mode::mimo;
            else if (s == "miso") cfg.mode = Mode::miso;
            else fail_data("unknown model mode: " + s);
        } else if (key == "input_channels") cfg.input_channels = value.get<int>();
        else if (key == "hidden_filters") cfg.hidden_filters = value.get<int>();
        else if (key == "filter_length") cfg.filter_length = value.get<int>();
        else if (key == "bottleneck_channels") cfg.bottleneck_channels = value.get<int>();
        else if (key == "sinc_filters") cfg.sinc_filters = value.get<int>();
        else if (key == "sinc_length") cfg.sinc_length = value.get<int>();
        else if (key == "sample_rate") cfg.sample_rate = value.get<int>();
        else fail_data("unknown model config key: " + key);
    }
    cfg.validate();
    return cfg;
}

namespace {

template <class T>
Parameter<T> make_conv_weight(const std::string& name, int cout, int cin, int klen, Rng& rng) {
    Tensor<T> w(cout, cin, klen);
    const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * klen + static_cast<double>(cout) * klen));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return Parameter<T>(name, std::move(w));
}

template <class T>
Parameter<T> make_vector_param(const std::string& name, int n, T fill_value) {
    Tensor<T> v(1, 1, n);
    v.fill(fill_value);
    return Parameter<T>(name, std::move(v));
}

template <class T>
ConvBlock<T> make_conv_block(const std::string& prefix, int cout, int cin, int klen, bool output_block,
                             Rng& rng) {
    ConvBlock<T> blk;
    blk.output_block = output_block;
    blk.weight = make_conv_weight<T>(prefix + ".conv.w", cout, cin, klen, rng);
    blk.bias = make_vector_param<T>(prefix + ".conv.b", cout, T(0));
    if (!output_block) {
        blk.gamma = make_vector_param<T>(prefix + ".bn.gamma", cout, T(1));
        blk.beta = make_vector_param<T>(prefix + ".bn.beta", cout, T(0));
        blk.bn_state.running_mean.assign(cout, T(0));
        blk.bn_state.running_var.assign(cout, T(1));
    }
    return blk;
}

}  // namespace

template <class T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x, bool train) {
    cached_x = x;
    Tensor<T> y = conv1d_forward(x, weight.value, bias.value);
    if (output_block) {
        Tensor<T> out = tanh_forward(y);
        cached_act = out;
        has_cache = true;
        return out;
    }
    y = batchnorm_forward(y, gamma.value, beta.value, bn_state, train, kBatchNormEps,
                          kBatchNormMomentum, &bn_cache);
    cached_act = y;
    has_cache = true;
    return leaky_relu_forward(y, static_cast<T>(kLeakySlope));
}

template <class T>
Tensor<T> ConvBlock<T>::backward(const Tensor<T>& dy) {
    if (!has_cache) fail_invalid("block backward without a preceding forward");
    Tensor<T> grad = dy;
    if (output_block) {
        grad = tanh_backward(cached_act, grad);
    } else {
        grad = leaky_relu_backward(cached_act, grad, static_cast<T>(kLeakySlope));
        grad = batchnorm_backward(grad, gamma.value, bn_cache, &gamma.grad, &beta.grad);
    }
    return conv1d_backward(cached_x, weight.value, grad, &weight.grad, &bias.grad);
}

template <class T>
void ConvBlock<T>::clear_cache() {
    cached_x = Tensor<T>();
    cached_act = Tensor<T>();
    bn_cache = BatchNormCache<T>();
    has_cache = false;
}

template <class T>
Tensor<T> SincBlock<T>::forward(const Tensor<T>& x, bool train) {
    if (x.channels != in_channels) fail_invalid("sinc block: input channel mismatch");
    cached_x = x;
    cached_kernels = sinc_kernels(bank);
    const int filters = bank.filters();
    const Tensor<T> zero_bias(1, 1, filters);

    Tensor<T> y(x.batch, in_channels * filters, x.length);
    Tensor<T> mono(x.batch, 1, x.length);
    for (int c = 0; c < in_channels; ++c) {
        for (int b = 0; b < x.batch; ++b)
            std::copy(x.row(b, c), x.row(b, c) + x.length, mono.row(b, 0));
        Tensor<T> band = conv1d_forward(mono, cached_kernels, zero_bias);
        for (int b = 0; b < x.batch; ++b)
            for (int f = 0; f < filters; ++f)
                std::copy(band.row(b, f), band.row(b, f) + x.length, y.row(b, c * filters + f));
    }

    y = batchnorm_forward(y, gamma.value, beta.value, bn_state, train, kBatchNormEps,
                          kBatchNormMomentum, &bn_cache);
    cached_act = y;
    has_cache = true;
    return leaky_relu_forward(y, static_cast<T>(kLeakySlope));
}

template <class T>
Tensor<T> SincBlock<T>::backward(const Tensor<T>& dy) {
    if (!has_cache) fail_invalid("sinc block backward without a preceding forward");
    Tensor<T> grad = leaky_relu_backward(cached_act, dy, static_cast<T>(kLeakySlope));
    grad = batchnorm_backward(grad, gamma.value, bn_cache, &gamma.grad, &beta.grad);

    const int filters = bank.filters();
    const int t_len = cached_x.length;
    Tensor<T> dkernels(filters, 1, cached_kernels.length);
    Tensor<T> dx(cached_x.batch, in_channels, t_len);
    Tensor<T> mono(cached_x.batch, 1, t_len);
    Tensor<T> dband(cached_x.batch, filters, t_len);
    for (int c = 0; c < in_channels; ++c) {
        for (int b = 0; b < cached_x.batch; ++b) {
            std::copy(cached_x.row(b, c), cached_x.row(b, c) + t_len, mono.row(b, 0));
            for (int f = 0; f < filters; ++f)
                std::copy(grad.row(b, c * filters + f), grad.row(b, c * filters + f) + t_len,
                          dband.row(b, f));
        }
        Tensor<T> dmono =
            conv1d_backward(mono, cached_kernels, dband, &dkernels, static_cast<Tensor<T>*>(nullptr));
        for (int b = 0; b < cached_x.batch; ++b)
            std::copy(dmono.row(b, 0), dmono.row(b, 0) + t_len, dx.row(b, c));
    }
    sinc_kernels_backward(bank, dkernels);
    return dx;
}

template <class T>
void SincBlock<T>::clear_cache() {
    cached_x = Tensor<T>();
    cached_kernels = Tensor<T>();
    cached_act = Tensor<T>();
    bn_cache = BatchNormCache<T>();
    has_cache = false;
}

template <class T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);

    int enc_in = cfg_.input_channels;
    if (cfg_.variant == Variant::sfcn) {
        sinc_ = std::make_unique<SincBlock<T>>();
        sinc_->in_channels = cfg_.input_channels;
        sinc_->bank = make_mel_sinc_bank<T>(cfg_.sinc_filters, cfg_.sinc_length, cfg_.sample_rate);
        sinc_->bank.low_cut.name = "encoder.sinc.low_cut";
        sinc_->bank.band_width.name = "encoder.sinc.band_width";
        const int ch = sinc_->out_channels();
        sinc_->gamma = make_vector_param<T>("encoder.sinc.bn.gamma", ch, T(1));
        sinc_->beta = make_vector_param<T>("encoder.sinc.bn.beta", ch, T(0));
        sinc_->bn_state.running_mean.assign(ch, T(0));
        sinc_->bn_state.running_var.assign(ch, T(1));
        enc_in = ch;
    }

    const int fn = cfg_.hidden_filters;
    const int fl = cfg_.filter_length;
    encoder_.push_back(make_conv_block<T>("encoder.cb1", fn, enc_in, fl, false, rng));
    encoder_.push_back(make_conv_block<T>("encoder.cb2", fn, fn, fl, false, rng));
    encoder_.push_back(make_conv_block<T>("encoder.cb3", fn, fn, fl, false, rng));
    encoder_.push_back(make_conv_block<T>("encoder.cb4", fn, fn, fl, false, rng));
    encoder_.push_back(make_conv_block<T>("encoder.cpb", cfg_.bottleneck_channels, fn, fl, false, rng));

    decoder_.push_back(make_conv_block<T>("decoder.cb1", fn, cfg_.bottleneck_channels, fl, false, rng));
    decoder_.push_back(make_conv_block<T>("decoder.cb2", fn, fn, fl, false, rng));
    decoder_.push_back(make_conv_block<T>("decoder.cb3", fn, fn, fl, false, rng));
    decoder_.push_back(make_conv_block<T>("decoder.cb4", fn, fn, fl, false, rng));
    decoder_.push_back(make_conv_block<T>("decoder.out", cfg_.output_channels(), fn, fl, true, rng));
}

template <class T>
Tensor<T> Model<T>::encode(const Tensor<T>& x, bool train) {
    if (x.channels != cfg_.input_channels)
        fail_invalid("encode: input has " + std::to_string(x.channels) + " channels, model expects " +
                     std::to_string(cfg_.input_channels));
    Tensor<T> h = x;
    if (sinc_) h = sinc_->forward(h, train);
    for (auto& blk : encoder_) h = blk.forward(h, train);
    return h;
}

template <class T>
Tensor<T> Model<T>::decode(const Tensor<T>& z, bool train) {
    if (z.channels != cfg_.bottleneck_channels)
        fail_invalid("decode: latent has " + std::to_string(z.channels) + " channels, model expects " +
                     std::to_string(cfg_.bottleneck_channels));
    Tensor<T> h = z;
    for (auto& blk : decoder_) h = blk.forward(h, train);
    return h;
}

template <class T>
Tensor<T> Model<T>::forward(const Tensor<T>& x, bool train) {
    return decode(encode(x, train), train);
}

template <class T>
void Model<T>::backward(const Tensor<T>& d_out) {
    Tensor<T> grad = d_out;
    for (auto it = decoder_.rbegin(); it != decoder_.rend(); ++it) grad = it->backward(grad);
    for (auto it = encoder_.rbegin(); it != encoder_.rend(); ++it) grad = it->backward(grad);
    if (sinc_) sinc_->backward(grad);
}

template <class T>
void Model<T>::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

template <class T>
std::vector<Parameter<T>*> Model<T>::parameters() {
    std::vector<Parameter<T>*> out;
    if (sinc_) {
        out.push_back(&sinc_->bank.low_cut);
        out.push_back(&sinc_->bank.band_width);
        out.push_back(&sinc_->gamma);
        out.push_back(&sinc_->beta);
    }
    for (auto& blk : encoder_) {
        out.push_back(&blk.weight);
        out.push_back(&blk.bias);
        if (!blk.output_block) {
            out.push_back(&blk.gamma);
            out.push_back(&blk.beta);
        }
    }
    for (auto& blk : decoder_) {
        out.push_back(&blk.weight);
        out.push_back(&blk.bias);
        if (!blk.output_block) {
            out.push_back(&blk.gamma);
            out.push_back(&blk.beta);
        }
    }
    return out;
}

template <class T>
std::vector<NamedTensor<T>> Model<T>::named_tensors() {
    std::vector<NamedTensor<T>> out;
    auto add_param = [&out](Parameter<T>& p, std::vector<int> dims) {
        out.push_back({p.name, std::move(dims), &p.value.data});
    };
    auto add_state = [&out](const std::string& name, std::vector<T>& v) {
        out.push_back({name, {static_cast<int>(v.size())}, &v});
    };
    auto add_block = [&](ConvBlock<T>& blk, const std::string& prefix) {
        add_param(blk.weight, {blk.weight.value.batch, blk.weight.value.channels, blk.weight.value.length});
        add_param(blk.bias, {static_cast<int>(blk.bias.value.numel())});
        if (!blk.output_block) {
            add_param(blk.gamma, {static_cast<int>(blk.gamma.value.numel())});
            add_param(blk.beta, {static_cast<int>(blk.beta.value.numel())});
            add_state(prefix + ".bn.running_mean", blk.bn_state.running_mean);
            add_state(prefix + ".bn.running_var", blk.bn_state.running_var);
            add_state(prefix + ".bn.tracked", blk.bn_state.tracked);
        }
    };

    if (sinc_) {
        add_param(sinc_->bank.low_cut, {sinc_->bank.filters()});
        add_param(sinc_->bank.band_width, {sinc_->bank.filters()});
        add_param(sinc_->gamma, {static_cast<int>(sinc_->gamma.value.numel())});
        add_param(sinc_->beta, {static_cast<int>(sinc_->beta.value.numel())});
        add_state("encoder.sinc.bn.running_mean", sinc_->bn_state.running_mean);
        add_state("encoder.sinc.bn.running_var", sinc_->bn_state.running_var);
        add_state("encoder.sinc.bn.tracked", sinc_->bn_state.tracked);
    }
    const char* enc_names[] = {"encoder.cb1", "encoder.cb2", "encoder.cb3", "encoder.cb4", "encoder.cpb"};
    for (std::size_t i = 0; i < encoder_.size(); ++i) add_block(encoder_[i], enc_names[i]);
    const char* dec_names[] = {"decoder.cb1", "decoder.cb2", "decoder.cb3", "decoder.cb4", "decoder.out"};
    for (std::size_t i = 0; i < decoder_.size(); ++i) add_block(decoder_[i], dec_names[i]);
    return out;
}

template <class T>
std::size_t Model<T>::parameter_count() const {
    std::size_t n = 0;
    auto* self = const_cast<Model<T>*>(this);
    for (auto* p : self->parameters()) n += p->value.numel();
    return n;
}

template <class T>
void Model<T>::init_running_stats() {
    auto init = [](BatchNormState<T>& st) {
        std::fill(st.running_mean.begin(), st.running_mean.end(), T(0));
        std::fill(st.running_var.begin(), st.running_var.end(), T(1));
        st.tracked[0] = T(1);
    };
    if (sinc_) init(sinc_->bn_state);
    for (auto& blk : encoder_)
        if (!blk.output_block) init(blk.bn_state);
    for (auto& blk : decoder_)
        if (!blk.output_block) init(blk.bn_state);
}

template <class T>
bool Model<T>::has_running_stats() const {
    if (sinc_ && !sinc_->bn_state.has_stats()) return false;
    for (const auto& blk : encoder_)
        if (!blk.output_block && !blk.bn_state.has_stats()) return false;
    for (const auto& blk : decoder_)
        if (!blk.output_block && !blk.bn_state.has_stats()) return false;
    return true;
}

template struct ConvBlock<float>;
template struct ConvBlock<double>;
template struct SincBlock<float>;
template struct SincBlock<double>;
template class Model<float>;
template class Model<double>;

}  // namespace msce
