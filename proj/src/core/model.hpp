#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/ops.hpp"
#include "core/sinc.hpp"
#include "core/tensor.hpp"

namespace msce {

enum class Variant { fcn, sfcn };
enum class Mode { miso, mimo };

constexpr double kLeakySlope = 0.3;
constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

// Architecture description: an encoder (four conv blocks plus the bottleneck
// block with bottleneck_channels filters) and a decoder (four conv blocks plus
// a tanh reconstruction block with output_channels filters). The sfcn variant
// prepends a sinc band-pass block shared across the input channels.
struct ModelConfig {
    Variant variant = Variant::fcn;
    Mode mode = Mode::mimo;
    int input_channels = 7;       // N
    int hidden_filters = 30;      // fn
    int filter_length = 55;       // fl
    int bottleneck_channels = 1;  // C_num
    int sinc_filters = 30;
    int sinc_length = 55;
    int sample_rate = 16000;

    int output_channels() const { return mode == Mode::mimo ? input_channels : 1; }
    double compression_ratio() const {
        return static_cast<double>(input_channels) / bottleneck_channels;
    }
    // Receptive-field half-widths of the two halves, in samples.
    int encoder_context() const {
        int ctx = 5 * (filter_length - 1) / 2;
        if (variant == Variant::sfcn) ctx += (sinc_length - 1) / 2;
        return ctx;
    }
    int decoder_context() const { return 5 * (filter_length - 1) / 2; }

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// One named tensor inside a model: parameter values and batchnorm state.
// The order of entries is the stable serialization order.
template <class T>
struct NamedTensor {
    std::string name;
    std::vector<int> dims;
    std::vector<T>* data;
};

template <class T>
struct ConvBlock {
    Parameter<T> weight, bias;
    Parameter<T> gamma, beta;
    BatchNormState<T> bn_state;
    bool output_block = false;  // conv + tanh instead of conv + bn + leaky

    Tensor<T> cached_x;
    BatchNormCache<T> bn_cache;
    Tensor<T> cached_act;  // leaky: activation input; tanh: activation output
    bool has_cache = false;

    Tensor<T> forward(const Tensor<T>& x, bool train);
    Tensor<T> backward(const Tensor<T>& dy);
    void clear_cache();
};

template <class T>
struct SincBlock {
    SincBank<T> bank;
    Parameter<T> gamma, beta;
    BatchNormState<T> bn_state;
    int in_channels = 0;

    Tensor<T> cached_x;
    Tensor<T> cached_kernels;
    BatchNormCache<T> bn_cache;
    Tensor<T> cached_act;
    bool has_cache = false;

    int out_channels() const { return in_channels * bank.filters(); }
    Tensor<T> forward(const Tensor<T>& x, bool train);
    Tensor<T> backward(const Tensor<T>& dy);
    void clear_cache();
};

// The full compression-and-enhancement network. encode() maps [1,N,T] to the
// [1,C_num,T] latent; decode() reconstructs [1,c,T]. forward() is exactly
// decode(encode(x)).
template <class T>
class Model {
  public:
    Model(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    Tensor<T> encode(const Tensor<T>& x, bool train);
    Tensor<T> decode(const Tensor<T>& z, bool train);
    Tensor<T> forward(const Tensor<T>& x, bool train);
    // Full backward through decoder then encoder; grads accumulate.
    void backward(const Tensor<T>& d_out);

    void zero_grad();
    std::vector<Parameter<T>*> parameters();
    std::vector<NamedTensor<T>> named_tensors();  // parameters + bn state
    std::size_t parameter_count() const;

    // Marks batchnorm stats as usable (mean 0, var 1) so an untrained model
    // can run inference.
    void init_running_stats();
    bool has_running_stats() const;

  private:
    ModelConfig cfg_;
    std::unique_ptr<SincBlock<T>> sinc_;
    std::vector<ConvBlock<T>> encoder_;
    std::vector<ConvBlock<T>> decoder_;
};

using ModelF = Model<float>;
using ModelD = Model<double>;

}  // namespace msce
