#include "core/loss.hpp"

namespace msce {

template <class T>
double mse_loss(const Tensor<T>& estimate, const Tensor<T>& target, Tensor<T>* grad) {
    if (!estimate.same_shape(target)) fail_invalid("mse_loss: shape mismatch");
    const std::size_t n = estimate.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(estimate.data[i]) - static_cast<double>(target.data[i]);
        acc += d * d;
    }
    const double loss = acc / static_cast<double>(n);
    if (grad != nullptr) {
        if (!grad->same_shape(estimate)) *grad = Tensor<T>(estimate.batch, estimate.channels, estimate.length);
        const double scale = 2.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            grad->data[i] = static_cast<T>(scale * (static_cast<double>(estimate.data[i]) -
                                                    static_cast<double>(target.data[i])));
    }
    return loss;
}

template double mse_loss<float>(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double mse_loss<double>(const Tensor<double>&, const Tensor<double>&, Tensor<double>*);

}  // namespace msce
