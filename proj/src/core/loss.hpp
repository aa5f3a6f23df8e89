#pragma once

#include "core/tensor.hpp"

namespace msce {

// Mean squared error over all elements; the gradient w.r.t. the estimate is
// 2*(estimate - target)/numel. Mean (not sum) keeps the loss magnitude
// independent of utterance length and channel count.
template <class T>
double mse_loss(const Tensor<T>& estimate, const Tensor<T>& target, Tensor<T>* grad);

}  // namespace msce
