#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace msce {

// Adam with bias correction: m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g^2,
// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps). Moments are float32 and
// serialize to a sidecar file so training can resume exactly.
template <class T>
class Adam {
  public:
    explicit Adam(const std::vector<Parameter<T>*>& params);

    void step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    long long step_count() const { return step_count_; }

    std::string serialize() const;
    void restore(const std::string& bytes);
    void save(const std::string& path) const;
    void load(const std::string& path);

  private:
    std::vector<Parameter<T>*> params_;
    std::vector<std::vector<T>> m_, v_;
    long long step_count_ = 0;
};

inline constexpr char kOptimizerMagic[4] = {'M', 'S', 'C', 'O'};
inline constexpr std::uint8_t kOptimizerVersion = 1;

}  // namespace msce
