#pragma once

#include <cstdint>
#include <vector>

#include "btsnet/layers.hpp"

namespace btsnet {

/// Adam with bias correction and no weight decay.
template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedParameter<T>> params, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  /// One update at learning rate `lr` from the accumulated gradients.
  void step(double lr);
  void zero_grad();

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }

 private:
  std::vector<NamedParameter<T>> params_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  double beta1_, beta2_, eps_;
  std::int64_t step_ = 0;
};

/// lr before `drop_epoch`, lr / factor from then on (single drop).
double scheduled_lr(double lr, int epoch, int drop_epoch, double factor);

}  // namespace btsnet
