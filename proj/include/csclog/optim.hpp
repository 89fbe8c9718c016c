#pragma once

#include "csclog/tensor.hpp"

#include <vector>

namespace csclog {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Bias-corrected Adam with decoupled weight decay: theta <- theta - lr*wd*theta
/// is applied before the moment update.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  /// Applies one update using `p->grad` for every parameter. The parameter
  /// list must be the same, in the same order, on every call.
  void step(const std::vector<Parameter*>& params);

  long steps_taken() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  long step_ = 0;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
};

/// Single functional Adam update at step `t` (t >= 1). Moments are updated in place.
void adam_update(Tensor& param, const Tensor& grad, Tensor& first_moment, Tensor& second_moment,
                 const AdamConfig& config, long t);

}  // namespace csclog
