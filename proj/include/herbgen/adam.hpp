#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "herbgen/tensor.hpp"

namespace herbgen::compute {

struct NamedParam {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

// Adam with bias correction. Moment buffers are keyed by parameter name;
// update order follows the span order, so results are reproducible.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);

  // Applies one step and zeroes the gradients. clip_norm > 0 rescales the
  // global gradient norm before the update. Throws on non-finite gradients,
  // naming the offending parameter.
  void step(std::span<NamedParam> params, double clip_norm = 0.0);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::unordered_map<std::string, Tensor> m_, v_;
};

}  // namespace herbgen::compute
