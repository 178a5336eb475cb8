#include "herbgen/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace herbgen::compute {

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be > 0");
}

void AdamOptimizer::step(std::span<NamedParam> params, double clip_norm) {
  for (const auto& p : params) {
    if (!p.grad->all_finite()) {
      throw std::runtime_error("non-finite gradient for parameter " + p.name);
    }
  }

  double rescale = 1.0;
  if (clip_norm > 0.0) {
    double sq_sum = 0.0;
    for (const auto& p : params) {
      for (const double g : p.grad->data) sq_sum += g * g;
    }
    const double norm = std::sqrt(sq_sum);
    if (norm > clip_norm) rescale = clip_norm / norm;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& p : params) {
    Tensor& m = m_[p.name];
    Tensor& v = v_[p.name];
    if (!m.same_shape(*p.value)) m = Tensor::zeros_like(*p.value);
    if (!v.same_shape(*p.value)) v = Tensor::zeros_like(*p.value);
    for (std::size_t i = 0; i < p.value->numel(); ++i) {
      const double g = (*p.grad)[i] * rescale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      (*p.value)[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    p.grad->data.assign(p.grad->numel(), 0.0);
  }
}

}  // namespace herbgen::compute
