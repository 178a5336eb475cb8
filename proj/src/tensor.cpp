#include "herbgen/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace herbgen::compute {

Tensor::Tensor(std::vector<std::size_t> shape_in, double fill)
    : shape(std::move(shape_in)) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  data.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data.assign(1, v);
  return t;
}

Tensor Tensor::vector(std::size_t n, double fill) { return Tensor({n}, fill); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::zeros_like(const Tensor& other) {
  Tensor t;
  t.shape = other.shape;
  t.data.assign(other.data.size(), 0.0);
  return t;
}

std::size_t Tensor::rows() const {
  if (ndim() == 2) return shape[0];
  if (ndim() == 1) return 1;
  throw std::logic_error("rows() on tensor of rank " + std::to_string(ndim()));
}

std::size_t Tensor::cols() const {
  if (ndim() == 2) return shape[1];
  if (ndim() == 1) return shape[0];
  throw std::logic_error("cols() on tensor of rank " + std::to_string(ndim()));
}

double Tensor::scalar_value() const {
  if (data.size() != 1) {
    throw std::logic_error("scalar_value() on tensor with " +
                           std::to_string(data.size()) + " elements");
  }
  return data[0];
}

bool Tensor::all_finite() const {
  for (const double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace herbgen::compute
