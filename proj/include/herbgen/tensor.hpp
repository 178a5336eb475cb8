#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace herbgen::compute {

// Dense 64-bit float tensor. Row-major storage; rank 0 (scalar), 1 or 2 in
// practice.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_in, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor vector(std::size_t n, double fill = 0.0);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor zeros_like(const Tensor& other);

  std::size_t ndim() const { return shape.size(); }
  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return shape.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double scalar_value() const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  std::string shape_string() const;

  bool operator==(const Tensor&) const = default;

  std::vector<std::size_t> shape;
  std::vector<double> data;
};

}  // namespace herbgen::compute
