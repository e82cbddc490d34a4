#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace lungpipe::nn {

/// Dense row-major double tensor. Activations use NCDHW; dense activations NF.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  /// Elements per batch item (product of all but the first dimension).
  std::size_t item_size() const;
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  void fill(double v);
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_count(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace lungpipe::nn
