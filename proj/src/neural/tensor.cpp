#include "lungpipe/neural/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace lungpipe::nn {

std::size_t shape_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(shape_count(shape), fill) {}

std::size_t Tensor::item_size() const {
  if (shape.empty()) return 0;
  return shape_count(std::vector<std::size_t>(shape.begin() + 1, shape.end()));
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

}  // namespace lungpipe::nn
