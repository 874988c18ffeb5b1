#include "sddr/tensor.hpp"

#include <cmath>
#include <string>

#include "sddr/errors.hpp"

namespace sddr {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.values_.assign(shape_product(shape), 0.0);
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::unchecked(std::vector<std::size_t> shape, std::vector<double> values) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = std::move(values);
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape_product(shape) != values.size()) {
    throw ConfigError("tensor shape/value count mismatch: shape product " +
                      std::to_string(shape_product(shape)) + " vs " +
                      std::to_string(values.size()) + " values");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ConfigError("non-finite tensor value at index " + std::to_string(i));
    }
  }
  return unchecked(std::move(shape), std::move(values));
}

}  // namespace sddr
