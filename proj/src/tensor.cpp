// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace taylorgan {

std::size_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                     shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::axpy(double scale, const Tensor &other) {
  if (other.size() != data_.size())
    throw ShapeError("axpy between " + shape_to_string(shape_) + " and " +
                     shape_to_string(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i)
    data_[i] += scale * other.data_[i];
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x))
      return false;
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double x : data_)
    m = std::max(m, std::abs(x));
  return m;
}

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double x : data_)
    s += x * x;
  return s;
}

} // namespace taylorgan
