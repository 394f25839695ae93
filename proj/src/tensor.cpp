#include "rada/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rada {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must not be empty");
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) {
      throw std::invalid_argument("tensor dimensions must be positive, got " +
                                  to_string(shape));
    }
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + to_string(shape_));
  }
}

void Tensor::rank_error(const char* what) const {
  throw std::logic_error(std::string(what) + " on tensor of shape " + to_string(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::logic_error("item() on non-scalar tensor of shape " +
                           to_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace rada
