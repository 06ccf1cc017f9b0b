#include "dfrd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfrd {

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
  for (auto d : shape_) require(d > 0, "tensor dimensions must be positive");
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) require(d > 0, "tensor dimensions must be positive");
  require(data_.size() == shape_size(shape_),
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_to_string(shape_));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  require(values.size() > 0, "empty vector");
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  require(rows.size() > 0, "empty matrix");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    require(r.size() == cols, "ragged matrix rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape_.size(), "axis out of range");
  return shape_[axis];
}

std::span<double> Tensor::row(std::size_t r) {
  require(rank() == 2 && r < shape_[0], "row access needs a rank-2 tensor");
  return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
}

std::span<const double> Tensor::row(std::size_t r) const {
  require(rank() == 2 && r < shape_[0], "row access needs a rank-2 tensor");
  return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
}

double Tensor::item() const {
  require(data_.size() == 1, "item() needs a single-element tensor");
  return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace dfrd
