#include "attrkit/engine/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "attrkit/engine/error.hpp"

namespace attrkit {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) {
    if (extent < 0) throw Error(ErrorCode::shape_mismatch, "negative extent in " + shape_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

void round_to(std::vector<double>& values, DType dtype) {
  if (dtype != DType::f32) return;
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

Tensor::Tensor(Shape shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype), data_(std::move(data)) {
  if (shape_size(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw Error(ErrorCode::shape_mismatch, "shape " + shape_string(shape_) + " does not hold " +
                                               std::to_string(data_.size()) + " values");
  }
  round_to(data_, dtype_);
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), dtype);
}

Tensor Tensor::vector(std::vector<double> data, DType dtype) {
  Shape shape{static_cast<std::int64_t>(data.size())};
  return Tensor(std::move(shape), std::move(data), dtype);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_, dtype_); }

Tensor Tensor::as(DType dtype) const { return Tensor(shape_, data_, dtype); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::identical(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype_ != other.dtype_ || data_.size() != other.data_.size()) return false;
  return data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::shape_mismatch, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

}  // namespace attrkit
