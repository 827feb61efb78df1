#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace attrkit {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Rounds every value to the precision of `dtype` in place.
void round_to(std::vector<double>& values, DType dtype);

/// Row-major n-dimensional array.
///
/// Values are held as doubles; an f32 tensor stores only values that are
/// exactly representable as float, so every f32 tensor round-trips through
/// 4-byte storage unchanged. Tensors are immutable once constructed.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, DType dtype = DType::f64);

  static Tensor zeros(Shape shape, DType dtype = DType::f64);
  static Tensor full(Shape shape, double value, DType dtype = DType::f64);
  static Tensor vector(std::vector<double> data, DType dtype = DType::f64);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  DType dtype() const noexcept { return dtype_; }

  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }

  Tensor reshaped(Shape shape) const;
  Tensor as(DType dtype) const;

  bool all_finite() const;
  // Bit-level equality of shape, dtype and data.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  DType dtype_ = DType::f64;
  std::vector<double> data_;
};

using TensorMap = std::map<std::string, Tensor>;

double max_abs_diff(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);

}  // namespace attrkit
