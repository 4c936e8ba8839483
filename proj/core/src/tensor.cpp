#include "lsnet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace lsnet {

std::string TensorShape::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

TensorShape Tensor::check_shape(const TensorShape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ShapeError("negative extent in tensor shape " + s.str());
  }
  return s;
}

Tensor Tensor::from_external(TensorShape shape, std::vector<float> data) {
  Tensor t(shape, std::move(data));
  if (!t.all_finite()) {
    throw ValueError("non-finite value in external tensor of shape " + shape.str());
  }
  return t;
}

Tensor Tensor::full(TensorShape shape, float value) {
  Tensor t(shape);
  for (float& v : t.data_) v = value;
  return t;
}

bool Tensor::equals(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] != other.data_[i]) return false;
  }
  return true;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_abs_diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  float m = 0.0f;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    m = std::max(m, std::fabs(da[i] - db[i]));
  }
  return m;
}

}  // namespace lsnet
