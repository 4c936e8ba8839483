#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsnet {

/// Error raised when tensor shapes are incompatible with an operation.
/// The message names the offending dimension(s).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error raised for invalid values (non-finite external input, bad config).
class ValueError : public std::runtime_error {
 public:
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

/// NCHW extents. All four are >= 0; a default-constructed shape is empty.
struct TensorShape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  bool operator==(const TensorShape&) const = default;
  std::string str() const;
};

/// Dense 4-D float32 array in row-major (n, c, h, w) order.
///
/// Tensors are value types: copies copy the data, and contents are treated
/// as immutable once an operation has consumed them. Construction from
/// external data rejects NaN/Inf; internal kernels use the unchecked paths.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(TensorShape shape)
      : shape_(check_shape(shape)), data_(shape.numel(), 0.0f) {}

  Tensor(TensorShape shape, std::vector<float> data)
      : shape_(check_shape(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  /// Constructs from untrusted data: additionally rejects NaN/Inf values.
  static Tensor from_external(TensorShape shape, std::vector<float> data);

  /// Constant-filled tensor.
  static Tensor full(TensorShape shape, float value);

  const TensorShape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* ptr() { return data_.data(); }
  const float* ptr() const { return data_.data(); }

  float at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  float& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  /// Pointer to the start of one (n, c) plane.
  const float* plane(int n, int c) const { return ptr() + index(n, c, 0, 0); }
  float* plane(int n, int c) { return ptr() + index(n, c, 0, 0); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// True when every element compares equal (so -0 == +0 counts as equal).
  bool equals(const Tensor& other) const;

  /// True when the raw bit patterns are identical.
  bool bitwise_equal(const Tensor& other) const;

  bool all_finite() const;

 private:
  static TensorShape check_shape(const TensorShape& s);

  TensorShape shape_{};
  std::vector<float> data_{};
};

/// Elementwise |a - b| maximum; tensors must share a shape.
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace lsnet
