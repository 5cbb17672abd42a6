#pragma once

#include <string>

#include <Eigen/Core>

#include "diforge/error.hpp"

namespace diforge {

using Index = Eigen::Index;

/// (batch, height, width, channels). Convolution weights reuse the same four
/// slots as (k, k, in, out).
struct Shape {
  Index batch = 0;
  Index height = 0;
  Index width = 0;
  Index channels = 0;

  constexpr Index size() const noexcept { return batch * height * width * channels; }
  /// Rows of the (positions x channels) matrix view.
  constexpr Index rows() const noexcept { return batch * height * width; }

  std::string str() const {
    return "[" + std::to_string(batch) + "," + std::to_string(height) + "," + std::to_string(width) + "," +
           std::to_string(channels) + "]";
  }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

/// Dense 4-D tensor in row-major (b, y, x, c) order.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
    require(data_.size() == shape_.size(), Errc::shape_mismatch,
            "tensor data length " + std::to_string(data_.size()) + " does not match " + shape_.str());
  }

  static Tensor constant(const Shape& shape, Scalar value) { return Tensor(shape, Array::Constant(shape.size(), value)); }

  const Shape& shape() const noexcept { return shape_; }
  Index size() const noexcept { return data_.size(); }

  Array& array() noexcept { return data_; }
  const Array& array() const noexcept { return data_; }
  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }

  Scalar& operator()(Index b, Index y, Index x, Index c) { return data_[offset(b, y, x, c)]; }
  Scalar operator()(Index b, Index y, Index x, Index c) const { return data_[offset(b, y, x, c)]; }

  /// (batch*height*width) x channels view.
  MatrixMap matrix() { return MatrixMap(data_.data(), shape_.rows(), shape_.channels); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), shape_.rows(), shape_.channels); }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, data_.template cast<To>());
  }

 private:
  Index offset(Index b, Index y, Index x, Index c) const noexcept {
    return ((b * shape_.height + y) * shape_.width + x) * shape_.channels + c;
  }

  Shape shape_;
  Array data_;
};

}  // namespace diforge
