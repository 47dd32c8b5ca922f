// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense row-major tensor of doubles.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <dyslat/error.hpp>

namespace dyslat::nn {

using Shape = std::vector<std::size_t>;
using RowMatrix =
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline std::size_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, const std::vector<double> &data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    require(data_.size() == shape_size(shape_), ErrorCode::ShapeMismatch,
            "tensor data length " + std::to_string(data_.size()) +
              " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros_like(const Tensor &other) { return Tensor(other.shape_); }

  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double &at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double &at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  /// Rank-1 tensors map to a column, rank >= 2 to [dim0 x rest].
  std::pair<Eigen::Index, Eigen::Index> matrix_dims() const {
    if (rank() == 1)
      return {static_cast<Eigen::Index>(shape_[0]), 1};
    const auto rows = static_cast<Eigen::Index>(shape_.empty() ? 1 : shape_[0]);
    return {rows, rows == 0 ? 0 : static_cast<Eigen::Index>(size()) / rows};
  }

  MatrixMap matrix() {
    auto [r, c] = matrix_dims();
    return MatrixMap(data_.data(), r, c);
  }
  ConstMatrixMap matrix() const {
    auto [r, c] = matrix_dims();
    return ConstMatrixMap(data_.data(), r, c);
  }

  Eigen::Map<Eigen::VectorXd> vec() {
    return Eigen::Map<Eigen::VectorXd>(data_.data(),
                                       static_cast<Eigen::Index>(size()));
  }
  Eigen::Map<const Eigen::VectorXd> vec() const {
    return Eigen::Map<const Eigen::VectorXd>(data_.data(),
                                             static_cast<Eigen::Index>(size()));
  }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == data_.size(), ErrorCode::ShapeMismatch,
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  /// x - x is NaN exactly for non-finite x, so one vectorised sum decides.
  bool all_finite() const {
    const auto v = vec();
    return !std::isnan((v.array() - v.array()).sum());
  }

  Tensor &operator+=(const Tensor &other) {
    require(other.size() == size(), ErrorCode::ShapeMismatch,
            "cannot add " + shape_str(other.shape_) + " to " +
              shape_str(shape_));
    vec() += other.vec();
    return *this;
  }

  friend bool operator==(const Tensor &a, const Tensor &b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  Shape shape_;
  // Fixed alignment keeps Eigen's vectorised reductions, and so every
  // floating-point result, independent of where the allocator put the data.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

inline void require_finite(const Tensor &t, const char *op) {
  require(t.all_finite(), ErrorCode::NonFiniteInput,
          std::string(op) + " received a non-finite input " +
            shape_str(t.shape()));
}

} // namespace dyslat::nn
