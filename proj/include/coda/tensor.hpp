#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace coda {

/// Dense row-major 3-d array. Index order is (i, j, k) with k fastest.
template <class T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, T fill = T{})
      : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, fill) {}
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, std::vector<T> data)
      : d0_(d0), d1_(d1), d2_(d2), data_(std::move(data)) {
    assert(data_.size() == d0_ * d1_ * d2_);
  }

  [[nodiscard]] std::size_t dim0() const { return d0_; }
  [[nodiscard]] std::size_t dim1() const { return d1_; }
  [[nodiscard]] std::size_t dim2() const { return d2_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * d1_ + j) * d2_ + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * d1_ + j) * d2_ + k];
  }

  std::span<T> row(std::size_t i, std::size_t j) {
    return {data_.data() + (i * d1_ + j) * d2_, d2_};
  }
  std::span<const T> row(std::size_t i, std::size_t j) const {
    return {data_.data() + (i * d1_ + j) * d2_, d2_};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<T> data_;
};

/// Dense row-major matrix.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

/// Index of the largest element; ties go to the lowest index.
template <class T>
std::size_t argmax_lowest(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace coda
