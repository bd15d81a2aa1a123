#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace aurum::nn {

/// Dense row-major matrix. Every tensor in the model is rank 2; scalars are
/// 1 x 1 and bias vectors 1 x n.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  std::string shape_string() const;

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::span<T> row(std::size_t r) noexcept { return std::span<T>(values_).subspan(r * cols_, cols_); }
  std::span<const T> row(std::size_t r) const noexcept {
    return std::span<const T>(values_).subspan(r * cols_, cols_);
  }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  T operator[](std::size_t i) const noexcept { return values_[i]; }
  T& at(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  T at(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  void fill(T v) noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Tensor<To>(src.rows(), src.cols(), std::move(out));
}

/// Throws ShapeError naming both shapes unless they are equal.
template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op);

}  // namespace aurum::nn
