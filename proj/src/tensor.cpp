#include "aurum/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "aurum/error.hpp"

namespace aurum::nn {

template <class T>
Tensor<T>::Tensor(std::size_t rows, std::size_t cols, std::vector<T> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("tensor " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                     std::to_string(values_.size()) + " values");
  }
}

template <class T>
std::string Tensor<T>::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

template <class T>
void Tensor<T>::fill(T v) noexcept {
  std::fill(values_.begin(), values_.end(), v);
}

template <class T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string() +
                     " differ");
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void require_same_shape(const Tensor<float>&, const Tensor<float>&, const char*);
template void require_same_shape(const Tensor<double>&, const Tensor<double>&, const char*);

}  // namespace aurum::nn
