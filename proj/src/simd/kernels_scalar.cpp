// Portable reference kernels. These define the semantics the vector variants
// are tested against.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tables.hpp"

namespace aurum::simd::detail {
namespace {

template <class T>
void gemm_ref(std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a, std::size_t lda,
              const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  std::vector<T> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), T(0));
    const T* ai = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * bp[j];
    }
    T* ci = c + i * ldc;
    for (std::size_t j = 0; j < n; ++j) ci[j] += alpha * row[j];
  }
}

template <class T>
void softmax_ref(T* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = x + r * cols;
    const T peak = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - peak);
      total += row[j];
    }
    const T inv = static_cast<T>(1.0 / total);
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
  }
}

double sum_ref(const float* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double dot_ref(const float* x, const float* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
  return s;
}

double sum_sq_diff_ref(const float* x, const float* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    s += d * d;
  }
  return s;
}

}  // namespace

const KernelTable kScalarTable{
    Isa::Scalar,     gemm_ref<float>, gemm_ref<double>, softmax_ref<float>, softmax_ref<double>,
    sum_ref,         dot_ref,         sum_sq_diff_ref,
};

}  // namespace aurum::simd::detail
