// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached after
// dispatch.cpp has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "tables.hpp"

namespace aurum::simd::detail {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline float hmax(__m256 v) {
  __m128 m = _mm_max_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  m = _mm_max_ps(m, _mm_movehl_ps(m, m));
  m = _mm_max_ss(m, _mm_shuffle_ps(m, m, 1));
  return _mm_cvtss_f32(m);
}

// Cephes-style expf: range reduction by ln2 split into hi/lo parts and a
// degree-6 polynomial, relative error ~2 ulp over the clamped range.
inline __m256 exp256(__m256 x) {
  const __m256 hi_clamp = _mm256_set1_ps(88.3762626647949f);
  const __m256 lo_clamp = _mm256_set1_ps(-87.3365478515625f);
  x = _mm256_min_ps(_mm256_max_ps(x, lo_clamp), hi_clamp);
  const __m256 n = _mm256_round_ps(_mm256_mul_ps(x, _mm256_set1_ps(1.44269504088896341f)),
                                   _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_ps(n, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(n, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  const __m256 x2 = _mm256_mul_ps(x, x);
  y = _mm256_fmadd_ps(y, x2, _mm256_add_ps(x, _mm256_set1_ps(1.0f)));
  const __m256i e = _mm256_slli_epi32(_mm256_add_epi32(_mm256_cvtps_epi32(n), _mm256_set1_epi32(127)), 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(e));
}

void gemm_f32(std::size_t m, std::size_t n, std::size_t k, float alpha, const float* a,
              std::size_t lda, const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  const __m256 valpha = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const float* a0 = a + (i + 0) * lda;
    const float* a1 = a + (i + 1) * lda;
    const float* a2 = a + (i + 2) * lda;
    const float* a3 = a + (i + 3) * lda;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
      __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
      __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
      __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        const float* bp = b + p * ldb + j;
        const __m256 b0 = _mm256_loadu_ps(bp);
        const __m256 b1 = _mm256_loadu_ps(bp + 8);
        __m256 av = _mm256_broadcast_ss(a0 + p);
        c00 = _mm256_fmadd_ps(av, b0, c00);
        c01 = _mm256_fmadd_ps(av, b1, c01);
        av = _mm256_broadcast_ss(a1 + p);
        c10 = _mm256_fmadd_ps(av, b0, c10);
        c11 = _mm256_fmadd_ps(av, b1, c11);
        av = _mm256_broadcast_ss(a2 + p);
        c20 = _mm256_fmadd_ps(av, b0, c20);
        c21 = _mm256_fmadd_ps(av, b1, c21);
        av = _mm256_broadcast_ss(a3 + p);
        c30 = _mm256_fmadd_ps(av, b0, c30);
        c31 = _mm256_fmadd_ps(av, b1, c31);
      }
      float* cr[4] = {c + (i + 0) * ldc + j, c + (i + 1) * ldc + j, c + (i + 2) * ldc + j,
                      c + (i + 3) * ldc + j};
      const __m256 acc[4][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}};
      for (int r = 0; r < 4; ++r) {
        _mm256_storeu_ps(cr[r], _mm256_fmadd_ps(valpha, acc[r][0], _mm256_loadu_ps(cr[r])));
        _mm256_storeu_ps(cr[r] + 8,
                         _mm256_fmadd_ps(valpha, acc[r][1], _mm256_loadu_ps(cr[r] + 8)));
      }
    }
    for (; j + 8 <= n; j += 8) {
      __m256 c0 = _mm256_setzero_ps(), c1 = _mm256_setzero_ps();
      __m256 c2 = _mm256_setzero_ps(), c3 = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256 bv = _mm256_loadu_ps(b + p * ldb + j);
        c0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a0 + p), bv, c0);
        c1 = _mm256_fmadd_ps(_mm256_broadcast_ss(a1 + p), bv, c1);
        c2 = _mm256_fmadd_ps(_mm256_broadcast_ss(a2 + p), bv, c2);
        c3 = _mm256_fmadd_ps(_mm256_broadcast_ss(a3 + p), bv, c3);
      }
      const __m256 acc[4] = {c0, c1, c2, c3};
      for (int r = 0; r < 4; ++r) {
        float* cp = c + (i + r) * ldc + j;
        _mm256_storeu_ps(cp, _mm256_fmadd_ps(valpha, acc[r], _mm256_loadu_ps(cp)));
      }
    }
    for (; j < n; ++j) {
      float s0 = 0.f, s1 = 0.f, s2 = 0.f, s3 = 0.f;
      for (std::size_t p = 0; p < k; ++p) {
        const float bv = b[p * ldb + j];
        s0 += a0[p] * bv;
        s1 += a1[p] * bv;
        s2 += a2[p] * bv;
        s3 += a3[p] * bv;
      }
      c[(i + 0) * ldc + j] += alpha * s0;
      c[(i + 1) * ldc + j] += alpha * s1;
      c[(i + 2) * ldc + j] += alpha * s2;
      c[(i + 3) * ldc + j] += alpha * s3;
    }
  }
  for (; i < m; ++i) {
    const float* ai = a + i * lda;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256 acc = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_fmadd_ps(_mm256_broadcast_ss(ai + p), _mm256_loadu_ps(b + p * ldb + j), acc);
      }
      float* cp = c + i * ldc + j;
      _mm256_storeu_ps(cp, _mm256_fmadd_ps(valpha, acc, _mm256_loadu_ps(cp)));
    }
    for (; j < n; ++j) {
      float s = 0.f;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * b[p * ldb + j];
      c[i * ldc + j] += alpha * s;
    }
  }
}

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
              std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const __m256d valpha = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d acc[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd(),
                        _mm256_setzero_pd()};
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d bv = _mm256_loadu_pd(b + p * ldb + j);
        for (int r = 0; r < 4; ++r) {
          acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + (i + r) * lda + p), bv, acc[r]);
        }
      }
      for (int r = 0; r < 4; ++r) {
        double* cp = c + (i + r) * ldc + j;
        _mm256_storeu_pd(cp, _mm256_fmadd_pd(valpha, acc[r], _mm256_loadu_pd(cp)));
      }
    }
    for (; j < n; ++j) {
      for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[(i + r) * lda + p] * b[p * ldb + j];
        c[(i + r) * ldc + j] += alpha * s;
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] += alpha * s;
    }
  }
}

void softmax_rows_f32(float* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = x + r * cols;
    float peak = row[0];
    std::size_t j = 0;
    if (cols >= 8) {
      __m256 vmax = _mm256_loadu_ps(row);
      for (j = 8; j + 8 <= cols; j += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(row + j));
      peak = hmax(vmax);
    }
    for (; j < cols; ++j) peak = std::max(peak, row[j]);

    const __m256 vpeak = _mm256_set1_ps(peak);
    __m256d total0 = _mm256_setzero_pd(), total1 = _mm256_setzero_pd();
    j = 0;
    for (; j + 8 <= cols; j += 8) {
      const __m256 e = exp256(_mm256_sub_ps(_mm256_loadu_ps(row + j), vpeak));
      _mm256_storeu_ps(row + j, e);
      total0 = _mm256_add_pd(total0, _mm256_cvtps_pd(_mm256_castps256_ps128(e)));
      total1 = _mm256_add_pd(total1, _mm256_cvtps_pd(_mm256_extractf128_ps(e, 1)));
    }
    double total = hsum(_mm256_add_pd(total0, total1));
    for (; j < cols; ++j) {
      row[j] = std::exp(row[j] - peak);
      total += row[j];
    }
    const __m256 inv = _mm256_set1_ps(static_cast<float>(1.0 / total));
    j = 0;
    for (; j + 8 <= cols; j += 8) _mm256_storeu_ps(row + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), inv));
    for (; j < cols; ++j) row[j] *= static_cast<float>(1.0 / total);
  }
}

void softmax_rows_f64(double* x, std::size_t rows, std::size_t cols) {
  // Only the gradient-check path runs in double; libm exp keeps it exact.
  kScalarTable.softmax_rows_f64(x, rows, cols);
}

double sum_f32(const float* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot_f32(const float* x, const float* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 vy = _mm256_loadu_ps(y + i);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(vx)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(vy)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1)), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
  return s;
}

double sum_sq_diff_f32(const float* x, const float* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 vy = _mm256_loadu_ps(y + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(vx)),
                                     _mm256_cvtps_pd(_mm256_castps256_ps128(vy)));
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)),
                                     _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1)));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    s += d * d;
  }
  return s;
}

}  // namespace

const KernelTable kAvx2Table{
    Isa::Avx2, gemm_f32, gemm_f64, softmax_rows_f32, softmax_rows_f64,
    sum_f32,   dot_f32,  sum_sq_diff_f32,
};

}  // namespace aurum::simd::detail
