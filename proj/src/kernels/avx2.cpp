#include "kernels_impl.hpp"

#if MLLM_HAVE_X86

#include <immintrin.h>

#define MLLM_AVX2 __attribute__((target("avx2,fma")))

namespace mllm::kernels::detail {

namespace {

MLLM_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

bool cpu_has_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

MLLM_AVX2 double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd();
  __m256d a3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
    a2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), a2);
    a3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), a3);
  }
  for (; i + 4 <= n; i += 4)
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

MLLM_AVX2 void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

MLLM_AVX2 void gemv_avx2(const double* A, std::size_t rows, std::size_t cols, const double* x,
                         double* y) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot_avx2(A + i * cols, x, cols);
}

// Four rows per sweep so each load of y feeds four FMAs.
MLLM_AVX2 void gemv_t_avx2(const double* A, std::size_t rows, std::size_t cols, const double* x,
                           double* y) {
  for (std::size_t j = 0; j < cols; ++j) y[j] = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= rows; i += 4) {
    const double* r0 = A + i * cols;
    const double* r1 = r0 + cols;
    const double* r2 = r1 + cols;
    const double* r3 = r2 + cols;
    const __m256d x0 = _mm256_set1_pd(x[i]);
    const __m256d x1 = _mm256_set1_pd(x[i + 1]);
    const __m256d x2 = _mm256_set1_pd(x[i + 2]);
    const __m256d x3 = _mm256_set1_pd(x[i + 3]);
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      __m256d acc = _mm256_loadu_pd(y + j);
      acc = _mm256_fmadd_pd(x0, _mm256_loadu_pd(r0 + j), acc);
      acc = _mm256_fmadd_pd(x1, _mm256_loadu_pd(r1 + j), acc);
      acc = _mm256_fmadd_pd(x2, _mm256_loadu_pd(r2 + j), acc);
      acc = _mm256_fmadd_pd(x3, _mm256_loadu_pd(r3 + j), acc);
      _mm256_storeu_pd(y + j, acc);
    }
    for (; j < cols; ++j)
      y[j] += x[i] * r0[j] + x[i + 1] * r1[j] + x[i + 2] * r2[j] + x[i + 3] * r3[j];
  }
  for (; i < rows; ++i) axpy_avx2(x[i], A + i * cols, y, cols);
}

}  // namespace mllm::kernels::detail

#endif
