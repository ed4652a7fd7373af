#pragma once

#include <cstddef>

#if defined(__x86_64__) || defined(_M_X64)
#define MLLM_HAVE_X86 1
#else
#define MLLM_HAVE_X86 0
#endif

#if defined(__aarch64__) && defined(__ARM_NEON)
#define MLLM_HAVE_NEON 1
#else
#define MLLM_HAVE_NEON 0
#endif

namespace mllm::kernels::detail {

double dot_scalar(const double* x, const double* y, std::size_t n);
void axpy_scalar(double a, const double* x, double* y, std::size_t n);
void gemv_scalar(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
void gemv_t_scalar(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);

#if MLLM_HAVE_X86
double dot_avx2(const double* x, const double* y, std::size_t n);
void axpy_avx2(double a, const double* x, double* y, std::size_t n);
void gemv_avx2(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
void gemv_t_avx2(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
bool cpu_has_avx2();
#endif

#if MLLM_HAVE_NEON
double dot_neon(const double* x, const double* y, std::size_t n);
void axpy_neon(double a, const double* x, double* y, std::size_t n);
void gemv_neon(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
void gemv_t_neon(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
#endif

}  // namespace mllm::kernels::detail
