#pragma once

// Data-parallel inner loops used by the solvers. Each kernel exists as a
// portable scalar reference and as SIMD variants (AVX2+FMA on x86-64, NEON
// on AArch64). The active backend is picked once at startup from the CPU
// features and can be overridden with set_backend() or the MLLM_SIMD
// environment variable ("scalar", "avx2", "neon").
//
// SIMD variants reassociate sums, so results agree with the scalar reference
// to rounding, not bit-for-bit. A given backend is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

#include "mllm/dense.hpp"

namespace mllm::kernels {

enum class Backend { scalar, avx2, neon };

std::string_view backend_name(Backend b);

/// Backends usable on this machine, scalar first.
std::span<const Backend> available_backends();

Backend active_backend();

/// Switches the process-wide backend. Throws std::invalid_argument if the
/// backend is not available on this CPU.
void set_backend(Backend b);

/// Raw kernel table. Lengths are element counts; matrices are row-major.
struct Table {
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = A x, A is rows x cols.
  void (*gemv)(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
  // y = A^T x, A is rows x cols.
  void (*gemv_t)(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
};

const Table& table(Backend b);

// Convenience wrappers over the active backend.

double dot(std::span<const double> x, std::span<const double> y);
double nrm2(std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);
void gemv(const Matrix& A, std::span<const double> x, std::span<double> y);
void gemv_t(const Matrix& A, std::span<const double> x, std::span<double> y);

/// G = A^T A (cols x cols), accumulated row by row with axpy.
Matrix gram(const Matrix& A);

}  // namespace mllm::kernels
