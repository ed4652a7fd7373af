#include "kernels_impl.hpp"

namespace mllm::kernels::detail {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemv_scalar(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot_scalar(A + i * cols, x, cols);
}

void gemv_t_scalar(const double* A, std::size_t rows, std::size_t cols, const double* x,
                   double* y) {
  for (std::size_t j = 0; j < cols; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < rows; ++i) axpy_scalar(x[i], A + i * cols, y, cols);
}

}  // namespace mllm::kernels::detail
