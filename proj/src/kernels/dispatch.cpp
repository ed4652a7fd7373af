#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernels_impl.hpp"
#include "mllm/kernels.hpp"

namespace mllm::kernels {

namespace {

constexpr Table kScalar{detail::dot_scalar, detail::axpy_scalar, detail::gemv_scalar,
                        detail::gemv_t_scalar};
#if MLLM_HAVE_X86
constexpr Table kAvx2{detail::dot_avx2, detail::axpy_avx2, detail::gemv_avx2, detail::gemv_t_avx2};
#endif
#if MLLM_HAVE_NEON
constexpr Table kNeon{detail::dot_neon, detail::axpy_neon, detail::gemv_neon, detail::gemv_t_neon};
#endif

std::vector<Backend> detect() {
  std::vector<Backend> out{Backend::scalar};
#if MLLM_HAVE_X86
  if (detail::cpu_has_avx2()) out.push_back(Backend::avx2);
#endif
#if MLLM_HAVE_NEON
  out.push_back(Backend::neon);
#endif
  return out;
}

const std::vector<Backend>& backends() {
  static const std::vector<Backend> list = detect();
  return list;
}

Backend initial_backend() {
  const auto& list = backends();
  if (const char* env = std::getenv("MLLM_SIMD")) {
    const std::string want(env);
    for (Backend b : list)
      if (backend_name(b) == want) return b;
  }
  return list.back();
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

const Table& active() { return table(current().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

std::span<const Backend> available_backends() { return backends(); }

Backend active_backend() { return current().load(); }

void set_backend(Backend b) {
  for (Backend have : backends())
    if (have == b) {
      current().store(b);
      return;
    }
  throw std::invalid_argument("SIMD backend not available: " + std::string(backend_name(b)));
}

const Table& table(Backend b) {
  switch (b) {
#if MLLM_HAVE_X86
    case Backend::avx2: return kAvx2;
#endif
#if MLLM_HAVE_NEON
    case Backend::neon: return kNeon;
#endif
    default: return kScalar;
  }
}

double dot(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "dot: length mismatch");
  return active().dot(x.data(), y.data(), x.size());
}

double nrm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  active().axpy(a, x.data(), y.data(), x.size());
}

void gemv(const Matrix& A, std::span<const double> x, std::span<double> y) {
  require(x.size() == A.cols() && y.size() == A.rows(), "gemv: shape mismatch");
  active().gemv(A.data(), A.rows(), A.cols(), x.data(), y.data());
}

void gemv_t(const Matrix& A, std::span<const double> x, std::span<double> y) {
  require(x.size() == A.rows() && y.size() == A.cols(), "gemv_t: shape mismatch");
  active().gemv_t(A.data(), A.rows(), A.cols(), x.data(), y.data());
}

Matrix gram(const Matrix& A) {
  const std::size_t n = A.cols();
  Matrix G(n, n);
  const Table& k = active();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double* row = A.data() + r * n;
    for (std::size_t i = 0; i < n; ++i)
      if (row[i] != 0.0) k.axpy(row[i], row, G.data() + i * n, n);
  }
  return G;
}

}  // namespace mllm::kernels
