#include "mllm/dense.hpp"

#include <algorithm>
#include <cmath>

#include "mllm/kernels.hpp"
#include "mllm/lsq.hpp"

namespace mllm {

double Matrix::norm_inf() const {
  double best = 0.0;
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += std::abs((*this)(i, j));
    best = std::max(best, s);
  }
  return best;
}

LinearResidual::LinearResidual(Matrix A, Vector c) : A_(std::move(A)), c_(std::move(c)) {
  require(A_.rows() == c_.size(), "LinearResidual: A and c disagree in row count");
}

void LinearResidual::residual(std::span<const double> x, std::span<double> out) const {
  require(x.size() == A_.cols() && out.size() == A_.rows(), "LinearResidual: shape mismatch");
  kernels::gemv(A_, x, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c_[i];
}

void LinearResidual::residual_and_jacobian(std::span<const double> x, std::span<double> out,
                                           Matrix& jacobian) const {
  residual(x, out);
  jacobian = A_;
}

}  // namespace mllm
