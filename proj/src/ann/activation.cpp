#include <cmath>
#include <stdexcept>
#include <string>

#include "mllm/ann.hpp"

namespace mllm::ann {

namespace {

// Logistic function and its derivatives written in terms of s = logistic(x),
// evaluated so neither branch overflows.
double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::array<double, 4> logistic_all(double x) {
  const double s = logistic(x);
  const double q = s * (1.0 - s);
  return {s, q, q * (1.0 - 2.0 * s), q * (1.0 - 6.0 * s + 6.0 * s * s)};
}

// tanh(c x) and derivatives in x.
std::array<double, 4> scaled_tanh_all(double c, double x) {
  const double t = std::tanh(c * x);
  const double u = 1.0 - t * t;
  return {t, c * u, -2.0 * c * c * t * u, -2.0 * c * c * c * u * (1.0 - 3.0 * t * t)};
}

}  // namespace

std::string_view to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::logistic: return "logistic";
    case ActivationKind::softplus: return "softplus";
  }
  return "unknown";
}

ActivationKind parse_activation(std::string_view name) {
  for (auto k : {ActivationKind::sigmoid, ActivationKind::tanh, ActivationKind::logistic,
                 ActivationKind::softplus})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

std::array<double, 4> activation_all(ActivationKind kind, double x) {
  switch (kind) {
    // (e^x - 1)/(e^x + 1) is tanh(x/2).
    case ActivationKind::sigmoid: return scaled_tanh_all(0.5, x);
    case ActivationKind::tanh: return scaled_tanh_all(1.0, x);
    case ActivationKind::logistic: return logistic_all(x);
    case ActivationKind::softplus: {
      // log(1 + e^x) = max(x, 0) + log1p(e^-|x|); its derivatives are the
      // logistic function and that function's derivatives.
      const auto l = logistic_all(x);
      return {std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))), l[0], l[1], l[2]};
    }
  }
  return {0.0, 0.0, 0.0, 0.0};
}

double activation_eval(ActivationKind kind, int order, double x) {
  if (order < 0 || order > 3) throw std::invalid_argument("activation order must be in 0..3");
  return activation_all(kind, x)[static_cast<std::size_t>(order)];
}

}  // namespace mllm::ann
