#pragma once

// One-hidden-layer feedforward network
//
//   u(p, z) = sum_i v_i * act(<w_i, z> + b_i) + d,   z in R^N,
//
// with closed-form derivatives in z (gradient, Laplacian) and in p.
// Parameters are stored flat as [v | w_1 | ... | w_N | b | d], where w_j
// holds the weights leaving input node j, one per hidden node.

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "mllm/dense.hpp"

namespace mllm::ann {

enum class ActivationKind { sigmoid, tanh, logistic, softplus };

std::string_view to_string(ActivationKind k);
/// Throws std::invalid_argument for unknown names.
ActivationKind parse_activation(std::string_view name);

/// Derivative of order 0..3 of the activation at x.
///
/// sigmoid  (e^x - 1) / (e^x + 1)
/// tanh     (e^2x - 1) / (e^2x + 1)
/// logistic e^x / (e^x + 1)
/// softplus log(e^x + 1)
double activation_eval(ActivationKind kind, int order, double x);

/// All four derivative orders at once; cheaper than four separate calls.
std::array<double, 4> activation_all(ActivationKind kind, double x);

struct NetworkArch {
  std::size_t hidden = 1;  // r
  std::size_t inputs = 1;  // N
  ActivationKind activation = ActivationKind::tanh;

  std::size_t param_count() const { return (inputs + 2) * hidden + 1; }

  // Offsets into the flat parameter vector.
  std::size_t v_offset() const { return 0; }
  std::size_t w_offset(std::size_t j) const { return (1 + j) * hidden; }
  std::size_t b_offset() const { return (1 + inputs) * hidden; }
  std::size_t d_offset() const { return (2 + inputs) * hidden; }

  void validate() const;
};

/// Stacked weights and biases, the optimization variable.
class NetworkParams {
 public:
  NetworkParams() = default;
  /// Zero-initialized parameters for the given shape.
  NetworkParams(std::size_t hidden, std::size_t inputs);
  /// Wraps a flat vector; throws std::invalid_argument if the length is not
  /// (inputs + 2) * hidden + 1.
  NetworkParams(std::size_t hidden, std::size_t inputs, Vector flat);

  std::size_t hidden() const { return hidden_; }
  std::size_t inputs() const { return inputs_; }
  std::size_t size() const { return flat_.size(); }

  std::span<double> v() { return {flat_.data(), hidden_}; }
  std::span<const double> v() const { return {flat_.data(), hidden_}; }
  std::span<double> w(std::size_t j) { return {flat_.data() + (1 + j) * hidden_, hidden_}; }
  std::span<const double> w(std::size_t j) const {
    return {flat_.data() + (1 + j) * hidden_, hidden_};
  }
  std::span<double> b() { return {flat_.data() + (1 + inputs_) * hidden_, hidden_}; }
  std::span<const double> b() const { return {flat_.data() + (1 + inputs_) * hidden_, hidden_}; }
  double& d() { return flat_.back(); }
  double d() const { return flat_.back(); }

  const Vector& flat() const { return flat_; }
  Vector& flat() { return flat_; }

  bool matches(const NetworkArch& arch) const {
    return hidden_ == arch.hidden && inputs_ == arch.inputs;
  }

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;

 private:
  std::size_t hidden_ = 0;
  std::size_t inputs_ = 0;
  Vector flat_;
};

enum class Quantity { value, laplacian };

double net_eval(const NetworkArch& arch, const NetworkParams& p, std::span<const double> z);
Vector net_grad_z(const NetworkArch& arch, const NetworkParams& p, std::span<const double> z);
double net_laplacian_z(const NetworkArch& arch, const NetworkParams& p, std::span<const double> z);
/// Gradient with respect to p of net_eval (value) or net_laplacian_z
/// (laplacian), in the flat parameter ordering.
Vector net_param_jacobian(const NetworkArch& arch, const NetworkParams& p,
                          std::span<const double> z, Quantity quantity);

/// Everything the residual assembly needs at one point, from a single sweep
/// over the hidden nodes.
struct PointEval {
  double value = 0.0;
  double laplacian = 0.0;
  Vector d_value;      // d value / dp
  Vector d_laplacian;  // d laplacian / dp
};

/// Fills `out` for point z. When `with_jacobian` is false only value and
/// laplacian are computed. `out` is reused across calls to avoid allocation.
void evaluate_point(const NetworkArch& arch, const NetworkParams& p, std::span<const double> z,
                    bool with_jacobian, PointEval& out);

}  // namespace mllm::ann
