#include <cmath>
#include <string>

#include "mllm/ann.hpp"

namespace mllm::ann {

void NetworkArch::validate() const {
  require(hidden >= 1, "network needs at least one hidden node");
  require(inputs >= 1, "network needs at least one input");
}

NetworkParams::NetworkParams(std::size_t hidden, std::size_t inputs)
    : hidden_(hidden), inputs_(inputs), flat_((inputs + 2) * hidden + 1, 0.0) {}

NetworkParams::NetworkParams(std::size_t hidden, std::size_t inputs, Vector flat)
    : hidden_(hidden), inputs_(inputs), flat_(std::move(flat)) {
  require(flat_.size() == (inputs + 2) * hidden + 1,
          "parameter vector has length " + std::to_string(flat_.size()) + ", expected " +
              std::to_string((inputs + 2) * hidden + 1));
}

namespace {

void check(const NetworkArch& arch, const NetworkParams& p, std::span<const double> z) {
  require(p.matches(arch), "parameters do not match the network shape");
  require(z.size() == arch.inputs, "input point has wrong dimension");
}

double pre_activation(const NetworkParams& p, std::span<const double> z, std::size_t i) {
  double a = p.b()[i];
  for (std::size_t j = 0; j < z.size(); ++j) a += p.w(j)[i] * z[j];
  return a;
}

double squared_input_weight(const NetworkParams& p, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.inputs(); ++j) s += p.w(j)[i] * p.w(j)[i];
  return s;
}

}  // namespace

double net_eval(const NetworkArch& arch, const NetworkParams& p, std::span<const double> z) {
  check(arch, p, z);
  double u = p.d();
  for (std::size_t i = 0; i < arch.hidden; ++i)
    u += p.v()[i] * activation_eval(arch.activation, 0, pre_activation(p, z, i));
  return u;
}

Vector net_grad_z(const NetworkArch& arch, const NetworkParams& p, std::span<const double> z) {
  check(arch, p, z);
  Vector g(arch.inputs, 0.0);
  for (std::size_t i = 0; i < arch.hidden; ++i) {
    const double c = p.v()[i] * activation_eval(arch.activation, 1, pre_activation(p, z, i));
    for (std::size_t j = 0; j < arch.inputs; ++j) g[j] += c * p.w(j)[i];
  }
  return g;
}

double net_laplacian_z(const NetworkArch& arch, const NetworkParams& p,
                       std::span<const double> z) {
  check(arch, p, z);
  double lap = 0.0;
  for (std::size_t i = 0; i < arch.hidden; ++i)
    lap += p.v()[i] * squared_input_weight(p, i) *
           activation_eval(arch.activation, 2, pre_activation(p, z, i));
  return lap;
}

void evaluate_point(const NetworkArch& arch, const NetworkParams& p, std::span<const double> z,
                    bool with_jacobian, PointEval& out) {
  check(arch, p, z);
  const std::size_t r = arch.hidden;
  const std::size_t n_in = arch.inputs;
  out.value = p.d();
  out.laplacian = 0.0;
  if (with_jacobian) {
    out.d_value.assign(arch.param_count(), 0.0);
    out.d_laplacian.assign(arch.param_count(), 0.0);
    out.d_value[arch.d_offset()] = 1.0;
  }
  const auto v = p.v();
  for (std::size_t i = 0; i < r; ++i) {
    const double a = pre_activation(p, z, i);
    const double wsq = squared_input_weight(p, i);
    const auto s = activation_all(arch.activation, a);
    out.value += v[i] * s[0];
    out.laplacian += v[i] * wsq * s[2];
    if (!with_jacobian) continue;

    out.d_value[arch.v_offset() + i] = s[0];
    out.d_value[arch.b_offset() + i] = v[i] * s[1];
    out.d_laplacian[arch.v_offset() + i] = wsq * s[2];
    out.d_laplacian[arch.b_offset() + i] = v[i] * wsq * s[3];
    for (std::size_t j = 0; j < n_in; ++j) {
      const double wji = p.w(j)[i];
      out.d_value[arch.w_offset(j) + i] = v[i] * s[1] * z[j];
      out.d_laplacian[arch.w_offset(j) + i] = v[i] * (2.0 * wji * s[2] + wsq * z[j] * s[3]);
    }
  }
}

Vector net_param_jacobian(const NetworkArch& arch, const NetworkParams& p,
                          std::span<const double> z, Quantity quantity) {
  PointEval e;
  evaluate_point(arch, p, z, true, e);
  return quantity == Quantity::value ? std::move(e.d_value) : std::move(e.d_laplacian);
}

}  // namespace mllm::ann
