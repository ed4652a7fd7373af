#include "mllm/amg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "mllm/kernels.hpp"

namespace mllm::amg {

namespace {

Matrix extract_block(const Matrix& J, std::size_t offset, std::size_t width) {
  Matrix B(J.rows(), width);
  for (std::size_t i = 0; i < J.rows(); ++i)
    for (std::size_t k = 0; k < width; ++k) B(i, k) = J(i, offset + k);
  return B;
}

}  // namespace

Matrix build_coupling_matrix(const Matrix& J, const ann::NetworkArch& arch, BlockNorm norm) {
  arch.validate();
  require(J.cols() == arch.param_count(), "Jacobian column count does not match the network");
  const std::size_t r = arch.hidden;
  std::vector<std::size_t> offsets{arch.v_offset()};
  for (std::size_t j = 0; j < arch.inputs; ++j) offsets.push_back(arch.w_offset(j));
  offsets.push_back(arch.b_offset());

  Matrix A(r, r);
  for (std::size_t off : offsets) {
    const Matrix block = extract_block(J, off, r);
    const Matrix G = kernels::gram(block);
    const double scale = norm == BlockNorm::gram_inf ? G.norm_inf() : block.norm_inf();
    if (!(scale > 0.0)) continue;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t k = 0; k < r; ++k) A(i, k) += G(i, k) / scale;
  }
  return A;
}

std::vector<std::vector<std::size_t>> strong_negative(const Matrix& A, double eps) {
  const std::size_t r = A.rows();
  std::vector<std::vector<std::size_t>> S(r);
  for (std::size_t i = 0; i < r; ++i) {
    double most_negative = 0.0;
    for (std::size_t k = 0; k < r; ++k)
      if (k != i && A(i, k) < 0.0) most_negative = std::max(most_negative, -A(i, k));
    if (most_negative == 0.0) continue;
    for (std::size_t j = 0; j < r; ++j)
      if (j != i && A(i, j) < 0.0 && -A(i, j) >= eps * most_negative) S[i].push_back(j);
  }
  return S;
}

std::vector<std::vector<std::size_t>> strong_positive(const Matrix& A, double eps) {
  const std::size_t r = A.rows();
  std::vector<std::vector<std::size_t>> S(r);
  for (std::size_t i = 0; i < r; ++i) {
    double largest = 0.0;
    for (std::size_t k = 0; k < r; ++k)
      if (k != i) largest = std::max(largest, std::abs(A(i, k)));
    if (largest == 0.0) continue;
    for (std::size_t j = 0; j < r; ++j)
      if (j != i && A(i, j) > 0.0 && A(i, j) >= eps * largest) S[i].push_back(j);
  }
  return S;
}

std::vector<std::vector<std::size_t>> strong_absolute(const Matrix& A, double eps) {
  const std::size_t r = A.rows();
  std::vector<std::vector<std::size_t>> S(r);
  for (std::size_t i = 0; i < r; ++i) {
    double largest = 0.0;
    for (std::size_t k = 0; k < r; ++k)
      if (k != i) largest = std::max(largest, std::abs(A(i, k)));
    if (largest == 0.0) continue;
    for (std::size_t j = 0; j < r; ++j)
      if (j != i && A(i, j) != 0.0 && std::abs(A(i, j)) >= eps * largest) S[i].push_back(j);
  }
  return S;
}

namespace {

enum class Mark : unsigned char { unassigned, coarse, fine };

Splitting collect(const std::vector<Mark>& mark, double eps, Strength strength) {
  Splitting s;
  s.threshold = eps;
  s.strength = strength;
  for (std::size_t i = 0; i < mark.size(); ++i)
    (mark[i] == Mark::coarse ? s.coarse : s.fine).push_back(i);
  return s;
}

}  // namespace

Splitting ruge_stuben_split(const Matrix& A, double eps_amg, Strength strength) {
  require(A.rows() == A.cols() && A.rows() >= 1, "coupling matrix must be square and nonempty");
  require(eps_amg > 0.0 && eps_amg < 1.0, "strength threshold must lie in (0,1)");
  const std::size_t r = A.rows();
  const auto S = strength == Strength::negative ? strong_negative(A, eps_amg)
                                                : strong_absolute(A, eps_amg);
  std::vector<std::vector<std::size_t>> ST(r);  // ST[i] = {j : i in S[j]}
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t i : S[j]) ST[i].push_back(j);

  std::vector<long> measure(r);
  for (std::size_t i = 0; i < r; ++i) measure[i] = static_cast<long>(ST[i].size());
  std::vector<Mark> mark(r, Mark::unassigned);

  for (std::size_t assigned = 0; assigned < r;) {
    std::size_t pick = r;
    for (std::size_t i = 0; i < r; ++i)
      if (mark[i] == Mark::unassigned && (pick == r || measure[i] > measure[pick])) pick = i;
    mark[pick] = Mark::coarse;
    ++assigned;
    for (std::size_t j : ST[pick]) {
      if (mark[j] != Mark::unassigned) continue;
      mark[j] = Mark::fine;
      ++assigned;
      for (std::size_t k : S[j])
        if (mark[k] == Mark::unassigned) ++measure[k];
    }
    for (std::size_t j : S[pick])
      if (mark[j] == Mark::unassigned) --measure[j];
  }

  if (strength == Strength::absolute) return collect(mark, eps_amg, strength);

  // Strong positive F/F couplings: the largest one becomes C. One pass.
  const auto Spos = strong_positive(A, eps_amg);
  for (std::size_t i = 0; i < r; ++i) {
    if (mark[i] != Mark::fine) continue;
    std::size_t best = r;
    for (std::size_t j : Spos[i])
      if (mark[j] == Mark::fine && (best == r || A(i, j) > A(i, best))) best = j;
    if (best != r) mark[best] = Mark::coarse;
  }
  return collect(mark, eps_amg, strength);
}

TransferOperators TransferOperators::identity(std::size_t r) {
  TransferOperators ops;
  ops.P = Matrix::identity(r);
  ops.R = Matrix::identity(r);
  ops.P_raw = ops.P;
  for (std::size_t i = 0; i < r; ++i) ops.coarse.push_back(i);
  return ops;
}

TransferOperators build_interpolation(const Matrix& A, const Splitting& split,
                                      const InterpolationOptions& opts) {
  const std::size_t r = A.rows();
  require(A.cols() == r, "coupling matrix must be square");
  require(split.coarse.size() + split.fine.size() == r, "splitting does not cover the matrix");
  std::vector<std::vector<std::size_t>> Sneg, Spos;
  if (split.strength == Strength::negative) {
    Sneg = strong_negative(A, split.threshold);
    Spos = strong_positive(A, split.threshold);
  } else {
    const auto S = strong_absolute(A, split.threshold);
    Sneg.resize(r);
    Spos.resize(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j : S[i]) (A(i, j) < 0.0 ? Sneg : Spos)[i].push_back(j);
  }

  std::vector<Mark> mark(r, Mark::unassigned);
  for (std::size_t i : split.coarse) mark.at(i) = Mark::coarse;
  for (std::size_t i : split.fine) mark.at(i) = Mark::fine;
  for (Mark m : mark) require(m != Mark::unassigned, "splitting sets overlap");

  auto has_coarse = [&](const std::vector<std::size_t>& set) {
    return std::any_of(set.begin(), set.end(), [&](std::size_t k) { return mark[k] == Mark::coarse; });
  };
  using Weights = std::vector<std::pair<std::size_t, double>>;
  auto interpolation_row = [&](std::size_t i) {
    double all_neg = 0.0, all_pos = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
      if (j == i) continue;
      all_neg += std::min(A(i, j), 0.0);
      all_pos += std::max(A(i, j), 0.0);
    }
    double interp_neg = 0.0, interp_pos = 0.0;
    for (std::size_t k : Sneg[i])
      if (mark[k] == Mark::coarse) interp_neg += A(i, k);
    for (std::size_t k : Spos[i])
      if (mark[k] == Mark::coarse) interp_pos += A(i, k);
    const double alpha = interp_neg != 0.0 ? all_neg / interp_neg : 0.0;
    double beta = 0.0;
    double diag = A(i, i);
    // Without positive C neighbours the positive couplings go to the diagonal.
    if (interp_pos != 0.0)
      beta = all_pos / interp_pos;
    else if (opts.lump_positive)
      diag += all_pos;
    Weights w;
    for (std::size_t k : Sneg[i])
      if (mark[k] == Mark::coarse) w.emplace_back(k, -alpha * A(i, k) / diag);
    for (std::size_t k : Spos[i])
      if (mark[k] == Mark::coarse) w.emplace_back(k, -beta * A(i, k) / diag);
    return w;
  };
  auto too_large = [&](const Weights& w) {
    if (!(opts.max_weight > 0.0)) return false;
    double sum = 0.0;
    for (const auto& [k, v] : w) sum += std::abs(v);
    return sum > opts.max_weight;
  };

  // Promotions only add C variables; repeat until no F row needs one.
  std::vector<Weights> rows(r);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < r; ++i) {
      if (mark[i] != Mark::fine) continue;
      if (A(i, i) == 0.0 || (!has_coarse(Sneg[i]) && !has_coarse(Spos[i]))) {
        mark[i] = Mark::coarse;
        changed = true;
      }
    }
    if (changed) continue;
    for (std::size_t i = 0; i < r; ++i) {
      if (mark[i] != Mark::fine) continue;
      rows[i] = interpolation_row(i);
      if (too_large(rows[i])) {
        mark[i] = Mark::coarse;
        changed = true;
      }
    }
  }
  const Splitting final_split = collect(mark, split.threshold, split.strength);

  TransferOperators ops;
  ops.coarse = final_split.coarse;
  ops.fine = final_split.fine;
  const std::size_t rc = ops.coarse.size();
  std::vector<std::size_t> column(r, rc);
  for (std::size_t c = 0; c < rc; ++c) column[ops.coarse[c]] = c;

  Matrix P(r, rc);
  for (std::size_t i : ops.coarse) P(i, column[i]) = 1.0;
  for (std::size_t i : ops.fine)
    for (const auto& [k, v] : rows[i]) P(i, column[k]) = v;

  ops.P_raw = P;
  ops.p_scale = P.norm_inf();
  Matrix R = P.transposed();
  ops.r_scale = R.norm_inf();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t c = 0; c < rc; ++c) {
      R(c, i) /= ops.r_scale;
      P(i, c) /= ops.p_scale;
    }
  ops.P = std::move(P);
  ops.R = std::move(R);
  return ops;
}

Vector apply_blockwise(const TransferOperators& ops, std::span<const double> x, Direction dir,
                       linsolve::FlopCounter& counter) {
  const Matrix& M = dir == Direction::restrict ? ops.R : ops.P;
  const std::size_t src = M.cols();
  const std::size_t dst = M.rows();
  require(src >= 1 && x.size() >= 3 * src + 1 && (x.size() - 1) % src == 0,
          "vector length does not match the transfer operator layout");
  const std::size_t blocks = (x.size() - 1) / src;  // N + 2
  Vector out(blocks * dst + 1);
  for (std::size_t b = 0; b < blocks; ++b) {
    kernels::gemv(M, x.subspan(b * src, src), std::span<double>(out).subspan(b * dst, dst));
    counter.add_matvec(M.rows(), M.cols());
  }
  out.back() = x.back();
  return out;
}

Vector apply_blockwise(const TransferOperators& ops, std::span<const double> x, Direction dir) {
  linsolve::FlopCounter unused;
  return apply_blockwise(ops, x, dir, unused);
}

Coarsening coarsen(const Matrix& J, const ann::NetworkArch& arch, const CoarseningOptions& opts) {
  Coarsening c;
  c.coupling = build_coupling_matrix(J, arch, opts.block_norm);
  c.splitting = ruge_stuben_split(c.coupling, opts.eps_amg, opts.strength);
  c.ops = build_interpolation(c.coupling, c.splitting, {opts.lump_positive, opts.max_weight});
  return c;
}

void write_inspection(std::ostream& out, const Coarsening& c) {
  const auto old = out.precision(17);
  auto write_matrix = [&](const char* name, const Matrix& M) {
    out << "# " << name << " " << M.rows() << " " << M.cols() << "\n";
    for (std::size_t i = 0; i < M.rows(); ++i) {
      for (std::size_t j = 0; j < M.cols(); ++j) out << (j ? " " : "") << M(i, j);
      out << "\n";
    }
  };
  auto write_set = [&](const char* name, const std::vector<std::size_t>& s) {
    out << "# " << name << " " << s.size() << "\n";
    for (std::size_t k = 0; k < s.size(); ++k) out << (k ? " " : "") << s[k];
    out << "\n";
  };
  write_matrix("A", c.coupling);
  write_set("C", c.ops.coarse);
  write_set("F", c.ops.fine);
  out << "# p_scale " << c.ops.p_scale << "\n# r_scale " << c.ops.r_scale << "\n";
  write_matrix("P", c.ops.P);
  out.precision(old);
}

}  // namespace mllm::amg
