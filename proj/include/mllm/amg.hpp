#pragma once

// Algebraic coarsening of the hidden-node triples (v_i, w_i, b_i).
//
// The coupling between hidden nodes is read off the Gauss-Newton matrix
// J^T J: the diagonal blocks belonging to v, each w_j and b are normalized
// and summed into an r x r matrix A, so the three kinds of variables are
// never mixed. Ruge-Stueben coarsening of A selects the coarse nodes C, and
// direct interpolation gives P = [I; Delta] (in C-first order), R = P^T.
// Both are finally divided by their infinity norms.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "mllm/ann.hpp"
#include "mllm/dense.hpp"
#include "mllm/linsolve.hpp"

namespace mllm::amg {

/// How each Gram block F_x^T F_x is normalized before summation.
enum class BlockNorm {
  gram_inf,   // divide by ||F_x^T F_x||_inf (each term has unit norm)
  block_inf,  // divide by ||F_x||_inf of the m x r Jacobian block
};

/// A = sum over x in {v, w_1..w_N, b} of F_x^T F_x / norm(x). The column of
/// the output bias is ignored. Blocks with zero norm are skipped.
Matrix build_coupling_matrix(const Matrix& J, const ann::NetworkArch& arch,
                             BlockNorm norm = BlockNorm::gram_inf);

/// Which off-diagonal entries count as strong couplings.
enum class Strength {
  negative,  // -a_ij >= eps max_{a_ik<0} |a_ik|, plus a positive F/F pass
  absolute,  // |a_ij| >= eps max_{k!=i} |a_ik|, no second pass
};

struct Splitting {
  std::vector<std::size_t> coarse;  // sorted
  std::vector<std::size_t> fine;    // sorted
  double threshold = 0.9;           // epsilon_AMG used for strong couplings
  Strength strength = Strength::negative;
};

/// j is a strong negative coupling of i when -a_ij >= eps * max_{a_ik<0} |a_ik|.
std::vector<std::vector<std::size_t>> strong_negative(const Matrix& A, double eps);
/// j is a strong positive coupling of i when a_ij >= eps * max_{k!=i} |a_ik|.
std::vector<std::vector<std::size_t>> strong_positive(const Matrix& A, double eps);
/// j is strongly coupled to i when |a_ij| >= eps * max_{k!=i} |a_ik|.
std::vector<std::vector<std::size_t>> strong_absolute(const Matrix& A, double eps);

/// Classical first pass ordered by the importance measure |{j : i in S_j}|
/// (ties go to the lowest index). With negative strength, one more pass
/// promotes to C the largest strong positive F/F coupling of each F variable.
Splitting ruge_stuben_split(const Matrix& A, double eps_amg,
                            Strength strength = Strength::negative);

struct TransferOperators {
  Matrix P;  // r x r_c, scaled
  Matrix R;  // r_c x r, scaled
  std::vector<std::size_t> coarse;
  std::vector<std::size_t> fine;
  /// P = P_raw / p_scale, R = R_raw / r_scale, R_raw = P_raw^T.
  double p_scale = 1.0;
  double r_scale = 1.0;
  Matrix P_raw;

  std::size_t fine_size() const { return P.rows(); }
  std::size_t coarse_size() const { return P.cols(); }
  const Matrix& raw_P() const { return P_raw; }
  Matrix raw_R() const { return P_raw.transposed(); }
  /// sigma in sigma P = R^T.
  double sigma() const { return p_scale / r_scale; }

  static TransferOperators identity(std::size_t r);
};

struct InterpolationOptions {
  /// Rows without a positive C neighbour add their positive off-diagonal sum
  /// to the diagonal.
  bool lump_positive = false;
  /// F rows whose weights sum in absolute value above this bound are moved
  /// to C. Zero disables the bound.
  double max_weight = 0.0;
};

/// Direct interpolation from the strongly coupled C neighbours of every F
/// variable. F variables with no such neighbour, with a zero diagonal or
/// with weights above the bound are moved to C first.
TransferOperators build_interpolation(const Matrix& A, const Splitting& split,
                                      const InterpolationOptions& opts = {});

enum class Direction { restrict, prolong };

/// Applies R (restrict) or P (prolong) to the v block, every w_j block and
/// the b block of a flat parameter vector; the output bias is copied.
Vector apply_blockwise(const TransferOperators& ops, std::span<const double> x, Direction dir);
/// Same, adding 2 * rows * cols per block product to `counter`.
Vector apply_blockwise(const TransferOperators& ops, std::span<const double> x, Direction dir,
                       linsolve::FlopCounter& counter);

/// Coupling matrix, splitting and interpolation from the Jacobian at p0.
struct Coarsening {
  Matrix coupling;
  Splitting splitting;
  TransferOperators ops;
};
struct CoarseningOptions {
  double eps_amg = 0.9;
  BlockNorm block_norm = BlockNorm::gram_inf;
  Strength strength = Strength::negative;
  bool lump_positive = false;
  double max_weight = 0.0;
};
Coarsening coarsen(const Matrix& J, const ann::NetworkArch& arch,
                   const CoarseningOptions& opts = {});

/// Plain-text dump of A, the C/F sets and P for inspection.
void write_inspection(std::ostream& out, const Coarsening& c);

}  // namespace mllm::amg
