// Standard-form semidefinite programming:
//
//   minimize   sum_b C_b . X_b
//   subject to sum_b A_kb . X_b = b_k,   X_b >= 0 (PSD) for every block.
//
// Coefficient matrices are symmetric and given by their upper triangle in the
// SDPA convention: an entry (block, i, j, v) with i < j stands for both (i, j)
// and (j, i), so it contributes 2 v X_ij to the inner product.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddclf {

enum class BlockKind { psd, diagonal };

struct SdpBlock {
  BlockKind kind = BlockKind::psd;
  int size = 0;
};

struct SdpEntry {
  int block = 0;
  int row = 0;  // row <= col
  int col = 0;
  double value = 0.0;
};

struct SdpProblem {
  std::vector<SdpBlock> blocks;
  std::vector<SdpEntry> objective;
  std::vector<std::vector<SdpEntry>> constraints;
  std::vector<double> rhs;

  int add_block(BlockKind kind, int size);
  int add_constraint(std::vector<SdpEntry> entries, double b);
  int num_constraints() const { return static_cast<int>(constraints.size()); }
  /// Sum of block sizes (the barrier parameter scale).
  int order() const;
  /// Throws std::invalid_argument on malformed data.
  void validate() const;
};

enum class SdpStatus { optimal, feasible, infeasible, max_iterations, numerical_failure };
std::string to_string(SdpStatus status);

struct SdpOptions {
  double tol = 1e-8;
  int max_iter = 100;
  double infeasibility_tol = 1e-8;
  double regularization = 1e-10;
  double step_fraction = 0.95;
  bool verbose = false;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::numerical_failure;
  /// Per block: dense symmetric matrix for psd blocks, a size x 1 column of
  /// diagonal values for diagonal blocks.
  std::vector<Eigen::MatrixXd> X;
  std::vector<Eigen::MatrixXd> S;
  Eigen::VectorXd y;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;  // ||b - A(X)||_inf / (1 + ||b||_inf)
  double dual_residual = 0.0;    // ||C - A*y - S||_F / (1 + ||C||_F)
  double gap = 0.0;              // |pobj - dobj| / (1 + |pobj| + |dobj|)
  int iterations = 0;
  int removed_constraints = 0;   // linearly dependent rows dropped in presolve

  bool ok() const { return status == SdpStatus::optimal || status == SdpStatus::feasible; }
};

/// Infeasible-start primal-dual interior-point method (HKM direction with
/// Mehrotra predictor-corrector). A problem with an all-zero objective is a
/// feasibility problem and stops at the first iterate meeting the primal
/// residual tolerance.
SdpSolution solve_sdp(const SdpProblem& problem, const SdpOptions& options = {});

/// Plain-text sparse dump: a header with constraint and block counts, the
/// block sizes (negative for diagonal blocks), the right-hand side, then
/// `constraint block row col value` lines with constraint 0 the objective.
/// Indices in the entry lines are 1-based.
void write_sdpa(const SdpProblem& problem, std::ostream& os);

}  // namespace ddclf
