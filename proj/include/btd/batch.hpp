#pragma once

// Batch rank-revealing BTD via iteratively reweighted least squares.
//
// Minimizes
//   1/2 ||Y - sum_r (A_r B_r^T) o c_r||_F^2
//     + lambda sum_{r,l} sqrt(||a_rl||^2 + ||b_rl||^2 + eta2)
//     + mu     sum_r     sqrt(||c_r||^2 + eta2)
// by block coordinate descent over A, B, C where each block update is the
// exact minimizer of a quadratic majorizer of the smooth group penalties.

#include <cstdint>
#include <vector>

#include "btd/tensor.hpp"

namespace btd {

class Rng;

enum class SweepOrder {
  // A, then B from the new A, then C from the new A and B; reweighting
  // matrices are refreshed before each block. Monotone in the objective.
  kGaussSeidel,
  // Literal Jacobi form of the tabulated iteration: every block is updated
  // from the iteration-n factors and weights. Not guaranteed monotone.
  kTabulated,
};

struct BatchConfig {
  double lambda = 0.0;
  double mu = 0.0;
  double eta2 = 1e-8;
  Index R_ini = 1;
  Index L_ini = 1;
  int max_iters = 500;
  double rel_tol = 1e-5;
  std::uint64_t seed = 0;
  double rank_threshold = 1e-2;
  bool prune_in_loop = false;
  SweepOrder order = SweepOrder::kGaussSeidel;

  void validate() const;
  friend bool operator==(const BatchConfig&, const BatchConfig&) = default;
};

struct RankEstimate {
  Index R_hat = 0;
  std::vector<Index> L_hat;                       // per kept block
  std::vector<Index> kept_blocks;                 // original block indices
  std::vector<std::vector<Index>> kept_columns;   // within-block column indices
  bool degenerate = false;                        // all factors numerically zero
};

struct BatchResult {
  BtdFactors factors;
  RankEstimate ranks;
  std::vector<double> trace;  // objective before the first sweep and after each sweep
  int iterations = 0;
  bool converged = false;
};

double objective_batch(const Tensor3& Y, const BtdFactors& f, double lambda, double mu, double eta2);
double objective_batch(const Tensor3& Y, const BtdFactors& f, const BatchConfig& cfg);

// Diagonals of the reweighting matrices.
Vector weights_D1(const Matrix& C, double eta2);
Vector weights_D2(const Matrix& A, const Matrix& B, double eta2);

// Individual block updates (each the closed-form minimizer of its majorizer
// built at the given factors).
Matrix update_A(const Tensor3& Y, const BtdFactors& f, double lambda, double eta2);
Matrix update_B(const Tensor3& Y, const BtdFactors& f, double lambda, double eta2);
Matrix update_C(const Tensor3& Y, const BtdFactors& f, double mu, double eta2);

BtdFactors irls_sweep(const Tensor3& Y, const BtdFactors& f, const BatchConfig& cfg);

BtdFactors random_factors(Dims dims, Index L, Index R, Rng& rng);

BatchResult btd_irls(const Tensor3& Y, const BatchConfig& cfg);
BatchResult btd_irls(const Tensor3& Y, BtdFactors init, const BatchConfig& cfg);

RankEstimate estimate_ranks(const BtdFactors& f, double rank_threshold);
// Same rule driven by precomputed column norms of C (used by the streaming
// solver, which keeps only windowed energies of C).
RankEstimate estimate_ranks(const Matrix& A, const Matrix& B, const Vector& c_norms, Index L,
                            double rank_threshold);

// Drops discarded blocks and columns. Blocks keeping fewer columns than the
// widest kept block are padded with zero columns, so the result has block
// width max_r L_hat_r.
BtdFactors prune(const BtdFactors& f, const RankEstimate& est);

// Symmetric positive-definite solve of X M = G (M symmetric), returning X.
// Throws a numerical error when the Cholesky factorization fails.
Matrix spd_right_solve(const Matrix& G, const Matrix& M);
Vector spd_solve(const Matrix& M, const Vector& b);

}  // namespace btd
