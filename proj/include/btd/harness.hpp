#pragma once

// Synthetic BTD data, noise at a target SNR, and accuracy metrics.

#include <cstdint>
#include <optional>
#include <vector>

#include "btd/tensor.hpp"

namespace btd {

struct ChangePoint {
  Index k_star = 0;  // 1-based index of the first slice drawn from the new model
  Index R_new = 1;
  std::vector<Index> L_new{1};

  friend bool operator==(const ChangePoint&, const ChangePoint&) = default;
};

struct GenSpec {
  Index I = 1;
  Index J = 1;
  Index K = 1;
  Index R_true = 1;
  // One entry per block, or a single entry shared by all blocks.
  std::vector<Index> L_true{1};
  std::uint64_t seed = 0;
  std::optional<ChangePoint> change_point;

  void validate() const;
  friend bool operator==(const GenSpec&, const GenSpec&) = default;
};

struct GroundTruth {
  // Factors of slices [0, split) and, with a change point, of [split, K).
  // C of each model only covers its own slice range.
  BtdFactors first;
  std::optional<BtdFactors> second;
  Index split = 0;
};

struct Generated {
  Tensor3 X;  // noiseless
  GroundTruth truth;
};

// Factors with i.i.d. standard normal entries; blocks with L_r below the
// widest block carry zero columns.
BtdFactors gaussian_btd(Dims dims, Index R, const std::vector<Index>& L_per_block, std::uint64_t seed);

Generated generate(const GenSpec& spec);

struct NoiseSpec {
  double snr_db = 10.0;
  std::uint64_t seed = 0;

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct Noisy {
  Tensor3 Y;
  double sigma = 0.0;
  double realized_snr_db = 0.0;
};

// Y = X + sigma N with N i.i.d. N(0, 1) and sigma = ||X|| / (||N|| 10^(snr/20)),
// so that 10 log10(||X||^2 / (sigma^2 ||N||^2)) equals snr_db.
Noisy add_noise(const Tensor3& X, const NoiseSpec& spec);

// ||Y - X_hat||_F / ||Y||_F
double relative_error(const Tensor3& Y, const Tensor3& X_hat);

struct Assignment {
  std::vector<Index> row_to_col;
  double cost = 0.0;
};

// Minimum-cost perfect assignment for a square cost matrix
// (shortest augmenting path, O(n^3)).
Assignment hungarian(const Matrix& cost);

struct NmseResult {
  double nmse = 0.0;
  // For each true block, the matched estimated block or -1 if none.
  std::vector<Index> assignment;
  bool rank_mismatch = false;
};

// (1/R) sum_r ||T_r - E_pi(r)||^2 / ||T_r||^2 over block tensors
// T_r = (A_r B_r^T) o c_r, minimized over block matchings pi. Missing
// estimated blocks contribute the cost of a zero block (1) and set
// rank_mismatch; surplus estimated blocks are left unmatched.
NmseResult nmse_blocks(const BtdFactors& truth, const BtdFactors& est);

// Per-slice NSE of a model trajectory: reference slices of X against
// A_k (diag(gamma_k) (x) I_L) B_k^T.
double nse(const RowMatrix& reference, const RowMatrix& model_slice);

double median(std::vector<double> values);

}  // namespace btd
