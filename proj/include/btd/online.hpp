#pragma once

// Streaming rank-revealing BTD: exponentially weighted recursive least
// squares over frontal slices arriving one at a time.
//
// Per slice Y_k (I x J), with y_k = vec(Y_k):
//   gamma = (S^T S + mu D1)^{-1} S^T y_k              S built from A, B
//   V_A <- xi V_A + Bg^T Bg,  G_A <- xi G_A + Y_k Bg,  Bg = B (diag(gamma) (x) I_L)
//   A   <- G_A (V_A + lambda D2)^{-1}
//   V_B <- xi V_B + Ag^T Ag,  G_B <- xi G_B + Y_k^T Ag, Ag = A (diag(gamma) (x) I_L)
//   B   <- G_B (V_B + lambda D2)^{-1}
// D1 and D2 are evaluated once at step entry. Past rows of C are never
// revisited; only their exponentially windowed column energies are kept.

#include <cstdint>
#include <optional>
#include <vector>

#include "btd/batch.hpp"
#include "btd/tensor.hpp"

namespace btd {

struct OnlineConfig {
  double xi = 1.0;
  double lambda = 0.0;
  double mu = 0.0;
  double eta2 = 1e-8;
  Index warmup_slices = 50;
  Index R_ini = 1;
  Index L_ini = 1;
  double rank_threshold = 1e-2;
  // When false, A and B are held at their warm-start values; V and G keep
  // accumulating. Used to isolate the recursion algebra.
  bool update_factors = true;

  void validate() const;
  friend bool operator==(const OnlineConfig&, const OnlineConfig&) = default;
};

struct OnlineState {
  Matrix A;    // I x LR
  Matrix B;    // J x LR
  Matrix V_A;  // LR x LR
  Matrix G_A;  // I x LR
  Matrix V_B;  // LR x LR
  Matrix G_B;  // J x LR
  // xi * ||Xi^{1/2} c_r||^2 over the slices seen so far, i.e. already scaled
  // for the next step's D1.
  Vector c_energy;
  Index L = 0;
  Index R = 0;
  std::int64_t k = 0;  // slices consumed, warm-up included

  Index dim_i() const { return A.rows(); }
  Index dim_j() const { return B.rows(); }

  void validate() const;
  // Stored scalars plus the IJ x R workspace for S.
  Index scalar_count() const;
};

// Closed form of OnlineState::scalar_count(): 2(I+J)LR + 2(LR)^2 + R + IJR.
Index online_scalar_count(Index I, Index J, Index L, Index R);

struct StepMetrics {
  std::int64_t k = 0;
  double nse = 0.0;
  double seconds = 0.0;
  RankEstimate ranks;
};

OnlineState init_online(const Tensor3& Y_warm, const BtdFactors& batch_result, const OnlineConfig& cfg);

// Regularized least-squares estimate of the new row of C.
Vector update_gamma(const OnlineState& state, const OnlineConfig& cfg, const RowMatrix& y_slice);

void recurse_c_energy(OnlineState& state, double xi, const Vector& gamma);

// D2 is the step-entry reweighting diagonal (weights_D2 of the entry A, B).
void recurse_A_side(OnlineState& state, const OnlineConfig& cfg, const Vector& gamma,
                    const RowMatrix& y_slice, const Vector& D2);
void recurse_B_side(OnlineState& state, const OnlineConfig& cfg, const Vector& gamma,
                    const RowMatrix& y_slice, const Vector& D2);

struct StepResult {
  Vector gamma;
  StepMetrics metrics;
};

// One full recursion. NSE is measured against `reference` when given
// (e.g. the noiseless slice), otherwise against y_slice.
StepResult step(OnlineState& state, const OnlineConfig& cfg, const RowMatrix& y_slice,
                const RowMatrix* reference = nullptr);

// Per-slice normalized squared error ||X - A (diag(gamma) (x) I_L) B^T||^2 / ||X||^2.
double slice_nse(const RowMatrix& reference, const Matrix& A, const Matrix& B, const Vector& gamma,
                 Index L);

// Ranks from A, B column energies and the windowed C energies.
RankEstimate online_ranks(const OnlineState& state, double rank_threshold);

// Slice ingestion front end owning the configuration and state.
class OnlineSolver {
 public:
  OnlineSolver(OnlineConfig cfg, OnlineState state);
  // Warm start: batch-fit the first warmup_slices slices, then initialize.
  static OnlineSolver warm_start(const Tensor3& Y_warm, const BatchConfig& batch_cfg,
                                 const OnlineConfig& cfg, BatchResult* batch_out = nullptr);

  StepMetrics push(const RowMatrix& y_slice, const RowMatrix* reference = nullptr);

  const OnlineConfig& config() const { return cfg_; }
  const OnlineState& state() const { return state_; }
  const Vector& last_gamma() const { return gamma_; }

 private:
  OnlineConfig cfg_;
  OnlineState state_;
  Vector gamma_;
};

}  // namespace btd
