#include "btd/online.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "btd/error.hpp"
#include "flush_denormals.hpp"

namespace btd {

void OnlineConfig::validate() const {
  if (!(xi > 0.0 && xi <= 1.0)) throw_config("forgetting factor xi must lie in (0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw_config("lambda must be finite and >= 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw_config("mu must be finite and >= 0");
  if (!(eta2 > 0.0)) throw_config("eta2 must be > 0");
  if (warmup_slices <= 0) throw_config("warmup_slices must be positive");
  if (R_ini <= 0 || L_ini <= 0) throw_config("R_ini and L_ini must be positive");
  if (!(rank_threshold > 0.0 && rank_threshold < 1.0)) {
    throw_config("rank_threshold must lie in (0, 1)");
  }
}

void OnlineState::validate() const {
  const Index LR = L * R;
  if (L <= 0 || R <= 0) throw_shape("online state: L and R must be positive");
  if (A.cols() != LR || B.cols() != LR || G_A.cols() != LR || G_B.cols() != LR) {
    throw_shape("online state: factor and accumulator widths must be L*R");
  }
  if (G_A.rows() != A.rows() || G_B.rows() != B.rows()) throw_shape("online state: G row counts");
  if (V_A.rows() != LR || V_A.cols() != LR || V_B.rows() != LR || V_B.cols() != LR) {
    throw_shape("online state: V_A and V_B must be LR x LR");
  }
  if (c_energy.size() != R) throw_shape("online state: c_energy must have R entries");
}

Index online_scalar_count(Index I, Index J, Index L, Index R) {
  const Index LR = L * R;
  return 2 * (I + J) * LR + 2 * LR * LR + R + I * J * R;
}

Index OnlineState::scalar_count() const {
  const Index stored = A.size() + B.size() + V_A.size() + G_A.size() + V_B.size() + G_B.size() +
                       c_energy.size();
  const Index s_workspace = A.rows() * B.rows() * R;
  return stored + s_workspace;
}

OnlineState init_online(const Tensor3& Y_warm, const BtdFactors& batch_result, const OnlineConfig& cfg) {
  cfg.validate();
  batch_result.validate();
  if (batch_result.dims() != Y_warm.dims()) {
    throw_shape("init_online: batch factors do not match the warm-up tensor");
  }
  const Index K = Y_warm.dim_k();
  const Index L = batch_result.L;

  // Exponential window over the warm-up slices, newest slice weighted 1.
  Vector w(K);
  for (Index k = 0; k < K; ++k) w(k) = std::pow(cfg.xi, static_cast<double>(K - 1 - k));
  const Matrix Cw = w.asDiagonal() * batch_result.C;
  const Matrix window_gram = expand_blocks(batch_result.C.transpose() * Cw, L);

  OnlineState s;
  s.L = L;
  s.R = batch_result.R;
  s.A = batch_result.A;
  s.B = batch_result.B;
  s.V_A = (s.B.transpose() * s.B).cwiseProduct(window_gram);
  s.G_A = mttkrp_mode1(Y_warm, s.B, Cw, L);
  s.V_B = (s.A.transpose() * s.A).cwiseProduct(window_gram);
  s.G_B = mttkrp_mode2(Y_warm, s.A, Cw, L);
  s.c_energy = cfg.xi * (batch_result.C.array().square().colwise() * w.array()).colwise().sum().transpose();
  s.k = K;
  return s;
}

Vector update_gamma(const OnlineState& state, const OnlineConfig& cfg, const RowMatrix& y_slice) {
  if (y_slice.rows() != state.dim_i() || y_slice.cols() != state.dim_j()) {
    throw_shape("slice must be I x J");
  }
  if (!y_slice.allFinite()) throw_numerical("slice contains non-finite values");
  const Matrix S = build_S(state.A, state.B, state.L, state.R);
  Matrix M = s_gram(state.A, state.B, state.L, state.R);
  M.diagonal() += cfg.mu * (state.c_energy.array() + cfg.eta2).rsqrt().matrix();
  const Eigen::Map<const Vector> y(y_slice.data(), y_slice.size());
  return spd_solve(M, S.transpose() * y);
}

void recurse_c_energy(OnlineState& state, double xi, const Vector& gamma) {
  state.c_energy = xi * (state.c_energy + gamma.cwiseAbs2());
}

void recurse_A_side(OnlineState& state, const OnlineConfig& cfg, const Vector& gamma,
                    const RowMatrix& y_slice, const Vector& D2) {
  const Matrix Bg = scale_blocks(state.B, gamma, state.L);
  state.V_A = cfg.xi * state.V_A + Bg.transpose() * Bg;
  state.G_A = cfg.xi * state.G_A + y_slice * Bg;
  if (!cfg.update_factors) return;
  Matrix M = state.V_A;
  M.diagonal() += cfg.lambda * D2;
  state.A = spd_right_solve(state.G_A, M);
}

void recurse_B_side(OnlineState& state, const OnlineConfig& cfg, const Vector& gamma,
                    const RowMatrix& y_slice, const Vector& D2) {
  const Matrix Ag = scale_blocks(state.A, gamma, state.L);
  state.V_B = cfg.xi * state.V_B + Ag.transpose() * Ag;
  state.G_B = cfg.xi * state.G_B + y_slice.transpose() * Ag;
  if (!cfg.update_factors) return;
  Matrix M = state.V_B;
  M.diagonal() += cfg.lambda * D2;
  state.B = spd_right_solve(state.G_B, M);
}

double slice_nse(const RowMatrix& reference, const Matrix& A, const Matrix& B, const Vector& gamma,
                 Index L) {
  const double err = (reference - frontal_slice_model(A, B, gamma, L)).squaredNorm();
  const double ref = reference.squaredNorm();
  if (ref > 0.0) return err / ref;
  return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

RankEstimate online_ranks(const OnlineState& state, double rank_threshold) {
  return estimate_ranks(state.A, state.B, state.c_energy.cwiseSqrt(), state.L, rank_threshold);
}

StepResult step(OnlineState& state, const OnlineConfig& cfg, const RowMatrix& y_slice,
                const RowMatrix* reference) {
  const detail::FlushDenormals fp_guard;
  const auto t0 = std::chrono::steady_clock::now();
  const Vector D2 = weights_D2(state.A, state.B, cfg.eta2);
  StepResult out;
  out.gamma = update_gamma(state, cfg, y_slice);
  recurse_A_side(state, cfg, out.gamma, y_slice, D2);
  recurse_B_side(state, cfg, out.gamma, y_slice, D2);
  recurse_c_energy(state, cfg.xi, out.gamma);
  ++state.k;
  const auto t1 = std::chrono::steady_clock::now();

  out.metrics.k = state.k;
  out.metrics.seconds = std::chrono::duration<double>(t1 - t0).count();
  out.metrics.nse = slice_nse(reference ? *reference : y_slice, state.A, state.B, out.gamma, state.L);
  out.metrics.ranks = online_ranks(state, cfg.rank_threshold);
  return out;
}

OnlineSolver::OnlineSolver(OnlineConfig cfg, OnlineState state)
    : cfg_(std::move(cfg)), state_(std::move(state)) {
  cfg_.validate();
  state_.validate();
}

OnlineSolver OnlineSolver::warm_start(const Tensor3& Y_warm, const BatchConfig& batch_cfg,
                                      const OnlineConfig& cfg, BatchResult* batch_out) {
  BatchResult br = btd_irls(Y_warm, batch_cfg);
  OnlineSolver solver(cfg, init_online(Y_warm, br.factors, cfg));
  if (batch_out) *batch_out = std::move(br);
  return solver;
}

StepMetrics OnlineSolver::push(const RowMatrix& y_slice, const RowMatrix* reference) {
  StepResult r = step(state_, cfg_, y_slice, reference);
  gamma_ = std::move(r.gamma);
  return std::move(r.metrics);
}

}  // namespace btd
