#include "btd/batch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "btd/error.hpp"
#include "btd/rng.hpp"
#include "flush_denormals.hpp"

namespace btd {

void BatchConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw_config("lambda must be finite and >= 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw_config("mu must be finite and >= 0");
  if (!(eta2 > 0.0)) throw_config("eta2 must be > 0");
  if (R_ini <= 0 || L_ini <= 0) throw_config("R_ini and L_ini must be positive");
  if (max_iters <= 0) throw_config("max_iters must be positive");
  if (!(rel_tol > 0.0)) throw_config("rel_tol must be > 0");
  if (!(rank_threshold > 0.0 && rank_threshold < 1.0)) {
    throw_config("rank_threshold must lie in (0, 1)");
  }
}

Matrix spd_right_solve(const Matrix& G, const Matrix& M) {
  if (!M.allFinite() || !G.allFinite()) throw_numerical("non-finite values entering SPD solve");
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success) {
    throw_numerical("Cholesky factorization failed: regularized Gram matrix is not positive definite");
  }
  Matrix X = llt.solve(G.transpose()).transpose();
  if (!X.allFinite()) throw_numerical("SPD solve produced non-finite values");
  return X;
}

Vector spd_solve(const Matrix& M, const Vector& b) {
  if (!M.allFinite() || !b.allFinite()) throw_numerical("non-finite values entering SPD solve");
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success) {
    throw_numerical("Cholesky factorization failed: regularized Gram matrix is not positive definite");
  }
  Vector x = llt.solve(b);
  if (!x.allFinite()) throw_numerical("SPD solve produced non-finite values");
  return x;
}

Vector weights_D1(const Matrix& C, double eta2) {
  return (C.colwise().squaredNorm().transpose().array() + eta2).rsqrt();
}

Vector weights_D2(const Matrix& A, const Matrix& B, double eta2) {
  if (A.cols() != B.cols()) throw_shape("weights_D2: A and B column counts differ");
  return (A.colwise().squaredNorm().transpose().array() +
          B.colwise().squaredNorm().transpose().array() + eta2)
      .rsqrt();
}

namespace {

void check_shapes(const Tensor3& Y, const BtdFactors& f) {
  f.validate();
  if (f.dims() != Y.dims()) {
    throw_shape("factor dimensions do not match the tensor");
  }
}

double group_penalty(const Matrix& A, const Matrix& B, const Matrix& C, double lambda, double mu,
                     double eta2) {
  const Vector ab = A.colwise().squaredNorm().transpose() + B.colwise().squaredNorm().transpose();
  const Vector c = C.colwise().squaredNorm().transpose();
  return lambda * (ab.array() + eta2).sqrt().sum() + mu * (c.array() + eta2).sqrt().sum();
}

}  // namespace

double objective_batch(const Tensor3& Y, const BtdFactors& f, double lambda, double mu, double eta2) {
  check_shapes(Y, f);
  const Matrix S = build_S(f.A, f.B, f.L, f.R);
  const double fit = 0.5 * (Y.mode3() - f.C * S.transpose()).squaredNorm();
  return fit + group_penalty(f.A, f.B, f.C, lambda, mu, eta2);
}

double objective_batch(const Tensor3& Y, const BtdFactors& f, const BatchConfig& cfg) {
  return objective_batch(Y, f, cfg.lambda, cfg.mu, cfg.eta2);
}

Matrix update_A(const Tensor3& Y, const BtdFactors& f, double lambda, double eta2) {
  check_shapes(Y, f);
  Matrix M = kr_gram(f.B, f.C, f.L);
  M.diagonal() += lambda * weights_D2(f.A, f.B, eta2);
  return spd_right_solve(mttkrp_mode1(Y, f.B, f.C, f.L), M);
}

Matrix update_B(const Tensor3& Y, const BtdFactors& f, double lambda, double eta2) {
  check_shapes(Y, f);
  Matrix M = kr_gram(f.A, f.C, f.L);
  M.diagonal() += lambda * weights_D2(f.A, f.B, eta2);
  return spd_right_solve(mttkrp_mode2(Y, f.A, f.C, f.L), M);
}

Matrix update_C(const Tensor3& Y, const BtdFactors& f, double mu, double eta2) {
  check_shapes(Y, f);
  const Matrix S = build_S(f.A, f.B, f.L, f.R);
  Matrix M = s_gram(f.A, f.B, f.L, f.R);
  M.diagonal() += mu * weights_D1(f.C, eta2);
  return spd_right_solve(mttkrp_mode3(Y, S), M);
}

BtdFactors irls_sweep(const Tensor3& Y, const BtdFactors& f, const BatchConfig& cfg) {
  check_shapes(Y, f);
  BtdFactors next = f;
  switch (cfg.order) {
    case SweepOrder::kGaussSeidel:
      next.A = update_A(Y, next, cfg.lambda, cfg.eta2);
      next.B = update_B(Y, next, cfg.lambda, cfg.eta2);
      next.C = update_C(Y, next, cfg.mu, cfg.eta2);
      break;
    case SweepOrder::kTabulated:
      next.A = update_A(Y, f, cfg.lambda, cfg.eta2);
      next.B = update_B(Y, f, cfg.lambda, cfg.eta2);
      next.C = update_C(Y, f, cfg.mu, cfg.eta2);
      break;
  }
  return next;
}

BtdFactors random_factors(Dims dims, Index L, Index R, Rng& rng) {
  Matrix A = rng.normal_matrix(dims.I, L * R);
  Matrix B = rng.normal_matrix(dims.J, L * R);
  Matrix C = rng.normal_matrix(dims.K, R);
  return BtdFactors(std::move(A), std::move(B), std::move(C), L);
}

BatchResult btd_irls(const Tensor3& Y, const BatchConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  return btd_irls(Y, random_factors(Y.dims(), cfg.L_ini, cfg.R_ini, rng), cfg);
}

BatchResult btd_irls(const Tensor3& Y, BtdFactors init, const BatchConfig& cfg) {
  const detail::FlushDenormals fp_guard;
  cfg.validate();
  check_shapes(Y, init);
  BatchResult result;
  result.factors = std::move(init);
  double prev = objective_batch(Y, result.factors, cfg);
  if (!std::isfinite(prev)) throw_numerical("objective is not finite at the initial point");
  result.trace.push_back(prev);

  for (int it = 0; it < cfg.max_iters; ++it) {
    result.factors = irls_sweep(Y, result.factors, cfg);
    if (cfg.prune_in_loop) {
      const RankEstimate est = estimate_ranks(result.factors, cfg.rank_threshold);
      if (!est.degenerate) {
        const bool shrinks = est.R_hat < result.factors.R ||
                             *std::max_element(est.L_hat.begin(), est.L_hat.end()) < result.factors.L;
        if (shrinks) result.factors = prune(result.factors, est);
      }
    }
    const double obj = objective_batch(Y, result.factors, cfg);
    if (!std::isfinite(obj)) throw_numerical("objective became non-finite");
    result.trace.push_back(obj);
    result.iterations = it + 1;
    const double change = std::abs(prev - obj) / (std::abs(prev) > 0.0 ? std::abs(prev) : 1.0);
    prev = obj;
    if (change < cfg.rel_tol) {
      result.converged = true;
      break;
    }
  }
  result.ranks = estimate_ranks(result.factors, cfg.rank_threshold);
  return result;
}

RankEstimate estimate_ranks(const Matrix& A, const Matrix& B, const Vector& c_norms, Index L,
                            double rank_threshold) {
  if (!(rank_threshold > 0.0 && rank_threshold < 1.0)) {
    throw_config("rank_threshold must lie in (0, 1)");
  }
  const Index R = c_norms.size();
  if (A.cols() != L * R || B.cols() != L * R) throw_shape("estimate_ranks: inconsistent factor widths");

  RankEstimate est;
  const double c_max = R > 0 ? c_norms.maxCoeff() : 0.0;
  const Vector col_norms = (A.colwise().squaredNorm().transpose() + B.colwise().squaredNorm().transpose())
                               .cwiseSqrt();
  if (!(c_max > 0.0) || !(col_norms.maxCoeff() > 0.0)) {
    est.degenerate = true;
    return est;
  }
  for (Index r = 0; r < R; ++r) {
    if (c_norms(r) >= rank_threshold * c_max) est.kept_blocks.push_back(r);
  }
  double col_max = 0.0;
  for (Index r : est.kept_blocks) col_max = std::max(col_max, col_norms.segment(r * L, L).maxCoeff());
  for (Index r : est.kept_blocks) {
    std::vector<Index> cols;
    for (Index l = 0; l < L; ++l) {
      if (col_norms(r * L + l) >= rank_threshold * col_max) cols.push_back(l);
    }
    est.L_hat.push_back(static_cast<Index>(cols.size()));
    est.kept_columns.push_back(std::move(cols));
  }
  est.R_hat = static_cast<Index>(est.kept_blocks.size());
  return est;
}

RankEstimate estimate_ranks(const BtdFactors& f, double rank_threshold) {
  f.validate();
  return estimate_ranks(f.A, f.B, f.C.colwise().norm().transpose(), f.L, rank_threshold);
}

BtdFactors prune(const BtdFactors& f, const RankEstimate& est) {
  f.validate();
  if (est.degenerate || est.R_hat == 0) throw_config("cannot prune to zero block terms");
  if (static_cast<Index>(est.kept_blocks.size()) != est.R_hat ||
      static_cast<Index>(est.kept_columns.size()) != est.R_hat) {
    throw_shape("rank estimate is internally inconsistent");
  }
  Index width = 0;
  for (const auto& cols : est.kept_columns) width = std::max<Index>(width, static_cast<Index>(cols.size()));
  if (width == 0) throw_config("cannot prune to zero columns");

  const Index R = est.R_hat;
  Matrix A = Matrix::Zero(f.dim_i(), width * R);
  Matrix B = Matrix::Zero(f.dim_j(), width * R);
  Matrix C(f.dim_k(), R);
  for (Index q = 0; q < R; ++q) {
    const Index r = est.kept_blocks[q];
    if (r < 0 || r >= f.R) throw_shape("rank estimate refers to a block outside the factors");
    C.col(q) = f.C.col(r);
    const auto& cols = est.kept_columns[q];
    for (std::size_t p = 0; p < cols.size(); ++p) {
      const Index l = cols[p];
      if (l < 0 || l >= f.L) throw_shape("rank estimate refers to a column outside the block");
      A.col(q * width + static_cast<Index>(p)) = f.A.col(r * f.L + l);
      B.col(q * width + static_cast<Index>(p)) = f.B.col(r * f.L + l);
    }
  }
  return BtdFactors(std::move(A), std::move(B), std::move(C), width);
}

}  // namespace btd
