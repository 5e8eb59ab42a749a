#include "btd/mm_oracle.hpp"

#include <cmath>

#include "btd/batch.hpp"
#include "btd/error.hpp"

namespace btd::mm {

double f_gamma(const Vector& gamma, const GammaProblem& p) {
  const Vector prior = p.prior();
  double reg = 0.0;
  for (Index r = 0; r < gamma.size(); ++r) reg += std::sqrt(prior(r) + gamma(r) * gamma(r) + p.eta2);
  return 0.5 * (p.y - p.S * gamma).squaredNorm() + p.mu * reg;
}

Vector gradient_f_gamma(const Vector& gamma, const GammaProblem& p) {
  const Vector prior = p.prior();
  Vector g = -p.S.transpose() * (p.y - p.S * gamma);
  for (Index r = 0; r < gamma.size(); ++r) {
    g(r) += p.mu * gamma(r) / std::sqrt(prior(r) + gamma(r) * gamma(r) + p.eta2);
  }
  return g;
}

Matrix hessian_gamma(const Vector& gamma, const GammaProblem& p) {
  const Vector prior = p.prior();
  Matrix H = p.S.transpose() * p.S;
  for (Index r = 0; r < gamma.size(); ++r) {
    const double u = prior(r) + gamma(r) * gamma(r) + p.eta2;
    H(r, r) += p.mu * (1.0 / std::sqrt(u) - gamma(r) * gamma(r) / (u * std::sqrt(u)));
  }
  return H;
}

Vector gap_D(const Vector& gamma, const GammaProblem& p) {
  const Vector prior = p.prior();
  Vector d(gamma.size());
  for (Index r = 0; r < gamma.size(); ++r) {
    const double g2 = gamma(r) * gamma(r);
    const double u0 = prior(r) + p.eta2;
    const double u = u0 + g2;
    d(r) = p.mu / std::sqrt(u0) - p.mu / std::sqrt(u) + g2 * p.mu / (u * std::sqrt(u));
  }
  return d;
}

SurrogatePoint<Vector> expand_gamma(const GammaProblem& p) {
  SurrogatePoint<Vector> pt;
  pt.point = Vector::Zero(p.S.cols());
  pt.value = f_gamma(pt.point, p);
  pt.gradient = -p.S.transpose() * p.y;
  pt.hessian = p.S.transpose() * p.S;
  pt.hessian.diagonal() += p.mu * (p.prior().array() + p.eta2).rsqrt().matrix();
  return pt;
}

double g_gamma(const Vector& gamma, const SurrogatePoint<Vector>& pt) {
  const Vector d = gamma - pt.point;
  return pt.value + d.dot(pt.gradient) + 0.5 * d.dot(pt.hessian * d);
}

Vector gradient_g_gamma(const Vector& gamma, const SurrogatePoint<Vector>& pt) {
  return pt.gradient + pt.hessian * (gamma - pt.point);
}

Vector minimize_g_gamma(const SurrogatePoint<Vector>& pt) {
  return pt.point + spd_solve(pt.hessian, -pt.gradient);
}

namespace {

Vector window_weights(Index K, double xi) {
  Vector w(K);
  for (Index k = 0; k < K; ++k) w(k) = std::pow(xi, static_cast<double>(K - 1 - k));
  return w;
}

Vector penalty_weights(const Matrix& X, const Matrix& partner, double eta2) {
  return (X.colwise().squaredNorm().transpose() + partner.colwise().squaredNorm().transpose())
      .array()
      .unaryExpr([eta2](double v) { return 1.0 / std::sqrt(v + eta2); })
      .matrix();
}

}  // namespace

FactorProblem make_A_problem(const Tensor3& Y, const Matrix& B, const Matrix& C, Index L, double xi,
                             double lambda, double eta2) {
  const Index J = Y.dim_j();
  const Index K = Y.dim_k();
  const Vector wk = window_weights(K, xi);
  FactorProblem p;
  p.Y = unfold(Y, UnfoldingMode::Mode1).transpose();  // row j*K + k
  p.P = khatri_rao(B, L, C, 1);
  p.w.resize(J * K);
  for (Index j = 0; j < J; ++j) p.w.segment(j * K, K) = wk;
  p.partner = B;
  p.lambda = lambda;
  p.eta2 = eta2;
  return p;
}

FactorProblem make_B_problem(const Tensor3& Y, const Matrix& A, const Matrix& C, Index L, double xi,
                             double lambda, double eta2) {
  const Index I = Y.dim_i();
  const Index K = Y.dim_k();
  const Vector wk = window_weights(K, xi);
  FactorProblem p;
  p.Y = unfold(Y, UnfoldingMode::Mode2).transpose();  // row k*I + i
  p.P = khatri_rao(C, 1, A, L);
  p.w.resize(K * I);
  for (Index k = 0; k < K; ++k) p.w.segment(k * I, I).setConstant(wk(k));
  p.partner = A;
  p.lambda = lambda;
  p.eta2 = eta2;
  return p;
}

double f_factor(const Matrix& X, const FactorProblem& p) {
  const Matrix resid = p.Y - p.P * X.transpose();
  const double fit = 0.5 * (p.w.asDiagonal() * resid.cwiseAbs2()).sum();
  const Vector energy = X.colwise().squaredNorm().transpose() + p.partner.colwise().squaredNorm().transpose();
  return fit + p.lambda * (energy.array() + p.eta2).sqrt().sum();
}

Matrix gradient_f_factor(const Matrix& X, const FactorProblem& p) {
  const Matrix wP = p.w.asDiagonal() * p.P;
  Matrix g = -(p.Y.transpose() * wP) + X * (p.P.transpose() * wP);
  g += p.lambda * X * penalty_weights(X, p.partner, p.eta2).asDiagonal();
  return g;
}

SurrogatePoint<Matrix> expand_factor(const Matrix& X0, const FactorProblem& p) {
  SurrogatePoint<Matrix> pt;
  pt.point = X0;
  pt.value = f_factor(X0, p);
  pt.gradient = gradient_f_factor(X0, p);
  pt.hessian = p.P.transpose() * (p.w.asDiagonal() * p.P);
  pt.hessian.diagonal() += p.lambda * penalty_weights(X0, p.partner, p.eta2);
  return pt;
}

double g_factor(const Matrix& X, const SurrogatePoint<Matrix>& pt) {
  const Matrix d = X - pt.point;
  // Row-separable quadratic: vec(d)^T blockdiag(H, ..., H) vec(d).
  return pt.value + d.cwiseProduct(pt.gradient).sum() + 0.5 * (d * pt.hessian).cwiseProduct(d).sum();
}

Matrix gradient_g_factor(const Matrix& X, const SurrogatePoint<Matrix>& pt) {
  return pt.gradient + (X - pt.point) * pt.hessian;
}

Matrix minimize_g_factor(const SurrogatePoint<Matrix>& pt) {
  return pt.point + spd_right_solve(-pt.gradient, pt.hessian);
}

Matrix closed_form_factor(const Matrix& X0, const FactorProblem& p) {
  const Matrix wP = p.w.asDiagonal() * p.P;
  Matrix M = p.P.transpose() * wP;
  M.diagonal() += p.lambda * penalty_weights(X0, p.partner, p.eta2);
  return spd_right_solve(p.Y.transpose() * wP, M);
}

}  // namespace btd::mm
