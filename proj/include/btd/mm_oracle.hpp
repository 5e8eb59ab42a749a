#pragma once

// Majorization-minimization surrogates behind the closed-form updates.
//
// Each update is the minimizer of a quadratic g that touches the objective f
// at an expansion point, shares its gradient there, and lies above it
// everywhere. These functions evaluate f, g, and their derivatives directly
// from their definitions so tests can certify those three properties.

#include "btd/tensor.hpp"

namespace btd::mm {

template <class Point>
struct SurrogatePoint {
  Point point;      // expansion point
  double value = 0; // f at the expansion point
  Point gradient;   // grad f at the expansion point
  Matrix hessian;   // approximate Hessian (SPD); for factors it acts on each row
};

// gamma subproblem:
//   f(g) = 1/2 ||y - S g||^2 + mu sum_r sqrt(xi e_r + g_r^2 + eta2)
// with e_r the exponentially windowed energy of column r of past C rows.
struct GammaProblem {
  Matrix S;
  Vector y;
  Vector window_energy;
  double xi = 1.0;
  double mu = 0.0;
  double eta2 = 1e-8;

  Vector prior() const { return xi * window_energy; }
};

double f_gamma(const Vector& gamma, const GammaProblem& p);
Vector gradient_f_gamma(const Vector& gamma, const GammaProblem& p);
// Exact Hessian S^T S + mu D_gamma.
Matrix hessian_gamma(const Vector& gamma, const GammaProblem& p);
// Diagonal of H~ - H(gamma), H~ = S^T S + mu D1 being the surrogate Hessian.
Vector gap_D(const Vector& gamma, const GammaProblem& p);

// Second-order expansion at gamma = 0 with Hessian S^T S + mu D1.
SurrogatePoint<Vector> expand_gamma(const GammaProblem& p);
double g_gamma(const Vector& gamma, const SurrogatePoint<Vector>& pt);
Vector gradient_g_gamma(const Vector& gamma, const SurrogatePoint<Vector>& pt);
Vector minimize_g_gamma(const SurrogatePoint<Vector>& pt);

// Factor subproblem (A side; the B side is the same with roles swapped):
//   f(X) = 1/2 sum_n w_n ||Y(n, :) - P(n, :) X^T||^2
//          + lambda sum_c sqrt(||x_c||^2 + ||partner_c||^2 + eta2)
// Rows n index the unfolded observations, w are the exponential window
// weights replicated over the non-evolving mode.
struct FactorProblem {
  Matrix Y;        // N x I (Y_(1)^T for A, Y_(2)^T for B)
  Matrix P;        // N x LR design (B (.) C for A, C (.) A for B)
  Vector w;        // N
  Matrix partner;  // fixed factor sharing the column penalty
  double lambda = 0.0;
  double eta2 = 1e-8;
};

// Builds the A (resp. B) subproblem for the slices of Y with window weights
// xi^{K-1-k}, k = 0..K-1.
FactorProblem make_A_problem(const Tensor3& Y, const Matrix& B, const Matrix& C, Index L, double xi,
                             double lambda, double eta2);
FactorProblem make_B_problem(const Tensor3& Y, const Matrix& A, const Matrix& C, Index L, double xi,
                             double lambda, double eta2);

double f_factor(const Matrix& X, const FactorProblem& p);
Matrix gradient_f_factor(const Matrix& X, const FactorProblem& p);
SurrogatePoint<Matrix> expand_factor(const Matrix& X0, const FactorProblem& p);
double g_factor(const Matrix& X, const SurrogatePoint<Matrix>& pt);
Matrix gradient_g_factor(const Matrix& X, const SurrogatePoint<Matrix>& pt);
Matrix minimize_g_factor(const SurrogatePoint<Matrix>& pt);
// Closed form (Y^T W P)(P^T W P + lambda D2(X0))^{-1}, written independently
// of the surrogate.
Matrix closed_form_factor(const Matrix& X0, const FactorProblem& p);

}  // namespace btd::mm
