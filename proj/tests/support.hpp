#pragma once

// Generators and brute-force oracles shared by the unit tests. The oracles
// are written from element-wise definitions and never call the library's
// vectorized kernels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "btd/rng.hpp"
#include "btd/tensor.hpp"

namespace btd::testing {

inline Matrix randn(Rng& rng, Index rows, Index cols) { return rng.normal_matrix(rows, cols); }

inline Index uniform_int(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.uniform() * static_cast<double>(hi - lo + 1));
}

inline Tensor3 random_tensor(Rng& rng, Index I, Index J, Index K) {
  Tensor3 t(I, J, K);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

inline BtdFactors random_btd(Rng& rng, Index I, Index J, Index K, Index L, Index R) {
  return BtdFactors(randn(rng, I, L * R), randn(rng, J, L * R), randn(rng, K, R), L);
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// X(i, j, k) = sum_r sum_l A(i, rL + l) B(j, rL + l) C(k, r)
inline Tensor3 reconstruct_loops(const BtdFactors& f) {
  Tensor3 t(f.A.rows(), f.B.rows(), f.C.rows());
  for (Index i = 0; i < t.dim_i(); ++i)
    for (Index j = 0; j < t.dim_j(); ++j)
      for (Index k = 0; k < t.dim_k(); ++k) {
        double s = 0.0;
        for (Index r = 0; r < f.R; ++r)
          for (Index l = 0; l < f.L; ++l) s += f.A(i, r * f.L + l) * f.B(j, r * f.L + l) * f.C(k, r);
        t(i, j, k) = s;
      }
  return t;
}

// Unfoldings from their column-index definitions.
inline Matrix unfold_loops(const Tensor3& t, UnfoldingMode mode) {
  const Index I = t.dim_i(), J = t.dim_j(), K = t.dim_k();
  Matrix m;
  switch (mode) {
    case UnfoldingMode::Mode1:
      m.resize(I, J * K);
      for (Index i = 0; i < I; ++i)
        for (Index j = 0; j < J; ++j)
          for (Index k = 0; k < K; ++k) m(i, j * K + k) = t(i, j, k);
      break;
    case UnfoldingMode::Mode2:
      m.resize(J, K * I);
      for (Index i = 0; i < I; ++i)
        for (Index j = 0; j < J; ++j)
          for (Index k = 0; k < K; ++k) m(j, k * I + i) = t(i, j, k);
      break;
    case UnfoldingMode::Mode3:
      m.resize(K, I * J);
      for (Index i = 0; i < I; ++i)
        for (Index j = 0; j < J; ++j)
          for (Index k = 0; k < K; ++k) m(k, i * J + j) = t(i, j, k);
      break;
  }
  return m;
}

// Partition-wise Kronecker products, one entry at a time.
inline Matrix khatri_rao_loops(const Matrix& X, Index xw, const Matrix& Y, Index yw) {
  const Index parts = X.cols() / xw;
  Matrix out(X.rows() * Y.rows(), parts * xw * yw);
  for (Index r = 0; r < parts; ++r)
    for (Index p = 0; p < xw; ++p)
      for (Index q = 0; q < yw; ++q)
        for (Index a = 0; a < X.rows(); ++a)
          for (Index b = 0; b < Y.rows(); ++b)
            out(a * Y.rows() + b, r * xw * yw + p * yw + q) = X(a, r * xw + p) * Y(b, r * yw + q);
  return out;
}

inline double objective_loops(const Tensor3& Y, const BtdFactors& f, double lambda, double mu,
                              double eta2) {
  const Tensor3 X = reconstruct_loops(f);
  double fit = 0.0;
  for (std::size_t n = 0; n < Y.data().size(); ++n) {
    const double d = Y.data()[n] - X.data()[n];
    fit += d * d;
  }
  double pen_ab = 0.0;
  for (Index c = 0; c < f.A.cols(); ++c) {
    double s = eta2;
    for (Index i = 0; i < f.A.rows(); ++i) s += f.A(i, c) * f.A(i, c);
    for (Index j = 0; j < f.B.rows(); ++j) s += f.B(j, c) * f.B(j, c);
    pen_ab += std::sqrt(s);
  }
  double pen_c = 0.0;
  for (Index r = 0; r < f.R; ++r) {
    double s = eta2;
    for (Index k = 0; k < f.C.rows(); ++k) s += f.C(k, r) * f.C(k, r);
    pen_c += std::sqrt(s);
  }
  return 0.5 * fit + lambda * pen_ab + mu * pen_c;
}

// Window weights xi^{K-1-k} replicated over the non-evolving mode, in the
// row order of the transposed unfoldings.
inline Vector mode1_weights(Index J, Index K, double xi) {
  Vector w(J * K);
  for (Index j = 0; j < J; ++j)
    for (Index k = 0; k < K; ++k) w(j * K + k) = std::pow(xi, static_cast<double>(K - 1 - k));
  return w;
}

inline Vector mode2_weights(Index I, Index K, double xi) {
  Vector w(K * I);
  for (Index k = 0; k < K; ++k)
    for (Index i = 0; i < I; ++i) w(k * I + i) = std::pow(xi, static_cast<double>(K - 1 - k));
  return w;
}

struct Direct {
  Matrix V_A, G_A, V_B, G_B;
};

inline Direct direct_accumulators(const Tensor3& Y, const Matrix& A, const Matrix& B, const Matrix& C, Index L,
                                  double xi) {
  const Index I = Y.dim_i(), J = Y.dim_j(), K = Y.dim_k();
  const Matrix P = khatri_rao_loops(B, L, C, 1);
  const Vector wp = mode1_weights(J, K, xi);
  const Matrix Q = khatri_rao_loops(C, 1, A, L);
  const Vector wq = mode2_weights(I, K, xi);
  Direct d;
  d.V_A = P.transpose() * wp.asDiagonal() * P;
  d.G_A = unfold_loops(Y, UnfoldingMode::Mode1) * wp.asDiagonal() * P;
  d.V_B = Q.transpose() * wq.asDiagonal() * Q;
  d.G_B = unfold_loops(Y, UnfoldingMode::Mode2) * wq.asDiagonal() * Q;
  return d;
}

// Minimum assignment cost by enumerating all permutations.
inline double brute_force_assignment(const Matrix& cost) {
  std::vector<Index> perm(static_cast<std::size_t>(cost.rows()));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Index r = 0; r < cost.rows(); ++r) c += cost(r, perm[static_cast<std::size_t>(r)]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace btd::testing
