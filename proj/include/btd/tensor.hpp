#pragma once

// Dense third-order tensors and the multilinear primitives of the
// rank-(L,L,1) block-term model
//
//     X = sum_r (A_r B_r^T) o c_r .
//
// Linearization: element (i, j, k) lives at data[(k * I + i) * J + j].
// Every frontal slice X(:, :, k) is therefore a contiguous row-major I x J
// block, and its vectorization vec(X_k) (index i * J + j, column index
// fastest) is the k-th row of the mode-3 unfolding. All identities below are
// stated in this convention:
//
//     unfold(X, Mode1) : I x JK, column j * K + k      X_(1)^T = (B (.) C) A^T
//     unfold(X, Mode2) : J x KI, column k * I + i      X_(2)^T = (C (.) A) B^T
//     unfold(X, Mode3) : K x IJ, column i * J + j      X_(3)^T = S C^T
//
// where (.) is the partition-wise Khatri-Rao product and column r of S is
// vec(A_r B_r^T).

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace btd {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

enum class UnfoldingMode { Mode1, Mode2, Mode3 };

struct Dims {
  Index I = 0;
  Index J = 0;
  Index K = 0;

  Index numel() const { return I * J * K; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(Index I, Index J, Index K);
  Tensor3(Dims dims, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  Index dim_i() const { return dims_.I; }
  Index dim_j() const { return dims_.J; }
  Index dim_k() const { return dims_.K; }
  Index numel() const { return dims_.numel(); }

  Index linear_index(Index i, Index j, Index k) const {
    return (k * dims_.I + i) * dims_.J + j;
  }
  double operator()(Index i, Index j, Index k) const { return data_[linear_index(i, j, k)]; }
  double& operator()(Index i, Index j, Index k) { return data_[linear_index(i, j, k)]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  // Frontal slice k as an I x J matrix view.
  ConstRowMap slice(Index k) const;
  RowMap slice(Index k);

  // Mode-3 unfolding as a K x IJ view (no copy).
  ConstRowMap mode3() const;
  RowMap mode3();

  // Copy of slices [first, first + count).
  Tensor3 slices(Index first, Index count) const;

  double squared_norm() const;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

// Factor triple of a rank-(L,L,1) BTD with R block terms.
// Column block r of A (and B) is columns [r * L, (r + 1) * L).
struct BtdFactors {
  Matrix A;  // I x LR
  Matrix B;  // J x LR
  Matrix C;  // K x R
  Index L = 0;
  Index R = 0;

  BtdFactors() = default;
  BtdFactors(Matrix a, Matrix b, Matrix c, Index l);

  Index dim_i() const { return A.rows(); }
  Index dim_j() const { return B.rows(); }
  Index dim_k() const { return C.rows(); }
  Dims dims() const { return {A.rows(), B.rows(), C.rows()}; }

  auto A_block(Index r) const { return A.middleCols(r * L, L); }
  auto B_block(Index r) const { return B.middleCols(r * L, L); }

  // Throws a shape error if the block structure is inconsistent.
  void validate() const;
};

Matrix unfold(const Tensor3& t, UnfoldingMode mode);
Tensor3 fold(const Matrix& m, UnfoldingMode mode, Dims dims);

// Partition-wise Khatri-Rao product. X has p partitions of width x_width,
// Y has p partitions of width y_width; partition r of the result is the
// Kronecker product X_r (x) Y_r with Y's row index running fastest.
Matrix khatri_rao(const Matrix& X, Index x_width, const Matrix& Y, Index y_width);
// Column-wise Khatri-Rao product (all partitions of width one).
Matrix khatri_rao_cw(const Matrix& X, const Matrix& Y);

// IJ x R matrix whose column r is vec(A_r B_r^T) = (A_r (.)_c B_r) 1_L.
Matrix build_S(const Matrix& A, const Matrix& B, Index L, Index R);

// vec of an I x J slice in the tensor linearization.
Vector vec_slice(const RowMatrix& slice);

Tensor3 reconstruct(const BtdFactors& f);

// A (diag(gamma) (x) I_L) B^T.
RowMatrix frontal_slice_model(const Matrix& A, const Matrix& B, const Vector& gamma, Index L);

// Columns of M scaled blockwise: M (diag(gamma) (x) I_L). Equals the
// Khatri-Rao products B (.) gamma^T and gamma^T (.) A.
Matrix scale_blocks(const Matrix& M, const Vector& gamma, Index L);

// Kron(G, 1_{L x L}) for an R x R matrix G.
Matrix expand_blocks(const Matrix& G, Index L);

// Gram matrices of the Khatri-Rao structured design matrices, computed
// without forming them:
//   (B (.) C)^T (B (.) C) = (B^T B) * kron(C^T C, 1_LxL)
//   S^T S                 = blocksum(A^T A * B^T B)
Matrix kr_gram(const Matrix& M, const Matrix& C, Index L);
Matrix s_gram(const Matrix& A, const Matrix& B, Index L, Index R);

// Matricized tensor times Khatri-Rao product for modes 1 and 2:
//   Y_(1) (B (.) C)   and   Y_(2) (C (.) A).
Matrix mttkrp_mode1(const Tensor3& Y, const Matrix& B, const Matrix& C, Index L);
Matrix mttkrp_mode2(const Tensor3& Y, const Matrix& A, const Matrix& C, Index L);
// Y_(3) S.
Matrix mttkrp_mode3(const Tensor3& Y, const Matrix& S);

}  // namespace btd
