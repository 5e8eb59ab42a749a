#include "btd/tensor.hpp"

#include <string>
#include <utility>

#include "btd/error.hpp"

namespace btd {

namespace {

void require_positive(Dims d) {
  if (d.I <= 0 || d.J <= 0 || d.K <= 0) {
    throw_shape("tensor dimensions must be positive, got " + std::to_string(d.I) + "x" +
                std::to_string(d.J) + "x" + std::to_string(d.K));
  }
}

}  // namespace

Tensor3::Tensor3(Index I, Index J, Index K) : dims_{I, J, K} {
  require_positive(dims_);
  data_.assign(static_cast<std::size_t>(dims_.numel()), 0.0);
}

Tensor3::Tensor3(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  require_positive(dims_);
  if (static_cast<Index>(data_.size()) != dims_.numel()) {
    throw_shape("tensor data length " + std::to_string(data_.size()) + " does not match I*J*K = " +
                std::to_string(dims_.numel()));
  }
}

ConstRowMap Tensor3::slice(Index k) const {
  return ConstRowMap(data_.data() + k * dims_.I * dims_.J, dims_.I, dims_.J);
}

RowMap Tensor3::slice(Index k) {
  return RowMap(data_.data() + k * dims_.I * dims_.J, dims_.I, dims_.J);
}

ConstRowMap Tensor3::mode3() const {
  return ConstRowMap(data_.data(), dims_.K, dims_.I * dims_.J);
}

RowMap Tensor3::mode3() { return RowMap(data_.data(), dims_.K, dims_.I * dims_.J); }

Tensor3 Tensor3::slices(Index first, Index count) const {
  if (first < 0 || count <= 0 || first + count > dims_.K) {
    throw_shape("slice range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                ") outside tensor with K = " + std::to_string(dims_.K));
  }
  const Index stride = dims_.I * dims_.J;
  std::vector<double> out(data_.begin() + first * stride, data_.begin() + (first + count) * stride);
  return Tensor3({dims_.I, dims_.J, count}, std::move(out));
}

double Tensor3::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

BtdFactors::BtdFactors(Matrix a, Matrix b, Matrix c, Index l)
    : A(std::move(a)), B(std::move(b)), C(std::move(c)), L(l), R(C.cols()) {
  validate();
}

void BtdFactors::validate() const {
  if (L <= 0 || R <= 0) throw_shape("block width L and block count R must be positive");
  if (C.cols() != R) throw_shape("C must have R columns");
  if (A.cols() != L * R || B.cols() != L * R) {
    throw_shape("A and B must have L*R = " + std::to_string(L * R) + " columns, got " +
                std::to_string(A.cols()) + " and " + std::to_string(B.cols()));
  }
  if (A.rows() <= 0 || B.rows() <= 0 || C.rows() <= 0) throw_shape("factor matrices are empty");
}

Matrix unfold(const Tensor3& t, UnfoldingMode mode) {
  const auto [I, J, K] = t.dims();
  switch (mode) {
    case UnfoldingMode::Mode1: {
      Matrix m(I, J * K);
      for (Index k = 0; k < K; ++k)
        for (Index i = 0; i < I; ++i)
          for (Index j = 0; j < J; ++j) m(i, j * K + k) = t(i, j, k);
      return m;
    }
    case UnfoldingMode::Mode2: {
      Matrix m(J, K * I);
      for (Index k = 0; k < K; ++k)
        for (Index i = 0; i < I; ++i)
          for (Index j = 0; j < J; ++j) m(j, k * I + i) = t(i, j, k);
      return m;
    }
    case UnfoldingMode::Mode3:
      return t.mode3();
  }
  throw_shape("unknown unfolding mode");
}

Tensor3 fold(const Matrix& m, UnfoldingMode mode, Dims dims) {
  const auto [I, J, K] = dims;
  Tensor3 t(I, J, K);
  switch (mode) {
    case UnfoldingMode::Mode1:
      if (m.rows() != I || m.cols() != J * K) throw_shape("fold: mode-1 matrix must be I x JK");
      for (Index k = 0; k < K; ++k)
        for (Index i = 0; i < I; ++i)
          for (Index j = 0; j < J; ++j) t(i, j, k) = m(i, j * K + k);
      return t;
    case UnfoldingMode::Mode2:
      if (m.rows() != J || m.cols() != K * I) throw_shape("fold: mode-2 matrix must be J x KI");
      for (Index k = 0; k < K; ++k)
        for (Index i = 0; i < I; ++i)
          for (Index j = 0; j < J; ++j) t(i, j, k) = m(j, k * I + i);
      return t;
    case UnfoldingMode::Mode3:
      if (m.rows() != K || m.cols() != I * J) throw_shape("fold: mode-3 matrix must be K x IJ");
      t.mode3() = m;
      return t;
  }
  throw_shape("unknown unfolding mode");
}

Matrix khatri_rao(const Matrix& X, Index x_width, const Matrix& Y, Index y_width) {
  if (x_width <= 0 || y_width <= 0) throw_shape("khatri_rao: partition widths must be positive");
  if (X.cols() % x_width != 0 || Y.cols() % y_width != 0) {
    throw_shape("khatri_rao: column count is not a multiple of the partition width");
  }
  const Index parts = X.cols() / x_width;
  if (Y.cols() / y_width != parts) {
    throw_shape("khatri_rao: operands have " + std::to_string(parts) + " and " +
                std::to_string(Y.cols() / y_width) + " partitions");
  }
  const Index m = X.rows();
  const Index n = Y.rows();
  Matrix out(m * n, parts * x_width * y_width);
  for (Index r = 0; r < parts; ++r) {
    for (Index p = 0; p < x_width; ++p) {
      for (Index q = 0; q < y_width; ++q) {
        const Index col = r * x_width * y_width + p * y_width + q;
        for (Index a = 0; a < m; ++a) {
          out.col(col).segment(a * n, n) = X(a, r * x_width + p) * Y.col(r * y_width + q);
        }
      }
    }
  }
  return out;
}

Matrix khatri_rao_cw(const Matrix& X, const Matrix& Y) { return khatri_rao(X, 1, Y, 1); }

Matrix build_S(const Matrix& A, const Matrix& B, Index L, Index R) {
  if (A.cols() != L * R || B.cols() != L * R) throw_shape("build_S: A and B need L*R columns");
  const Index I = A.rows();
  const Index J = B.rows();
  Matrix S(I * J, R);
  for (Index r = 0; r < R; ++r) {
    RowMap block(S.col(r).data(), I, J);
    block.noalias() = A.middleCols(r * L, L) * B.middleCols(r * L, L).transpose();
  }
  return S;
}

Vector vec_slice(const RowMatrix& slice) {
  return Eigen::Map<const Vector>(slice.data(), slice.size());
}

Tensor3 reconstruct(const BtdFactors& f) {
  f.validate();
  Tensor3 out(f.dim_i(), f.dim_j(), f.dim_k());
  out.mode3().noalias() = f.C * build_S(f.A, f.B, f.L, f.R).transpose();
  return out;
}

Matrix scale_blocks(const Matrix& M, const Vector& gamma, Index L) {
  if (M.cols() != gamma.size() * L) throw_shape("scale_blocks: M must have L * len(gamma) columns");
  Matrix out = M;
  for (Index r = 0; r < gamma.size(); ++r) out.middleCols(r * L, L) *= gamma(r);
  return out;
}

RowMatrix frontal_slice_model(const Matrix& A, const Matrix& B, const Vector& gamma, Index L) {
  if (A.cols() != B.cols()) throw_shape("frontal_slice_model: A and B column counts differ");
  return scale_blocks(A, gamma, L) * B.transpose();
}

Matrix expand_blocks(const Matrix& G, Index L) {
  Matrix out(G.rows() * L, G.cols() * L);
  for (Index r = 0; r < G.rows(); ++r)
    for (Index s = 0; s < G.cols(); ++s) out.block(r * L, s * L, L, L).setConstant(G(r, s));
  return out;
}

Matrix kr_gram(const Matrix& M, const Matrix& C, Index L) {
  if (M.cols() != C.cols() * L) throw_shape("kr_gram: factor needs L * R columns");
  Matrix g = M.transpose() * M;
  return g.cwiseProduct(expand_blocks(C.transpose() * C, L));
}

Matrix s_gram(const Matrix& A, const Matrix& B, Index L, Index R) {
  const Matrix h = (A.transpose() * A).cwiseProduct(B.transpose() * B);
  Matrix out(R, R);
  for (Index r = 0; r < R; ++r)
    for (Index s = 0; s < R; ++s) out(r, s) = h.block(r * L, s * L, L, L).sum();
  return out;
}

namespace {

// IJ x R: column r is vec(sum_k C(k, r) Y(:, :, k)).
Matrix weighted_slice_sums(const Tensor3& Y, const Matrix& C) {
  if (C.rows() != Y.dim_k()) throw_shape("mttkrp: C must have K rows");
  return Y.mode3().transpose() * C;
}

}  // namespace

Matrix mttkrp_mode1(const Tensor3& Y, const Matrix& B, const Matrix& C, Index L) {
  if (B.rows() != Y.dim_j() || B.cols() != C.cols() * L) throw_shape("mttkrp_mode1: bad B shape");
  const Index I = Y.dim_i();
  const Index J = Y.dim_j();
  const Matrix W = weighted_slice_sums(Y, C);
  Matrix out(I, B.cols());
  for (Index r = 0; r < C.cols(); ++r) {
    ConstRowMap w(W.col(r).data(), I, J);
    out.middleCols(r * L, L).noalias() = w * B.middleCols(r * L, L);
  }
  return out;
}

Matrix mttkrp_mode2(const Tensor3& Y, const Matrix& A, const Matrix& C, Index L) {
  if (A.rows() != Y.dim_i() || A.cols() != C.cols() * L) throw_shape("mttkrp_mode2: bad A shape");
  const Index I = Y.dim_i();
  const Index J = Y.dim_j();
  const Matrix W = weighted_slice_sums(Y, C);
  Matrix out(J, A.cols());
  for (Index r = 0; r < C.cols(); ++r) {
    ConstRowMap w(W.col(r).data(), I, J);
    out.middleCols(r * L, L).noalias() = w.transpose() * A.middleCols(r * L, L);
  }
  return out;
}

Matrix mttkrp_mode3(const Tensor3& Y, const Matrix& S) {
  if (S.rows() != Y.dim_i() * Y.dim_j()) throw_shape("mttkrp_mode3: S must have IJ rows");
  return Y.mode3() * S;
}

}  // namespace btd
