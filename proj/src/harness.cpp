#include "btd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "btd/error.hpp"
#include "btd/rng.hpp"

namespace btd {

namespace {

std::vector<Index> broadcast_L(const std::vector<Index>& L, Index R, const char* what) {
  if (L.size() == 1) return std::vector<Index>(static_cast<std::size_t>(R), L.front());
  if (static_cast<Index>(L.size()) != R) {
    throw_config(std::string(what) + ": need one block rank or one per block");
  }
  return L;
}

void check_block_ranks(const std::vector<Index>& L, const char* what) {
  if (L.empty()) throw_config(std::string(what) + ": block ranks missing");
  for (Index l : L) {
    if (l <= 0) throw_config(std::string(what) + ": block ranks must be positive");
  }
}

}  // namespace

void GenSpec::validate() const {
  if (I <= 0 || J <= 0 || K <= 0) throw_config("generate: I, J, K must be positive");
  if (R_true <= 0) throw_config("generate: R_true must be positive");
  check_block_ranks(L_true, "generate L_true");
  broadcast_L(L_true, R_true, "generate L_true");
  if (change_point) {
    if (change_point->k_star < 2 || change_point->k_star > K) {
      throw_config("generate: change point k* must satisfy 2 <= k* <= K");
    }
    if (change_point->R_new <= 0) throw_config("generate: R_new must be positive");
    check_block_ranks(change_point->L_new, "generate L_new");
    broadcast_L(change_point->L_new, change_point->R_new, "generate L_new");
  }
}

BtdFactors gaussian_btd(Dims dims, Index R, const std::vector<Index>& L_per_block, std::uint64_t seed) {
  const std::vector<Index> Ls = broadcast_L(L_per_block, R, "gaussian_btd");
  const Index L = *std::max_element(Ls.begin(), Ls.end());
  Rng rng(seed);
  Matrix A = rng.normal_matrix(dims.I, L * R);
  Matrix B = rng.normal_matrix(dims.J, L * R);
  Matrix C = rng.normal_matrix(dims.K, R);
  for (Index r = 0; r < R; ++r) {
    const Index lr = Ls[static_cast<std::size_t>(r)];
    A.middleCols(r * L + lr, L - lr).setZero();
    B.middleCols(r * L + lr, L - lr).setZero();
  }
  return BtdFactors(std::move(A), std::move(B), std::move(C), L);
}

Generated generate(const GenSpec& spec) {
  spec.validate();
  if (!spec.change_point) {
    BtdFactors f = gaussian_btd({spec.I, spec.J, spec.K}, spec.R_true, spec.L_true, spec.seed);
    Tensor3 X = reconstruct(f);
    return {std::move(X), {std::move(f), std::nullopt, spec.K}};
  }
  const Index split = spec.change_point->k_star - 1;
  BtdFactors first =
      gaussian_btd({spec.I, spec.J, split}, spec.R_true, spec.L_true, derive_seed(spec.seed, 0));
  BtdFactors second = gaussian_btd({spec.I, spec.J, spec.K - split}, spec.change_point->R_new,
                                   spec.change_point->L_new, derive_seed(spec.seed, 1));
  Tensor3 X(spec.I, spec.J, spec.K);
  const Index stride = spec.I * spec.J;
  const Tensor3 X1 = reconstruct(first);
  const Tensor3 X2 = reconstruct(second);
  std::copy(X1.data().begin(), X1.data().end(), X.data().begin());
  std::copy(X2.data().begin(), X2.data().end(), X.data().begin() + split * stride);
  return {std::move(X), {std::move(first), std::move(second), split}};
}

Noisy add_noise(const Tensor3& X, const NoiseSpec& spec) {
  if (!std::isfinite(spec.snr_db)) throw_config("snr_db must be finite");
  Rng rng(spec.seed);
  std::vector<double> noise(static_cast<std::size_t>(X.numel()));
  double noise_sq = 0.0;
  for (double& v : noise) {
    v = rng.normal();
    noise_sq += v * v;
  }
  const double signal_sq = X.squared_norm();
  Noisy out;
  out.sigma = std::sqrt(signal_sq) / (std::sqrt(noise_sq) * std::pow(10.0, spec.snr_db / 20.0));
  std::vector<double> y(X.data().begin(), X.data().end());
  for (std::size_t n = 0; n < y.size(); ++n) y[n] += out.sigma * noise[n];
  out.Y = Tensor3(X.dims(), std::move(y));
  out.realized_snr_db = 10.0 * std::log10(signal_sq / (out.sigma * out.sigma * noise_sq));
  return out;
}

double relative_error(const Tensor3& Y, const Tensor3& X_hat) {
  if (Y.dims() != X_hat.dims()) throw_shape("relative_error: tensor shapes differ");
  double num = 0.0;
  double den = 0.0;
  const auto y = Y.data();
  const auto x = X_hat.data();
  for (std::size_t n = 0; n < y.size(); ++n) {
    num += (y[n] - x[n]) * (y[n] - x[n]);
    den += y[n] * y[n];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

Assignment hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw_shape("hungarian: cost matrix must be square");
  const Index n = cost.rows();
  Assignment out;
  if (n == 0) return out;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials and matching; p[j] = row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = kInf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= n; ++j) out.row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  for (Index i = 0; i < n; ++i) out.cost += cost(i, out.row_to_col[static_cast<std::size_t>(i)]);
  return out;
}

NmseResult nmse_blocks(const BtdFactors& truth, const BtdFactors& est) {
  truth.validate();
  est.validate();
  if (truth.dims() != est.dims()) throw_shape("nmse_blocks: factor dimensions differ");
  const Matrix St = build_S(truth.A, truth.B, truth.L, truth.R);
  const Matrix Se = build_S(est.A, est.B, est.L, est.R);
  const Matrix cross = (St.transpose() * Se).cwiseProduct(truth.C.transpose() * est.C);
  const Vector nt = St.colwise().squaredNorm().transpose().cwiseProduct(
      truth.C.colwise().squaredNorm().transpose());
  const Vector ne = Se.colwise().squaredNorm().transpose().cwiseProduct(
      est.C.colwise().squaredNorm().transpose());

  const Index Rt = truth.R;
  const Index Re = est.R;
  const Index n = std::max(Rt, Re);
  // Rows: true blocks (dummy rows cost nothing). Columns: estimated blocks
  // (a dummy column is a zero block, relative cost 1).
  Matrix cost = Matrix::Zero(n, n);
  for (Index r = 0; r < Rt; ++r) {
    if (!(nt(r) > 0.0)) throw_numerical("nmse_blocks: a true block has zero energy");
    for (Index s = 0; s < n; ++s) {
      cost(r, s) = s < Re ? std::max(0.0, nt(r) - 2.0 * cross(r, s) + ne(s)) / nt(r) : 1.0;
    }
  }
  const Assignment a = hungarian(cost);
  NmseResult out;
  out.rank_mismatch = Rt != Re;
  out.assignment.assign(static_cast<std::size_t>(Rt), -1);
  double total = 0.0;
  for (Index r = 0; r < Rt; ++r) {
    const Index s = a.row_to_col[static_cast<std::size_t>(r)];
    total += cost(r, s);
    if (s < Re) out.assignment[static_cast<std::size_t>(r)] = s;
  }
  out.nmse = total / static_cast<double>(Rt);
  return out;
}

double nse(const RowMatrix& reference, const RowMatrix& model_slice) {
  if (reference.rows() != model_slice.rows() || reference.cols() != model_slice.cols()) {
    throw_shape("nse: slice shapes differ");
  }
  const double err = (reference - model_slice).squaredNorm();
  const double ref = reference.squaredNorm();
  if (ref > 0.0) return err / ref;
  return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

}  // namespace btd
