#include "btd/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <iomanip>

#include "btd/error.hpp"

namespace btd::io {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kFactorsMagic{'B', 'T', 'D', 'F', 'A', 'C', 'T', '1'};
constexpr std::array<char, 8> kCheckpointMagic{'B', 'T', 'D', 'C', 'K', 'P', 'T', '1'};

// Guards against absurd headers before allocating.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int b = 0; b < 8; ++b) out |= ((v >> (8 * b)) & 0xFF) << (8 * (7 - b));
    return out;
  }
}

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path), out_(open_output(path, true)) {}

  void u64(std::uint64_t v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void f64s(const double* p, Index n) {
    if constexpr (std::endian::native == std::endian::little) {
      out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    } else {
      for (Index i = 0; i < n; ++i) f64(p[i]);
    }
  }
  void matrix(const Matrix& m) { f64s(m.data(), m.size()); }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }

  void finish() {
    out_.flush();
    if (!out_) throw_io("failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw_io("cannot open " + path.string());
  }
  explicit Reader(std::ifstream& in, const fs::path& path) : path_(path), borrowed_(&in) {}

  std::uint64_t u64() {
    std::uint64_t v = 0;
    stream().read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return to_little(v);
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(double* p, Index n) {
    if constexpr (std::endian::native == std::endian::little) {
      stream().read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
      check();
    } else {
      for (Index i = 0; i < n; ++i) p[i] = f64();
    }
  }
  Matrix matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    f64s(m.data(), m.size());
    return m;
  }
  void expect_magic(const std::array<char, 8>& magic) {
    std::array<char, 8> got{};
    stream().read(got.data(), 8);
    check();
    if (got != magic) throw_io(path_.string() + ": unexpected file magic");
  }
  unsigned char byte() {
    char c = 0;
    stream().read(&c, 1);
    check();
    return static_cast<unsigned char>(c);
  }
  void expect_end() {
    if (stream().peek() != std::char_traits<char>::eof()) throw_io(path_.string() + ": trailing bytes");
  }

 private:
  std::istream& stream() { return borrowed_ ? *borrowed_ : in_; }
  void check() {
    if (!stream()) throw_io(path_.string() + ": truncated file");
  }

  fs::path path_;
  std::ifstream in_;
  std::ifstream* borrowed_ = nullptr;
};

Index checked_dim(std::uint64_t v, const fs::path& path) {
  if (v == 0 || v > kMaxElements) throw_io(path.string() + ": invalid dimension in header");
  return static_cast<Index>(v);
}

}  // namespace

std::ofstream open_output(const fs::path& path, bool binary) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw_io("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw_io("cannot open " + path.string() + " for writing");
  return out;
}

void write_tensor(const fs::path& path, const Tensor3& t) {
  Writer w(path);
  w.u64(static_cast<std::uint64_t>(t.dim_i()));
  w.u64(static_cast<std::uint64_t>(t.dim_j()));
  w.u64(static_cast<std::uint64_t>(t.dim_k()));
  w.f64s(t.data().data(), t.numel());
  w.finish();
}

Tensor3 read_tensor(const fs::path& path) {
  Reader r(path);
  Dims d;
  d.I = checked_dim(r.u64(), path);
  d.J = checked_dim(r.u64(), path);
  d.K = checked_dim(r.u64(), path);
  if (static_cast<std::uint64_t>(d.numel()) > kMaxElements) throw_io(path.string() + ": tensor too large");
  std::vector<double> data(static_cast<std::size_t>(d.numel()));
  r.f64s(data.data(), d.numel());
  r.expect_end();
  return Tensor3(d, std::move(data));
}

TensorSliceReader::TensorSliceReader(const fs::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw_io("cannot open " + path.string());
  Reader r(in_, path);
  dims_.I = checked_dim(r.u64(), path);
  dims_.J = checked_dim(r.u64(), path);
  dims_.K = checked_dim(r.u64(), path);
}

bool TensorSliceReader::next(RowMatrix& out) {
  if (next_ >= dims_.K) return false;
  out.resize(dims_.I, dims_.J);
  Reader r(in_, "tensor stream");
  r.f64s(out.data(), out.size());
  ++next_;
  return true;
}

void write_factors(const fs::path& path, const BtdFactors& f) {
  f.validate();
  Writer w(path);
  w.bytes(kFactorsMagic.data(), kFactorsMagic.size());
  for (Index v : {f.dim_i(), f.dim_j(), f.dim_k(), f.L, f.R}) w.u64(static_cast<std::uint64_t>(v));
  w.matrix(f.A);
  w.matrix(f.B);
  w.matrix(f.C);
  w.finish();
}

BtdFactors read_factors(const fs::path& path) {
  Reader r(path);
  r.expect_magic(kFactorsMagic);
  const Index I = checked_dim(r.u64(), path);
  const Index J = checked_dim(r.u64(), path);
  const Index K = checked_dim(r.u64(), path);
  const Index L = checked_dim(r.u64(), path);
  const Index R = checked_dim(r.u64(), path);
  Matrix A = r.matrix(I, L * R);
  Matrix B = r.matrix(J, L * R);
  Matrix C = r.matrix(K, R);
  r.expect_end();
  return BtdFactors(std::move(A), std::move(B), std::move(C), L);
}

void write_checkpoint(const fs::path& path, const OnlineState& s, const OnlineConfig& cfg) {
  s.validate();
  Writer w(path);
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  for (Index v : {s.dim_i(), s.dim_j(), static_cast<Index>(s.k), s.L, s.R}) {
    w.u64(static_cast<std::uint64_t>(v));
  }
  for (const Matrix* m : {&s.A, &s.B, &s.V_A, &s.G_A, &s.V_B, &s.G_B}) w.matrix(*m);
  w.f64s(s.c_energy.data(), s.c_energy.size());
  for (double v : {cfg.xi, cfg.lambda, cfg.mu, cfg.eta2, cfg.rank_threshold}) w.f64(v);
  for (Index v : {cfg.warmup_slices, cfg.R_ini, cfg.L_ini}) w.u64(static_cast<std::uint64_t>(v));
  const char flag = cfg.update_factors ? 1 : 0;
  w.bytes(&flag, 1);
  w.finish();
}

std::pair<OnlineState, OnlineConfig> read_checkpoint(const fs::path& path) {
  Reader r(path);
  r.expect_magic(kCheckpointMagic);
  OnlineState s;
  const Index I = checked_dim(r.u64(), path);
  const Index J = checked_dim(r.u64(), path);
  s.k = static_cast<std::int64_t>(r.u64());
  s.L = checked_dim(r.u64(), path);
  s.R = checked_dim(r.u64(), path);
  const Index LR = s.L * s.R;
  s.A = r.matrix(I, LR);
  s.B = r.matrix(J, LR);
  s.V_A = r.matrix(LR, LR);
  s.G_A = r.matrix(I, LR);
  s.V_B = r.matrix(LR, LR);
  s.G_B = r.matrix(J, LR);
  s.c_energy.resize(s.R);
  r.f64s(s.c_energy.data(), s.R);
  OnlineConfig cfg;
  cfg.xi = r.f64();
  cfg.lambda = r.f64();
  cfg.mu = r.f64();
  cfg.eta2 = r.f64();
  cfg.rank_threshold = r.f64();
  cfg.warmup_slices = static_cast<Index>(r.u64());
  cfg.R_ini = static_cast<Index>(r.u64());
  cfg.L_ini = static_cast<Index>(r.u64());
  cfg.update_factors = r.byte() != 0;
  r.expect_end();
  s.validate();
  cfg.validate();
  return {std::move(s), cfg};
}

void write_slices_csv(const fs::path& path, const Tensor3& t) {
  std::ofstream out = open_output(path);
  out << std::setprecision(17);
  for (Index k = 0; k < t.dim_k(); ++k) {
    out << "# slice " << k << '\n';
    const auto s = t.slice(k);
    for (Index i = 0; i < t.dim_i(); ++i) {
      for (Index j = 0; j < t.dim_j(); ++j) out << (j ? "," : "") << s(i, j);
      out << '\n';
    }
  }
  if (!out) throw_io("failed writing " + path.string());
}

nlohmann::json to_json(const RankEstimate& est) {
  return {{"R_hat", est.R_hat},
          {"L_hat", est.L_hat},
          {"kept_blocks", est.kept_blocks},
          {"kept_columns", est.kept_columns},
          {"degenerate", est.degenerate}};
}

nlohmann::json trace_to_json(const std::vector<double>& trace) {
  return {{"objective", trace}, {"iterations", trace.empty() ? 0 : trace.size() - 1}};
}

void write_trace_csv(const fs::path& path, const std::vector<double>& trace) {
  std::ofstream out = open_output(path);
  out << "iter,objective\n" << std::setprecision(17);
  for (std::size_t n = 0; n < trace.size(); ++n) out << n << ',' << trace[n] << '\n';
  if (!out) throw_io("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw_io("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
}

}  // namespace btd::io
