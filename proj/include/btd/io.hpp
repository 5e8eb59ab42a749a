#pragma once

// File formats. All integers are uint64 and all reals IEEE-754 binary64,
// little-endian.
//
// Tensor (.bin):      I, J, K, then I*J*K reals in the tensor linearization
//                     (slice k, row i, column j; j fastest).
// Factors (.btdf):    magic "BTDFACT1", I, J, K, L, R, then A (I x LR),
//                     B (J x LR), C (K x R), each column-major.
// Checkpoint (.btdc): magic "BTDCKPT1", I, J, k, L, R, then A, B, V_A, G_A,
//                     V_B, G_B (column-major), c_energy (R), then xi, lambda,
//                     mu, eta2, rank_threshold (reals), warmup_slices, R_ini,
//                     L_ini (uint64), update_factors (one byte).

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "btd/batch.hpp"
#include "btd/online.hpp"
#include "btd/tensor.hpp"

namespace btd::io {

void write_tensor(const std::filesystem::path& path, const Tensor3& t);
Tensor3 read_tensor(const std::filesystem::path& path);

// Streams frontal slices of a tensor file without loading the whole tensor.
class TensorSliceReader {
 public:
  explicit TensorSliceReader(const std::filesystem::path& path);
  const Dims& dims() const { return dims_; }
  Index next_index() const { return next_; }
  // Reads the next slice into `out`; returns false at end of file.
  bool next(RowMatrix& out);

 private:
  std::ifstream in_;
  Dims dims_;
  Index next_ = 0;
};

void write_factors(const std::filesystem::path& path, const BtdFactors& f);
BtdFactors read_factors(const std::filesystem::path& path);

void write_checkpoint(const std::filesystem::path& path, const OnlineState& state, const OnlineConfig& cfg);
// Restores the state and the configuration it was produced with.
std::pair<OnlineState, OnlineConfig> read_checkpoint(const std::filesystem::path& path);

// Debug dump: for each slice a "# slice k" line followed by I rows of J values.
void write_slices_csv(const std::filesystem::path& path, const Tensor3& t);

nlohmann::json to_json(const RankEstimate& est);
nlohmann::json trace_to_json(const std::vector<double>& trace);
void write_trace_csv(const std::filesystem::path& path, const std::vector<double>& trace);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// Opens a file for writing, creating parent directories; throws an I/O error.
std::ofstream open_output(const std::filesystem::path& path, bool binary = false);

}  // namespace btd::io
