#pragma once

// Run configuration for the command-line front end.
//
// A JSON object with optional sections; every key is validated and unknown
// keys are rejected:
//
//   {
//     "generate":   {"I", "J", "K", "R_true", "L_true", "seed",
//                    "change_point": {"k_star", "R_new", "L_new"}},
//     "noise":      {"snr_db", "seed"},
//     "batch":      {"lambda", "mu", "sigma_hat", "rule_snr_db", "eta2", "R_ini", "L_ini",
//                    "max_iters", "rel_tol", "seed", "rank_threshold", "prune_in_loop",
//                    "sweep_order"},
//     "online":     {"xi", "lambda", "mu", "sigma_hat", "eta2", "warmup_slices",
//                    "rank_threshold"},
//     "io":         {"input", "reference", "output_dir", "resume"},
//     "experiment": {"which", "trials", "snr_db", "master_seed", "quick", "threads"}
//   }
//
// When lambda or mu is absent they follow the noise-driven rules from
// sigma_hat: lambda = L_ini (I + J) sigma_hat, batch mu = c K R_ini sigma_hat
// with c = 0.75 at rule_snr_db <= 5 and 2 otherwise, online mu = lambda.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "btd/batch.hpp"
#include "btd/harness.hpp"
#include "btd/online.hpp"

namespace btd {

struct BatchSection {
  BatchConfig cfg;  // lambda/mu inside are ignored unless set below
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<double> sigma_hat;
  std::optional<double> rule_snr_db;

  friend bool operator==(const BatchSection&, const BatchSection&) = default;
};

struct OnlineSection {
  OnlineConfig cfg;
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<double> sigma_hat;

  friend bool operator==(const OnlineSection&, const OnlineSection&) = default;
};

struct IoSection {
  std::string input;
  std::string reference;
  std::string output_dir = "out";
  std::string resume;

  friend bool operator==(const IoSection&, const IoSection&) = default;
};

struct ExperimentSection {
  int which = 1;
  std::optional<int> trials;
  std::vector<double> snr_db;
  std::uint64_t master_seed = 2022;
  bool quick = false;
  std::optional<unsigned> threads;

  friend bool operator==(const ExperimentSection&, const ExperimentSection&) = default;
};

struct RunConfig {
  GenSpec generate;
  std::optional<NoiseSpec> noise;
  BatchSection batch;
  OnlineSection online;
  IoSection io;
  ExperimentSection experiment;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Throws Error(kConfig) naming the offending key.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

// Batch configuration with lambda and mu resolved for an I x J x K input.
BatchConfig resolve_batch(const RunConfig& cfg, Dims dims);
// Online configuration with lambda and mu resolved; R_ini and L_ini come
// from the batch section.
OnlineConfig resolve_online(const RunConfig& cfg, Dims dims);

}  // namespace btd
