#pragma once

// Monte Carlo drivers for the stationary accuracy/run-time comparison
// (experiment 1) and the abrupt model change tracking run (experiment 2).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "btd/batch.hpp"
#include "btd/harness.hpp"
#include "btd/online.hpp"

namespace btd {

// Regularization rules driven by the noise level estimate sigma_hat.
// L, R are the (over)estimated ranks the solver runs with.
double rule_lambda(Index L, Index I, Index J, double sigma_hat);            // L (I + J) sigma
double rule_batch_mu(double snr_db, Index K, Index R, double sigma_hat);    // {0.75, 2} K R sigma
inline double rule_online_mu(Index L, Index I, Index J, double sigma_hat) {
  return rule_lambda(L, I, J, sigma_hat);
}

struct Experiment1Options {
  Index I = 40;
  Index J = 35;
  Index K = 1250;
  Index R_true = 5;
  Index L_true = 4;
  Index R_ini = 10;
  Index L_ini = 10;
  Index warmup_slices = 50;
  int trials = 50;
  std::vector<double> snr_db{5.0, 10.0, 15.0};
  std::uint64_t master_seed = 2022;
  unsigned threads = 1;
  int max_iters = 500;
  double rel_tol = 1e-5;
  double eta2 = 1e-8;
  double rank_threshold = 1e-2;
  double xi = 1.0;
  bool run_batch = true;
  bool run_online = true;
};

struct TrialRecord {
  std::string solver;  // "batch" or "online"
  double snr_db = 0.0;
  int trial = 0;
  std::uint64_t seed = 0;
  double sigma = 0.0;
  double re = 0.0;
  double noise_floor_re = 0.0;  // ||Y - X|| / ||Y|| of the true model
  double nmse = 0.0;
  bool rank_mismatch = false;
  Index R_hat = 0;
  std::vector<Index> L_hat;
  bool ranks_correct = false;
  double seconds = 0.0;
  int iterations = 0;
  bool converged = true;
  std::vector<double> step_seconds;  // online only; not serialized to JSON
};

struct AggregateRecord {
  std::string solver;
  double snr_db = 0.0;
  int trials = 0;
  double median_re = 0.0;
  double median_nmse = 0.0;
  double median_noise_floor_re = 0.0;
  double rank_recovery_rate = 0.0;
  double mean_seconds = 0.0;
  double total_seconds = 0.0;
};

struct ExperimentReport {
  std::string name;
  std::vector<TrialRecord> trials;
  std::vector<AggregateRecord> aggregates;

  const AggregateRecord* find(const std::string& solver, double snr_db) const;
  nlohmann::json to_json() const;
  // report.json, trials.csv, summary.csv (deterministic) and timing.csv.
  void write(const std::filesystem::path& dir) const;
};

ExperimentReport run_experiment1(const Experiment1Options& opt);

// Single trials, exposed for drivers and tests.
TrialRecord run_batch_trial(const Tensor3& Y, const Tensor3& X, const BtdFactors& truth, double sigma,
                            double snr_db, const Experiment1Options& opt, std::uint64_t init_seed);
TrialRecord run_online_trial(const Tensor3& Y, const Tensor3& X, const BtdFactors& truth, double sigma,
                             double snr_db, const Experiment1Options& opt, std::uint64_t init_seed);

std::vector<AggregateRecord> aggregate(const std::vector<TrialRecord>& trials);

struct Experiment2Options {
  Index I = 40;
  Index J = 35;
  Index K = 5000;
  Index k_star = 2001;
  Index R_before = 5;
  Index L_before = 4;
  Index R_after = 4;
  Index L_after = 2;
  Index R_ini = 10;
  Index L_ini = 10;
  Index warmup_slices = 50;
  double snr_db = 10.0;
  double xi = 0.985;
  int trials = 1;
  std::uint64_t master_seed = 2022;
  unsigned threads = 1;
  int max_iters = 500;
  double rel_tol = 1e-5;
  double eta2 = 1e-8;
  double rank_threshold = 1e-2;
  // Window lengths for the tracking summary.
  Index baseline_window = 100;
  Index recovery_steps = 500;
};

struct StreamTrace {
  std::vector<std::int64_t> k;  // 1-based slice index
  std::vector<double> nse;
  std::vector<double> seconds;
  std::vector<Index> R_hat;
  std::vector<std::vector<Index>> L_hat;
};

struct TrackingSummary {
  double spike_nse = 0.0;            // NSE at k*
  double pre_change_median = 0.0;    // trailing window before k*
  double post_change_median = 0.0;   // window ending recovery_steps after k*
  bool spike_detected = false;
  bool recovered = false;
  Index final_R_hat = 0;
};

struct Experiment2Trial {
  int trial = 0;
  std::uint64_t seed = 0;
  double sigma = 0.0;
  StreamTrace trace;
  TrackingSummary summary;
};

struct Experiment2Report {
  std::vector<Experiment2Trial> trials;
  double rank_transition_rate = 0.0;  // fraction of trials ending with R_hat == R_after
  double recovery_rate = 0.0;

  nlohmann::json to_json() const;
  // report.json, nse.csv, ranks.csv (deterministic) and timing.csv.
  void write(const std::filesystem::path& dir) const;
};

Experiment2Report run_experiment2(const Experiment2Options& opt);

TrackingSummary summarize_tracking(const StreamTrace& trace, Index k_star, Index baseline_window,
                                   Index recovery_steps);

std::vector<double> nse_trace(const std::vector<StepMetrics>& steps);

// Writes "k,nse" rows.
void write_nse_csv(const std::filesystem::path& path, const StreamTrace& trace);
// Writes "k,R_hat,L_hat" rows with L_hat as a ';'-separated list.
void write_rank_csv(const std::filesystem::path& path, const StreamTrace& trace);
// Writes "k,seconds" rows.
void write_step_timing_csv(const std::filesystem::path& path, const StreamTrace& trace);

}  // namespace btd
