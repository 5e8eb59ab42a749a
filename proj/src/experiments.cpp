#include "btd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <thread>

#include "btd/error.hpp"
#include "btd/io.hpp"
#include "btd/rng.hpp"

namespace btd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs fn(0..n-1) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

bool ranks_match(const RankEstimate& est, Index R_true, Index L_true) {
  if (est.degenerate || est.R_hat != R_true) return false;
  return std::all_of(est.L_hat.begin(), est.L_hat.end(), [&](Index l) { return l == L_true; });
}

double block_nmse(const BtdFactors& truth, const BtdFactors& est, const RankEstimate& ranks,
                  bool& mismatch) {
  if (ranks.degenerate || ranks.R_hat == 0) {
    mismatch = true;
    return 1.0;
  }
  const NmseResult r = nmse_blocks(truth, prune(est, ranks));
  mismatch = r.rank_mismatch;
  return r.nmse;
}

BatchConfig warm_batch_config(Index I, Index J, Index K, Index R_ini, Index L_ini, double sigma,
                              double snr_db, int max_iters, double rel_tol, double eta2,
                              double rank_threshold, std::uint64_t seed) {
  BatchConfig cfg;
  cfg.lambda = rule_lambda(L_ini, I, J, sigma);
  cfg.mu = rule_batch_mu(snr_db, K, R_ini, sigma);
  cfg.eta2 = eta2;
  cfg.R_ini = R_ini;
  cfg.L_ini = L_ini;
  cfg.max_iters = max_iters;
  cfg.rel_tol = rel_tol;
  cfg.rank_threshold = rank_threshold;
  cfg.seed = seed;
  return cfg;
}

nlohmann::json trial_json(const TrialRecord& t) {
  return {{"solver", t.solver},       {"snr_db", t.snr_db},
          {"trial", t.trial},         {"seed", t.seed},
          {"sigma", t.sigma},         {"re", t.re},
          {"noise_floor_re", t.noise_floor_re},
          {"nmse", t.nmse},           {"rank_mismatch", t.rank_mismatch},
          {"R_hat", t.R_hat},         {"L_hat", t.L_hat},
          {"ranks_correct", t.ranks_correct},
          {"iterations", t.iterations},
          {"converged", t.converged}};
}

nlohmann::json aggregate_json(const AggregateRecord& a) {
  return {{"solver", a.solver},
          {"snr_db", a.snr_db},
          {"trials", a.trials},
          {"median_re", a.median_re},
          {"median_nmse", a.median_nmse},
          {"median_nmse_x1e3", a.median_nmse * 1e3},
          {"median_noise_floor_re", a.median_noise_floor_re},
          {"rank_recovery_rate", a.rank_recovery_rate}};
}

std::string join(const std::vector<Index>& v, char sep) {
  std::string s;
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (n) s += sep;
    s += std::to_string(v[n]);
  }
  return s;
}

}  // namespace

double rule_lambda(Index L, Index I, Index J, double sigma_hat) {
  return static_cast<double>(L) * static_cast<double>(I + J) * sigma_hat;
}

double rule_batch_mu(double snr_db, Index K, Index R, double sigma_hat) {
  const double factor = snr_db <= 5.0 ? 0.75 : 2.0;
  return factor * static_cast<double>(K) * static_cast<double>(R) * sigma_hat;
}

TrialRecord run_batch_trial(const Tensor3& Y, const Tensor3& X, const BtdFactors& truth, double sigma,
                            double snr_db, const Experiment1Options& opt, std::uint64_t init_seed) {
  const BatchConfig cfg = warm_batch_config(opt.I, opt.J, Y.dim_k(), opt.R_ini, opt.L_ini, sigma, snr_db,
                                            opt.max_iters, opt.rel_tol, opt.eta2, opt.rank_threshold,
                                            init_seed);
  const auto t0 = Clock::now();
  const BatchResult res = btd_irls(Y, cfg);
  TrialRecord t;
  t.solver = "batch";
  t.seconds = seconds_since(t0);
  t.snr_db = snr_db;
  t.sigma = sigma;
  t.re = relative_error(Y, reconstruct(res.factors));
  t.noise_floor_re = relative_error(Y, X);
  t.nmse = block_nmse(truth, res.factors, res.ranks, t.rank_mismatch);
  t.R_hat = res.ranks.R_hat;
  t.L_hat = res.ranks.L_hat;
  t.ranks_correct = ranks_match(res.ranks, opt.R_true, opt.L_true);
  t.iterations = res.iterations;
  t.converged = res.converged;
  return t;
}

TrialRecord run_online_trial(const Tensor3& Y, const Tensor3& X, const BtdFactors& truth, double sigma,
                             double snr_db, const Experiment1Options& opt, std::uint64_t init_seed) {
  const Index K = Y.dim_k();
  const Index W = opt.warmup_slices;
  if (W >= K) throw_config("warm-up must be shorter than the tensor");
  const BatchConfig bcfg = warm_batch_config(opt.I, opt.J, W, opt.R_ini, opt.L_ini, sigma, snr_db,
                                             opt.max_iters, opt.rel_tol, opt.eta2, opt.rank_threshold,
                                             init_seed);
  OnlineConfig ocfg;
  ocfg.xi = opt.xi;
  ocfg.lambda = rule_lambda(opt.L_ini, opt.I, opt.J, sigma);
  ocfg.mu = rule_online_mu(opt.L_ini, opt.I, opt.J, sigma);
  ocfg.eta2 = opt.eta2;
  ocfg.warmup_slices = W;
  ocfg.R_ini = opt.R_ini;
  ocfg.L_ini = opt.L_ini;
  ocfg.rank_threshold = opt.rank_threshold;

  TrialRecord t;
  t.solver = "online";
  t.snr_db = snr_db;
  t.sigma = sigma;

  const Tensor3 warm = Y.slices(0, W);
  const auto t0 = Clock::now();
  BatchResult br;
  OnlineSolver solver = OnlineSolver::warm_start(warm, bcfg, ocfg, &br);
  double elapsed = seconds_since(t0);

  double err_sq = (warm.mode3() - br.factors.C * build_S(br.factors.A, br.factors.B, br.factors.L,
                                                         br.factors.R).transpose())
                      .squaredNorm();
  Matrix C_hat(K, br.factors.R);
  C_hat.topRows(W) = br.factors.C;
  t.step_seconds.reserve(static_cast<std::size_t>(K - W));
  RowMatrix y;
  RowMatrix x;
  for (Index k = W; k < K; ++k) {
    y = Y.slice(k);
    x = X.slice(k);
    const StepMetrics m = solver.push(y, &x);
    elapsed += m.seconds;
    t.step_seconds.push_back(m.seconds);
    const Vector& g = solver.last_gamma();
    C_hat.row(k) = g.transpose();
    err_sq += (y - frontal_slice_model(solver.state().A, solver.state().B, g, solver.state().L))
                  .squaredNorm();
  }
  t.seconds = elapsed;
  t.re = std::sqrt(err_sq / Y.squared_norm());
  t.noise_floor_re = relative_error(Y, X);
  const RankEstimate ranks = online_ranks(solver.state(), opt.rank_threshold);
  const BtdFactors est(solver.state().A, solver.state().B, C_hat, solver.state().L);
  t.nmse = block_nmse(truth, est, ranks, t.rank_mismatch);
  t.R_hat = ranks.R_hat;
  t.L_hat = ranks.L_hat;
  t.ranks_correct = ranks_match(ranks, opt.R_true, opt.L_true);
  t.iterations = br.iterations;
  t.converged = br.converged;
  return t;
}

std::vector<AggregateRecord> aggregate(const std::vector<TrialRecord>& trials) {
  std::map<std::pair<std::string, double>, std::vector<const TrialRecord*>> groups;
  for (const auto& t : trials) groups[{t.solver, t.snr_db}].push_back(&t);
  std::vector<AggregateRecord> out;
  for (const auto& [key, group] : groups) {
    AggregateRecord a;
    a.solver = key.first;
    a.snr_db = key.second;
    a.trials = static_cast<int>(group.size());
    std::vector<double> re, nmse, floor;
    int correct = 0;
    for (const TrialRecord* t : group) {
      re.push_back(t->re);
      nmse.push_back(t->nmse);
      floor.push_back(t->noise_floor_re);
      correct += t->ranks_correct ? 1 : 0;
      a.total_seconds += t->seconds;
    }
    a.median_re = median(re);
    a.median_nmse = median(nmse);
    a.median_noise_floor_re = median(floor);
    a.rank_recovery_rate = static_cast<double>(correct) / static_cast<double>(group.size());
    a.mean_seconds = a.total_seconds / static_cast<double>(group.size());
    out.push_back(a);
  }
  return out;
}

ExperimentReport run_experiment1(const Experiment1Options& opt) {
  if (opt.trials <= 0) throw_config("trials must be positive");
  struct Task {
    std::size_t snr_index;
    int trial;
    bool online;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < opt.snr_db.size(); ++s) {
    for (int t = 0; t < opt.trials; ++t) {
      if (opt.run_batch) tasks.push_back({s, t, false});
      if (opt.run_online) tasks.push_back({s, t, true});
    }
  }
  ExperimentReport report;
  report.name = "experiment1";
  report.trials.resize(tasks.size());

  parallel_for(tasks.size(), opt.threads, [&](std::size_t n) {
    const Task& task = tasks[n];
    const std::uint64_t trial_seed = derive_seed(opt.master_seed, static_cast<std::uint64_t>(task.trial));
    GenSpec gen;
    gen.I = opt.I;
    gen.J = opt.J;
    gen.K = opt.K;
    gen.R_true = opt.R_true;
    gen.L_true = {opt.L_true};
    gen.seed = derive_seed(trial_seed, 1);
    const Generated g = generate(gen);
    const double snr = opt.snr_db[task.snr_index];
    const Noisy noisy = add_noise(g.X, {snr, derive_seed(trial_seed, 100 + task.snr_index)});
    const std::uint64_t init_seed = derive_seed(trial_seed, 2);
    TrialRecord rec = task.online
                          ? run_online_trial(noisy.Y, g.X, g.truth.first, noisy.sigma, snr, opt, init_seed)
                          : run_batch_trial(noisy.Y, g.X, g.truth.first, noisy.sigma, snr, opt, init_seed);
    rec.trial = task.trial;
    rec.seed = trial_seed;
    report.trials[n] = std::move(rec);
  });
  report.aggregates = aggregate(report.trials);
  return report;
}

const AggregateRecord* ExperimentReport::find(const std::string& solver, double snr_db) const {
  for (const auto& a : aggregates) {
    if (a.solver == solver && std::abs(a.snr_db - snr_db) < 1e-9) return &a;
  }
  return nullptr;
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : aggregates) j["aggregates"].push_back(aggregate_json(a));
  j["trials"] = nlohmann::json::array();
  for (const auto& t : trials) j["trials"].push_back(trial_json(t));
  return j;
}

void ExperimentReport::write(const std::filesystem::path& dir) const {
  io::write_json(dir / "report.json", to_json());
  {
    std::ofstream out = io::open_output(dir / "trials.csv");
    out << "solver,snr_db,trial,seed,sigma,re,noise_floor_re,nmse,rank_mismatch,R_hat,L_hat,"
           "ranks_correct,iterations,converged\n"
        << std::setprecision(10);
    for (const auto& t : trials) {
      out << t.solver << ',' << t.snr_db << ',' << t.trial << ',' << t.seed << ',' << t.sigma << ','
          << t.re << ',' << t.noise_floor_re << ',' << t.nmse << ',' << t.rank_mismatch << ','
          << t.R_hat << ',' << join(t.L_hat, ';') << ',' << t.ranks_correct << ',' << t.iterations
          << ',' << t.converged << '\n';
    }
    if (!out) throw_io("failed writing trials.csv");
  }
  {
    std::ofstream out = io::open_output(dir / "summary.csv");
    out << "solver,snr_db,trials,median_re,median_nmse_x1e3,median_noise_floor_re,rank_recovery_rate\n"
        << std::setprecision(10);
    for (const auto& a : aggregates) {
      out << a.solver << ',' << a.snr_db << ',' << a.trials << ',' << a.median_re << ','
          << a.median_nmse * 1e3 << ',' << a.median_noise_floor_re << ',' << a.rank_recovery_rate << '\n';
    }
    if (!out) throw_io("failed writing summary.csv");
  }
  // Wall-clock measurements are kept apart so the files above are
  // reproducible byte for byte.
  std::ofstream out = io::open_output(dir / "timing.csv");
  out << "solver,snr_db,trial,seconds\n" << std::setprecision(10);
  for (const auto& t : trials) out << t.solver << ',' << t.snr_db << ',' << t.trial << ',' << t.seconds << '\n';
  if (!out) throw_io("failed writing timing.csv");
}

std::vector<double> nse_trace(const std::vector<StepMetrics>& steps) {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.nse);
  return out;
}

TrackingSummary summarize_tracking(const StreamTrace& trace, Index k_star, Index baseline_window,
                                   Index recovery_steps) {
  auto window = [&](std::int64_t first, std::int64_t last) {
    std::vector<double> v;
    for (std::size_t n = 0; n < trace.k.size(); ++n) {
      if (trace.k[n] >= first && trace.k[n] <= last) v.push_back(trace.nse[n]);
    }
    return v;
  };
  TrackingSummary s;
  const auto pre = window(k_star - baseline_window, k_star - 1);
  const auto at = window(k_star, k_star);
  const auto post = window(k_star + recovery_steps - baseline_window, k_star + recovery_steps - 1);
  if (pre.empty() || at.empty() || post.empty()) {
    throw_config("stream trace does not cover the change point windows");
  }
  s.pre_change_median = median(pre);
  s.spike_nse = at.front();
  s.post_change_median = median(post);
  s.spike_detected = s.spike_nse > s.pre_change_median;
  s.recovered = s.post_change_median <= 2.0 * s.pre_change_median;
  s.final_R_hat = trace.R_hat.empty() ? 0 : trace.R_hat.back();
  return s;
}

Experiment2Report run_experiment2(const Experiment2Options& opt) {
  if (opt.trials <= 0) throw_config("trials must be positive");
  if (opt.k_star <= opt.warmup_slices + 1 || opt.k_star > opt.K) {
    throw_config("change point must fall after the warm-up and inside the stream");
  }
  Experiment2Report report;
  report.trials.resize(static_cast<std::size_t>(opt.trials));

  parallel_for(report.trials.size(), opt.threads, [&](std::size_t n) {
    Experiment2Trial& tr = report.trials[n];
    tr.trial = static_cast<int>(n);
    tr.seed = derive_seed(opt.master_seed, n);
    GenSpec gen;
    gen.I = opt.I;
    gen.J = opt.J;
    gen.K = opt.K;
    gen.R_true = opt.R_before;
    gen.L_true = {opt.L_before};
    gen.seed = derive_seed(tr.seed, 1);
    gen.change_point = ChangePoint{opt.k_star, opt.R_after, {opt.L_after}};
    const Generated g = generate(gen);
    const Noisy noisy = add_noise(g.X, {opt.snr_db, derive_seed(tr.seed, 100)});
    tr.sigma = noisy.sigma;

    const Index W = opt.warmup_slices;
    const BatchConfig bcfg = warm_batch_config(opt.I, opt.J, W, opt.R_ini, opt.L_ini, noisy.sigma,
                                               opt.snr_db, opt.max_iters, opt.rel_tol, opt.eta2,
                                               opt.rank_threshold, derive_seed(tr.seed, 2));
    OnlineConfig ocfg;
    ocfg.xi = opt.xi;
    ocfg.lambda = rule_lambda(opt.L_ini, opt.I, opt.J, noisy.sigma);
    ocfg.mu = rule_online_mu(opt.L_ini, opt.I, opt.J, noisy.sigma);
    ocfg.eta2 = opt.eta2;
    ocfg.warmup_slices = W;
    ocfg.R_ini = opt.R_ini;
    ocfg.L_ini = opt.L_ini;
    ocfg.rank_threshold = opt.rank_threshold;

    OnlineSolver solver = OnlineSolver::warm_start(noisy.Y.slices(0, W), bcfg, ocfg);
    RowMatrix y;
    RowMatrix x;
    for (Index k = W; k < opt.K; ++k) {
      y = noisy.Y.slice(k);
      x = g.X.slice(k);
      const StepMetrics m = solver.push(y, &x);
      tr.trace.k.push_back(k + 1);
      tr.trace.nse.push_back(m.nse);
      tr.trace.seconds.push_back(m.seconds);
      tr.trace.R_hat.push_back(m.ranks.R_hat);
      tr.trace.L_hat.push_back(m.ranks.L_hat);
    }
    tr.summary = summarize_tracking(tr.trace, opt.k_star, opt.baseline_window, opt.recovery_steps);
  });

  int transitioned = 0;
  int recovered = 0;
  for (const auto& tr : report.trials) {
    transitioned += tr.summary.final_R_hat == opt.R_after ? 1 : 0;
    recovered += tr.summary.recovered && tr.summary.spike_detected ? 1 : 0;
  }
  report.rank_transition_rate = static_cast<double>(transitioned) / opt.trials;
  report.recovery_rate = static_cast<double>(recovered) / opt.trials;
  return report;
}

nlohmann::json Experiment2Report::to_json() const {
  nlohmann::json j;
  j["name"] = "experiment2";
  j["rank_transition_rate"] = rank_transition_rate;
  j["recovery_rate"] = recovery_rate;
  j["trials"] = nlohmann::json::array();
  for (const auto& t : trials) {
    j["trials"].push_back({{"trial", t.trial},
                           {"seed", t.seed},
                           {"sigma", t.sigma},
                           {"spike_nse", t.summary.spike_nse},
                           {"pre_change_median_nse", t.summary.pre_change_median},
                           {"post_change_median_nse", t.summary.post_change_median},
                           {"spike_detected", t.summary.spike_detected},
                           {"recovered", t.summary.recovered},
                           {"final_R_hat", t.summary.final_R_hat}});
  }
  return j;
}

void write_nse_csv(const std::filesystem::path& path, const StreamTrace& trace) {
  std::ofstream out = io::open_output(path);
  out << "k,nse\n" << std::setprecision(12);
  for (std::size_t n = 0; n < trace.k.size(); ++n) out << trace.k[n] << ',' << trace.nse[n] << '\n';
  if (!out) throw_io("failed writing " + path.string());
}

void write_rank_csv(const std::filesystem::path& path, const StreamTrace& trace) {
  std::ofstream out = io::open_output(path);
  out << "k,R_hat,L_hat\n";
  for (std::size_t n = 0; n < trace.k.size(); ++n) {
    out << trace.k[n] << ',' << trace.R_hat[n] << ',' << join(trace.L_hat[n], ';') << '\n';
  }
  if (!out) throw_io("failed writing " + path.string());
}

void write_step_timing_csv(const std::filesystem::path& path, const StreamTrace& trace) {
  std::ofstream out = io::open_output(path);
  out << "k,seconds\n" << std::setprecision(10);
  for (std::size_t n = 0; n < trace.k.size(); ++n) out << trace.k[n] << ',' << trace.seconds[n] << '\n';
  if (!out) throw_io("failed writing " + path.string());
}

void Experiment2Report::write(const std::filesystem::path& dir) const {
  io::write_json(dir / "report.json", to_json());
  for (const auto& t : trials) {
    const std::string suffix = trials.size() == 1 ? "" : "_" + std::to_string(t.trial);
    write_nse_csv(dir / ("nse" + suffix + ".csv"), t.trace);
    write_rank_csv(dir / ("ranks" + suffix + ".csv"), t.trace);
    write_step_timing_csv(dir / ("timing" + suffix + ".csv"), t.trace);
  }
}

}  // namespace btd
