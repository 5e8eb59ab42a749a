// btd: generate synthetic data, run the batch and streaming decompositions,
// and reproduce the Monte Carlo experiments.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "btd/batch.hpp"
#include "btd/config.hpp"
#include "btd/error.hpp"
#include "btd/experiments.hpp"
#include "btd/harness.hpp"
#include "btd/io.hpp"
#include "btd/online.hpp"

namespace fs = std::filesystem;
using namespace btd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitNotConverged = 4;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> trials;
  std::optional<double> snr_db;
  std::optional<double> xi;
  std::optional<double> sigma_hat;
  std::optional<std::string> input;
  std::optional<std::string> reference;
  std::optional<std::string> resume;
  bool quick = false;
};

RunConfig load(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.out) cfg.io.output_dir = *o.out;
  if (o.trials) cfg.experiment.trials = *o.trials;
  if (o.snr_db) {
    if (!cfg.noise) cfg.noise = NoiseSpec{};
    cfg.noise->snr_db = *o.snr_db;
    cfg.experiment.snr_db = {*o.snr_db};
  }
  if (o.seed) {
    cfg.generate.seed = *o.seed;
    cfg.batch.cfg.seed = *o.seed;
    cfg.experiment.master_seed = *o.seed;
    if (cfg.noise) cfg.noise->seed = *o.seed;
  }
  if (o.xi) cfg.online.cfg.xi = *o.xi;
  if (o.sigma_hat) {
    cfg.batch.sigma_hat = *o.sigma_hat;
    cfg.online.sigma_hat = *o.sigma_hat;
  }
  if (o.input) cfg.io.input = *o.input;
  if (o.reference) cfg.io.reference = *o.reference;
  if (o.resume) cfg.io.resume = *o.resume;
  if (o.quick) cfg.experiment.quick = true;
  // Re-parse so that overridden values pass the same validation.
  return parse_run_config(to_json(cfg));
}

unsigned thread_budget(const RunConfig& cfg) {
  unsigned n = cfg.experiment.threads.value_or(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("BTD_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) throw_config("BTD_THREADS must be a positive integer");
    n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

void require_input(const RunConfig& cfg) {
  if (cfg.io.input.empty()) throw_config("no input tensor: set io.input or pass --input");
}

int cmd_generate(const RunConfig& cfg) {
  const fs::path out = cfg.io.output_dir;
  const Generated g = generate(cfg.generate);
  nlohmann::json meta;
  meta["dims"] = {g.X.dim_i(), g.X.dim_j(), g.X.dim_k()};
  meta["generate"] = to_json(cfg)["generate"];
  meta["tensor_bytes"] = 24 + 8 * g.X.numel();
  io::write_tensor(out / "clean.bin", g.X);
  if (cfg.noise) {
    const Noisy n = add_noise(g.X, *cfg.noise);
    io::write_tensor(out / "tensor.bin", n.Y);
    meta["noise"] = {{"snr_db", cfg.noise->snr_db},
                     {"seed", cfg.noise->seed},
                     {"sigma", n.sigma},
                     {"realized_snr_db", n.realized_snr_db}};
  } else {
    io::write_tensor(out / "tensor.bin", g.X);
    meta["noise"] = nullptr;
  }
  io::write_factors(out / "truth.btdf", g.truth.first);
  if (g.truth.second) {
    io::write_factors(out / "truth_2.btdf", *g.truth.second);
    meta["split"] = g.truth.split;
  }
  io::write_json(out / "metadata.json", meta);
  std::cout << "wrote " << (out / "tensor.bin").string() << " (" << g.X.dim_i() << " x " << g.X.dim_j()
            << " x " << g.X.dim_k() << ")\n";
  return kExitOk;
}

int cmd_batch(const RunConfig& cfg) {
  require_input(cfg);
  const fs::path out = cfg.io.output_dir;
  const Tensor3 Y = io::read_tensor(cfg.io.input);
  const BatchConfig bcfg = resolve_batch(cfg, Y.dims());
  const BatchResult res = btd_irls(Y, bcfg);
  io::write_factors(out / "factors.btdf", res.factors);
  if (!res.ranks.degenerate && res.ranks.R_hat > 0) {
    io::write_factors(out / "factors_pruned.btdf", prune(res.factors, res.ranks));
  }
  nlohmann::json ranks = io::to_json(res.ranks);
  ranks["iterations"] = res.iterations;
  ranks["converged"] = res.converged;
  io::write_json(out / "ranks.json", ranks);
  io::write_json(out / "trace.json", io::trace_to_json(res.trace));
  io::write_trace_csv(out / "trace.csv", res.trace);
  std::cout << "R_hat = " << res.ranks.R_hat << ", iterations = " << res.iterations
            << (res.converged ? "" : " (not converged)") << "\n";
  return res.converged ? kExitOk : kExitNotConverged;
}

int cmd_stream(const RunConfig& cfg, bool rewarm) {
  require_input(cfg);
  const fs::path out = cfg.io.output_dir;
  io::TensorSliceReader reader(cfg.io.input);
  const Dims dims = reader.dims();
  std::optional<io::TensorSliceReader> reference;
  if (!cfg.io.reference.empty()) {
    reference.emplace(cfg.io.reference);
    if (reference->dims() != dims) throw_config("reference tensor dimensions differ from the input");
  }

  std::optional<OnlineSolver> solver;
  Matrix C_warm;
  RowMatrix y;
  RowMatrix x;
  std::int64_t skipped = 0;
  if (!cfg.io.resume.empty()) {
    auto [state, ocfg] = io::read_checkpoint(cfg.io.resume);
    if (state.dim_i() != dims.I || state.dim_j() != dims.J) {
      throw_config("checkpoint does not match the input slice dimensions");
    }
    if (state.k > dims.K) throw_config("checkpoint is ahead of the input tensor");
    skipped = state.k;
    for (std::int64_t k = 0; k < skipped; ++k) {
      reader.next(y);
      if (reference) reference->next(x);
    }
    if (!rewarm) solver.emplace(ocfg, std::move(state));
  } else if (rewarm) {
    throw_config("--rewarm requires --resume");
  }
  if (!solver) {
    // Fresh fit on the next warmup_slices slices; slice indices continue from the checkpoint.
    const OnlineConfig ocfg = resolve_online(cfg, dims);
    const Index W = ocfg.warmup_slices;
    if (skipped + W >= dims.K) throw_config("warmup_slices must be smaller than the number of remaining slices");
    Tensor3 warm(dims.I, dims.J, W);
    for (Index k = 0; k < W; ++k) {
      reader.next(y);
      warm.slice(k) = y;
      if (reference) reference->next(x);
    }
    const BatchConfig bcfg = resolve_batch(cfg, warm.dims());
    BatchResult br;
    OnlineSolver fresh = OnlineSolver::warm_start(warm, bcfg, ocfg, &br);
    OnlineState state = fresh.state();
    state.k += skipped;
    solver.emplace(fresh.config(), std::move(state));
    C_warm = br.factors.C;
  }

  StreamTrace trace;
  std::vector<Vector> gammas;
  while (reader.next(y)) {
    const RowMatrix* ref = nullptr;
    if (reference) {
      reference->next(x);
      ref = &x;
    }
    const StepMetrics m = solver->push(y, ref);
    trace.k.push_back(m.k);
    trace.nse.push_back(m.nse);
    trace.seconds.push_back(m.seconds);
    trace.R_hat.push_back(m.ranks.R_hat);
    trace.L_hat.push_back(m.ranks.L_hat);
    gammas.push_back(solver->last_gamma());
  }

  const OnlineState& st = solver->state();
  Matrix C(C_warm.rows() + static_cast<Index>(gammas.size()), st.R);
  C.topRows(C_warm.rows()) = C_warm;
  for (std::size_t n = 0; n < gammas.size(); ++n) C.row(C_warm.rows() + static_cast<Index>(n)) = gammas[n];
  io::write_factors(out / "factors.btdf", BtdFactors(st.A, st.B, C, st.L));
  io::write_checkpoint(out / "checkpoint.btdc", st, solver->config());
  write_nse_csv(out / "nse.csv", trace);
  write_rank_csv(out / "ranks.csv", trace);
  write_step_timing_csv(out / "timing.csv", trace);
  io::write_json(out / "ranks.json", io::to_json(online_ranks(st, solver->config().rank_threshold)));
  std::cout << "streamed " << gammas.size() << " slices; R_hat = "
            << (trace.R_hat.empty() ? online_ranks(st, solver->config().rank_threshold).R_hat
                                    : trace.R_hat.back())
            << "\n";
  return kExitOk;
}

int cmd_experiment(const RunConfig& cfg, std::optional<double> xi) {
  const fs::path out = cfg.io.output_dir;
  const ExperimentSection& e = cfg.experiment;
  const int quick_trials = 20;
  if (e.which == 1) {
    Experiment1Options opt;
    opt.trials = e.trials.value_or(e.quick ? quick_trials : opt.trials);
    if (!e.snr_db.empty()) opt.snr_db = e.snr_db;
    opt.master_seed = e.master_seed;
    opt.threads = thread_budget(cfg);
    if (xi) opt.xi = *xi;
    const ExperimentReport report = run_experiment1(opt);
    report.write(out);
    std::cout << std::left << std::setw(8) << "solver" << std::setw(8) << "snr_db" << std::setw(12)
              << "median_re" << std::setw(14) << "nmse_x1e3" << std::setw(12) << "rank_rate"
              << "mean_s\n";
    for (const auto& a : report.aggregates) {
      std::cout << std::setw(8) << a.solver << std::setw(8) << a.snr_db << std::setw(12) << a.median_re
                << std::setw(14) << a.median_nmse * 1e3 << std::setw(12) << a.rank_recovery_rate
                << a.mean_seconds << "\n";
    }
  } else {
    Experiment2Options opt;
    opt.trials = e.trials.value_or(opt.trials);
    if (!e.snr_db.empty()) opt.snr_db = e.snr_db.front();
    opt.master_seed = e.master_seed;
    opt.threads = thread_budget(cfg);
    if (xi) opt.xi = *xi;
    const Experiment2Report report = run_experiment2(opt);
    report.write(out);
    for (const auto& t : report.trials) {
      std::cout << "trial " << t.trial << ": spike " << t.summary.spike_nse << ", pre-change median "
                << t.summary.pre_change_median << ", post-change median " << t.summary.post_change_median
                << ", final R_hat " << t.summary.final_R_hat << "\n";
    }
    std::cout << "rank transition rate " << report.rank_transition_rate << ", recovery rate "
              << report.recovery_rate << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank-revealing block-term tensor decomposition"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Seed for data, initialization and trials");
    sub->add_option("--out", o.out, "Output directory");
  };

  CLI::App* gen = app.add_subcommand("generate", "Write a synthetic tensor, its clean version and ground truth");
  add_common(gen);
  gen->add_option("--snr-db", o.snr_db, "Add noise at this SNR");

  CLI::App* batch = app.add_subcommand("batch", "Batch decomposition of a tensor file");
  add_common(batch);
  batch->add_option("--input", o.input, "Tensor file");
  batch->add_option("--sigma-hat", o.sigma_hat, "Noise level estimate for the parameter rules");
  batch->add_option("--snr-db", o.snr_db, "SNR used to pick the mu rule");

  CLI::App* stream = app.add_subcommand("stream", "Warm-started streaming decomposition of a tensor file");
  add_common(stream);
  stream->add_option("--input", o.input, "Tensor file");
  stream->add_option("--reference", o.reference, "Clean tensor file for the NSE trace");
  stream->add_option("--resume", o.resume, "Continue from a checkpoint");
  bool rewarm = false;
  stream->add_flag("--rewarm", rewarm, "With --resume: batch warm start again on the slices after the checkpoint");
  stream->add_option("--xi", o.xi, "Forgetting factor");
  stream->add_option("--sigma-hat", o.sigma_hat, "Noise level estimate for the parameter rules");
  stream->add_option("--snr-db", o.snr_db, "SNR used to pick the warm-start mu rule");

  CLI::App* exp = app.add_subcommand("experiment", "Reproduce a Monte Carlo experiment");
  add_common(exp);
  int which = 0;
  exp->add_option("which", which, "1 (accuracy and run time) or 2 (tracking)")->required()->check(CLI::IsMember({1, 2}));
  exp->add_option("--trials", o.trials, "Number of trials");
  exp->add_option("--snr-db", o.snr_db, "Single SNR point");
  exp->add_option("--xi", o.xi, "Forgetting factor");
  exp->add_flag("--quick", o.quick, "20 trials unless --trials is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = load(o);
    if (exp->parsed()) {
      cfg.experiment.which = which;
      return cmd_experiment(cfg, o.xi);
    }
    if (gen->parsed()) return cmd_generate(cfg);
    if (batch->parsed()) return cmd_batch(cfg);
    return cmd_stream(cfg, rewarm);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kNumerical ? kExitNumerical : kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
