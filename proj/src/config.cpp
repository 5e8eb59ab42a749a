#include "btd/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "btd/error.hpp"
#include "btd/experiments.hpp"

namespace btd {

using nlohmann::json;

namespace {

// Typed access to one JSON object; records which keys were read so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw_config("section '" + name_ + "' must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "must be a number");
    return v.get<double>();
  }

  std::optional<double> opt_number(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return number(key, 0.0);
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "must be an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      fail(key, "must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "must be a boolean");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(key, "must be a string");
    return v.get<std::string>();
  }

  // Either a single integer or an array of integers.
  std::vector<Index> index_list(const std::string& key, std::vector<Index> fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    std::vector<Index> out;
    if (v.is_number_integer()) {
      out.push_back(v.get<Index>());
    } else if (v.is_array() && !v.empty()) {
      for (const auto& e : v) {
        if (!e.is_number_integer()) fail(key, "must contain integers");
        out.push_back(e.get<Index>());
      }
    } else {
      fail(key, "must be an integer or a non-empty array of integers");
    }
    return out;
  }

  std::vector<double> number_list(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    std::vector<double> out;
    if (v.is_number()) {
      out.push_back(v.get<double>());
    } else if (v.is_array()) {
      for (const auto& e : v) {
        if (!e.is_number()) fail(key, "must contain numbers");
        out.push_back(e.get<double>());
      }
    } else {
      fail(key, "must be a number or an array of numbers");
    }
    return out;
  }

  const json& object(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw_config("unknown key '" + name_ + "." + key + "'");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw_config("'" + name_ + "." + key + "' " + what);
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw_config(what);
}

void check_non_negative(const std::optional<double>& v, const std::string& key) {
  if (v) require(std::isfinite(*v) && *v >= 0.0, "'" + key + "' must be a finite non-negative number");
}

void check_positive(const std::optional<double>& v, const std::string& key) {
  if (v) require(std::isfinite(*v) && *v > 0.0, "'" + key + "' must be a finite positive number");
}

GenSpec parse_generate(const json& j) {
  Section s(j, "generate");
  GenSpec g;
  g.I = s.integer("I", g.I);
  g.J = s.integer("J", g.J);
  g.K = s.integer("K", g.K);
  g.R_true = s.integer("R_true", g.R_true);
  g.L_true = s.index_list("L_true", g.L_true);
  g.seed = s.seed("seed", g.seed);
  if (s.has("change_point")) {
    Section c(s.object("change_point"), "generate.change_point");
    ChangePoint cp;
    cp.k_star = c.integer("k_star", cp.k_star);
    cp.R_new = c.integer("R_new", cp.R_new);
    cp.L_new = c.index_list("L_new", cp.L_new);
    c.finish();
    g.change_point = cp;
  }
  s.finish();
  g.validate();
  return g;
}

NoiseSpec parse_noise(const json& j) {
  Section s(j, "noise");
  NoiseSpec n;
  n.snr_db = s.number("snr_db", n.snr_db);
  n.seed = s.seed("seed", n.seed);
  s.finish();
  require(std::isfinite(n.snr_db), "'noise.snr_db' must be finite");
  return n;
}

SweepOrder parse_order(const std::string& name) {
  if (name == "gauss_seidel") return SweepOrder::kGaussSeidel;
  if (name == "tabulated") return SweepOrder::kTabulated;
  throw_config("'batch.sweep_order' must be \"gauss_seidel\" or \"tabulated\", got \"" + name + "\"");
}

const char* order_name(SweepOrder o) {
  return o == SweepOrder::kGaussSeidel ? "gauss_seidel" : "tabulated";
}

BatchSection parse_batch(const json& j) {
  Section s(j, "batch");
  BatchSection b;
  b.lambda = s.opt_number("lambda");
  b.mu = s.opt_number("mu");
  b.sigma_hat = s.opt_number("sigma_hat");
  b.rule_snr_db = s.opt_number("rule_snr_db");
  auto& c = b.cfg;
  c.eta2 = s.number("eta2", c.eta2);
  c.R_ini = s.integer("R_ini", c.R_ini);
  c.L_ini = s.integer("L_ini", c.L_ini);
  c.max_iters = static_cast<int>(s.integer("max_iters", c.max_iters));
  c.rel_tol = s.number("rel_tol", c.rel_tol);
  c.seed = s.seed("seed", c.seed);
  c.rank_threshold = s.number("rank_threshold", c.rank_threshold);
  c.prune_in_loop = s.boolean("prune_in_loop", c.prune_in_loop);
  c.order = parse_order(s.string("sweep_order", order_name(c.order)));
  s.finish();
  check_non_negative(b.lambda, "batch.lambda");
  check_non_negative(b.mu, "batch.mu");
  check_positive(b.sigma_hat, "batch.sigma_hat");
  c.validate();
  return b;
}

OnlineSection parse_online(const json& j) {
  Section s(j, "online");
  OnlineSection o;
  o.lambda = s.opt_number("lambda");
  o.mu = s.opt_number("mu");
  o.sigma_hat = s.opt_number("sigma_hat");
  auto& c = o.cfg;
  c.xi = s.number("xi", c.xi);
  c.eta2 = s.number("eta2", c.eta2);
  c.warmup_slices = s.integer("warmup_slices", c.warmup_slices);
  c.rank_threshold = s.number("rank_threshold", c.rank_threshold);
  s.finish();
  check_non_negative(o.lambda, "online.lambda");
  check_non_negative(o.mu, "online.mu");
  check_positive(o.sigma_hat, "online.sigma_hat");
  c.validate();
  return o;
}

IoSection parse_io(const json& j) {
  Section s(j, "io");
  IoSection io;
  io.input = s.string("input", io.input);
  io.reference = s.string("reference", io.reference);
  io.output_dir = s.string("output_dir", io.output_dir);
  io.resume = s.string("resume", io.resume);
  s.finish();
  require(!io.output_dir.empty(), "'io.output_dir' must not be empty");
  return io;
}

ExperimentSection parse_experiment(const json& j) {
  Section s(j, "experiment");
  ExperimentSection e;
  e.which = static_cast<int>(s.integer("which", e.which));
  if (s.has("trials")) e.trials = static_cast<int>(s.integer("trials", 0));
  e.snr_db = s.number_list("snr_db", e.snr_db);
  e.master_seed = s.seed("master_seed", e.master_seed);
  e.quick = s.boolean("quick", e.quick);
  if (s.has("threads")) {
    const auto t = s.integer("threads", 0);
    require(t >= 1, "'experiment.threads' must be at least 1");
    e.threads = static_cast<unsigned>(t);
  }
  s.finish();
  require(e.which == 1 || e.which == 2, "'experiment.which' must be 1 or 2");
  require(!e.trials || *e.trials >= 1, "'experiment.trials' must be at least 1");
  for (double v : e.snr_db) require(std::isfinite(v), "'experiment.snr_db' entries must be finite");
  return e;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  Section s(j, "config");
  RunConfig cfg;
  if (s.has("generate")) cfg.generate = parse_generate(s.object("generate"));
  if (s.has("noise")) cfg.noise = parse_noise(s.object("noise"));
  if (s.has("batch")) cfg.batch = parse_batch(s.object("batch"));
  if (s.has("online")) cfg.online = parse_online(s.object("online"));
  if (s.has("io")) cfg.io = parse_io(s.object("io"));
  if (s.has("experiment")) cfg.experiment = parse_experiment(s.object("experiment"));
  s.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw_config("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
  json j;
  const GenSpec& g = cfg.generate;
  j["generate"] = {{"I", g.I}, {"J", g.J}, {"K", g.K}, {"R_true", g.R_true},
                   {"L_true", g.L_true}, {"seed", g.seed}};
  if (g.change_point)
    j["generate"]["change_point"] = {{"k_star", g.change_point->k_star},
                                     {"R_new", g.change_point->R_new},
                                     {"L_new", g.change_point->L_new}};
  if (cfg.noise) j["noise"] = {{"snr_db", cfg.noise->snr_db}, {"seed", cfg.noise->seed}};

  const BatchSection& b = cfg.batch;
  json& jb = j["batch"];
  jb = {{"eta2", b.cfg.eta2},
        {"R_ini", b.cfg.R_ini},
        {"L_ini", b.cfg.L_ini},
        {"max_iters", b.cfg.max_iters},
        {"rel_tol", b.cfg.rel_tol},
        {"seed", b.cfg.seed},
        {"rank_threshold", b.cfg.rank_threshold},
        {"prune_in_loop", b.cfg.prune_in_loop},
        {"sweep_order", order_name(b.cfg.order)}};
  if (b.lambda) jb["lambda"] = *b.lambda;
  if (b.mu) jb["mu"] = *b.mu;
  if (b.sigma_hat) jb["sigma_hat"] = *b.sigma_hat;
  if (b.rule_snr_db) jb["rule_snr_db"] = *b.rule_snr_db;

  const OnlineSection& o = cfg.online;
  json& jo = j["online"];
  jo = {{"xi", o.cfg.xi},
        {"eta2", o.cfg.eta2},
        {"warmup_slices", o.cfg.warmup_slices},
        {"rank_threshold", o.cfg.rank_threshold}};
  if (o.lambda) jo["lambda"] = *o.lambda;
  if (o.mu) jo["mu"] = *o.mu;
  if (o.sigma_hat) jo["sigma_hat"] = *o.sigma_hat;

  j["io"] = {{"input", cfg.io.input},
             {"reference", cfg.io.reference},
             {"output_dir", cfg.io.output_dir},
             {"resume", cfg.io.resume}};

  const ExperimentSection& e = cfg.experiment;
  j["experiment"] = {{"which", e.which},
                     {"snr_db", e.snr_db},
                     {"master_seed", e.master_seed},
                     {"quick", e.quick}};
  if (e.trials) j["experiment"]["trials"] = *e.trials;
  if (e.threads) j["experiment"]["threads"] = *e.threads;
  return j;
}

BatchConfig resolve_batch(const RunConfig& cfg, Dims dims) {
  BatchConfig out = cfg.batch.cfg;
  const auto& b = cfg.batch;
  if (!b.lambda || !b.mu) {
    if (!b.sigma_hat)
      throw_config("batch lambda/mu are not set and 'batch.sigma_hat' is not given to derive them");
  }
  out.lambda = b.lambda ? *b.lambda : rule_lambda(out.L_ini, dims.I, dims.J, *b.sigma_hat);
  const double snr = b.rule_snr_db ? *b.rule_snr_db : (cfg.noise ? cfg.noise->snr_db : 10.0);
  out.mu = b.mu ? *b.mu : rule_batch_mu(snr, dims.K, out.R_ini, *b.sigma_hat);
  out.validate();
  return out;
}

OnlineConfig resolve_online(const RunConfig& cfg, Dims dims) {
  OnlineConfig out = cfg.online.cfg;
  const auto& o = cfg.online;
  out.R_ini = cfg.batch.cfg.R_ini;
  out.L_ini = cfg.batch.cfg.L_ini;
  if (!o.lambda || !o.mu) {
    if (!o.sigma_hat)
      throw_config("online lambda/mu are not set and 'online.sigma_hat' is not given to derive them");
  }
  out.lambda = o.lambda ? *o.lambda : rule_lambda(out.L_ini, dims.I, dims.J, *o.sigma_hat);
  out.mu = o.mu ? *o.mu : rule_online_mu(out.L_ini, dims.I, dims.J, *o.sigma_hat);
  out.validate();
  return out;
}

}  // namespace btd
