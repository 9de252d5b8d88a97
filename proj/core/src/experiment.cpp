#include "graphdkl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <mutex>
#include <set>
#include <thread>
#include <type_traits>

#include <json.hpp>

#include "graphdkl/errors.hpp"
#include "graphdkl/log.hpp"
#include "text_io.hpp"

namespace graphdkl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> kKeys{
      "num_nodes",   "feature_dim",   "num_clusters", "p_in",         "p_out",
      "k",           "sigma_y",       "seed",         "epochs",       "lr",
      "beta1",       "beta2",         "spectral_norm", "sage_layers", "branch_layers",
      "hidden_width", "num_inducing", "patience",     "init_noise",   "kmeans_inducing",
      "optimal_init", "freeze_encoder", "proportions", "n_seeds",     "k_list",
      "audit_pairs", "checkpoint_every", "out_dir"};
  return kKeys;
}

template <class T>
void read_key(const json& j, const char* key, T& dst) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  auto bad = [&](const char* want) {
    throw ConfigError(std::string("config key '") + key + "' must be " + want);
  };
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) bad("a boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned() &&
          !(it->is_number_integer() && it->template get<std::int64_t>() >= 0))
        bad("a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) bad("an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) bad("a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) bad("a string");
    } else {
      if (!it->is_array()) bad("an array of numbers");
      for (const auto& v : *it)
        if (!v.is_number()) bad("an array of numbers");
    }
    dst = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

json config_json(const ExperimentConfig& c) {
  const SynthConfig& s = c.synth;
  const TrainConfig& t = c.train;
  return {{"num_nodes", s.num_nodes},
          {"feature_dim", s.feature_dim},
          {"num_clusters", s.num_clusters},
          {"p_in", s.p_in},
          {"p_out", s.p_out},
          {"k", s.k},
          {"sigma_y", s.sigma_y},
          {"seed", s.seed},
          {"epochs", t.epochs},
          {"lr", t.lr},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"spectral_norm", t.spectral_norm},
          {"sage_layers", t.sage_layers},
          {"branch_layers", t.branch_layers},
          {"hidden_width", t.hidden_width},
          {"num_inducing", t.num_inducing},
          {"patience", t.patience},
          {"init_noise", t.init_noise},
          {"kmeans_inducing", t.kmeans_inducing},
          {"optimal_init", t.optimal_init},
          {"freeze_encoder", t.freeze_encoder},
          {"proportions", c.proportions},
          {"n_seeds", c.n_seeds},
          {"k_list", c.k_list},
          {"audit_pairs", c.audit_pairs},
          {"checkpoint_every", c.checkpoint_every},
          {"out_dir", c.out_dir}};
}

void write_json(const fs::path& path, const json& j) {
  detail::write_file(path, j.dump(2) + "\n");
}

void write_config_echo(const fs::path& dir, const ExperimentConfig& cfg) {
  write_json(dir / "config.json", config_json(cfg));
}

json curve_json(const RejectionCurve& c) {
  return {{"proportions", c.proportions},
          {"retained_pehe", c.retained_pehe},
          {"n_retained", c.n_retained}};
}

json summary_json(const CurveSummary& s) {
  return {{"proportions", s.proportions},
          {"mean", s.mean},
          {"std", s.std},
          {"mean_n_retained", s.mean_n_retained},
          {"count", s.count}};
}

json positivity_json(const CausalDataset& ds) {
  json out = json::array();
  for (const PositivityCount& p : positivity_report(ds, {0.01, 0.05, 0.1}))
    out.push_back({{"threshold", p.threshold}, {"below", p.below}, {"above", p.above}});
  return out;
}

json audit_json(const LipschitzAudit& a) {
  return {{"max_ratio", a.max_ratio}, {"arm_max_ratio", a.arm_max_ratio}, {"pairs", a.pairs}};
}

std::vector<double> true_ite_of(const CausalDataset& ds, const std::vector<ItePrediction>& preds) {
  std::vector<double> out;
  out.reserve(preds.size());
  for (const ItePrediction& p : preds) out.push_back(ds.true_ite(p.node));
  return out;
}

struct Curves {
  RejectionCurve curve;
  RejectionCurve random_curve;
  double full_pehe = 0.0;
};

Curves evaluate_predictions(const std::vector<ItePrediction>& preds, const CausalDataset& ds,
                            std::span<const double> proportions, std::uint64_t seed) {
  std::vector<double> ite, unc;
  std::vector<std::size_t> node;
  for (const ItePrediction& p : preds) {
    ite.push_back(p.ite);
    unc.push_back(p.uncertainty);
    node.push_back(p.node);
  }
  const std::vector<double> truth = true_ite_of(ds, preds);
  Curves c;
  c.curve = rejection_curve(ite, unc, truth, proportions, node);
  c.random_curve = random_rejection_curve(ite, truth, proportions, seed);
  c.full_pehe = pehe(ite, truth);
  return c;
}

std::string k_label(double k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", k);
  return buf;
}

CausalDataset dataset_for(const ExperimentConfig& cfg, const fs::path& data_dir) {
  return data_dir.empty() ? generate(cfg.synth) : load_dataset(data_dir);
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t seed) {
  synth.seed = seed;
  train.seed = seed;
}

void ExperimentConfig::validate() const {
  synth.validate();
  train.validate();
  if (synth.num_nodes < 5) throw ConfigError("num_nodes must be >= 5 to split");
  if (synth.seed != train.seed) throw ConfigError("generator and training seeds differ");
  if (proportions.empty()) throw ConfigError("proportions must not be empty");
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    const double p = proportions[i];
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("proportions must lie in [0, 1)");
    if (i > 0 && !(p > proportions[i - 1]))
      throw ConfigError("proportions must be strictly increasing");
  }
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  if (k_list.empty()) throw ConfigError("k_list must not be empty");
  for (const double k : k_list)
    if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("k_list entries must be finite and >= 0");
  if (audit_pairs < 1) throw ConfigError("audit_pairs must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");

  ExperimentConfig c;
  SynthConfig& s = c.synth;
  TrainConfig& t = c.train;
  read_key(j, "num_nodes", s.num_nodes);
  read_key(j, "feature_dim", s.feature_dim);
  read_key(j, "num_clusters", s.num_clusters);
  read_key(j, "p_in", s.p_in);
  read_key(j, "p_out", s.p_out);
  read_key(j, "k", s.k);
  read_key(j, "sigma_y", s.sigma_y);
  std::uint64_t seed = 0;
  read_key(j, "seed", seed);
  c.set_seed(seed);
  read_key(j, "epochs", t.epochs);
  read_key(j, "lr", t.lr);
  read_key(j, "beta1", t.beta1);
  read_key(j, "beta2", t.beta2);
  read_key(j, "spectral_norm", t.spectral_norm);
  read_key(j, "sage_layers", t.sage_layers);
  read_key(j, "branch_layers", t.branch_layers);
  read_key(j, "hidden_width", t.hidden_width);
  read_key(j, "num_inducing", t.num_inducing);
  read_key(j, "patience", t.patience);
  read_key(j, "init_noise", t.init_noise);
  read_key(j, "kmeans_inducing", t.kmeans_inducing);
  read_key(j, "optimal_init", t.optimal_init);
  read_key(j, "freeze_encoder", t.freeze_encoder);
  read_key(j, "proportions", c.proportions);
  read_key(j, "n_seeds", c.n_seeds);
  read_key(j, "k_list", c.k_list);
  read_key(j, "audit_pairs", c.audit_pairs);
  read_key(j, "checkpoint_every", c.checkpoint_every);
  read_key(j, "out_dir", c.out_dir);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_experiment_config(detail::read_file(path));
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  return config_json(cfg).dump(2);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_run_meta(const fs::path& dir, const std::string& command,
                    const std::string& started_utc, unsigned threads) {
  write_json(dir / "run_meta.json", {{"command", command},
                                     {"started_utc", started_utc},
                                     {"finished_utc", utc_timestamp()},
                                     {"threads", threads}});
}

CausalDataset run_generate(const ExperimentConfig& cfg, const fs::path& out) {
  const std::string started = utc_timestamp();
  cfg.validate();
  CausalDataset ds = generate(cfg.synth);
  fs::create_directories(out);
  save_dataset(ds, out);
  write_config_echo(out, cfg);
  write_run_meta(out, "generate", started);
  return ds;
}

TrainOutcome run_train(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& out,
                       bool resume) {
  const std::string started = utc_timestamp();
  cfg.validate();
  const CausalDataset ds = dataset_for(cfg, data_dir);
  fs::create_directories(out);
  const fs::path state_dir = out / "state";

  TrainOutcome outcome;
  TrainState state;
  if (resume && fs::exists(state_dir / "state.json")) {
    state = load_train_state(state_dir);
    // Only the epoch budget may change between runs.
    TrainConfig saved = state.model.config;
    saved.epochs = cfg.train.epochs;
    if (!(saved == cfg.train)) throw ConfigError("resume: training config differs from the saved state");
    state.model.config = cfg.train;
    state.best.config = cfg.train;
    outcome.split = load_split(out / "split.json");
  } else {
    outcome.split = split(ds, cfg.seed());
    save_split(outcome.split, out / "split.json");
    state = init_training(ds, outcome.split, cfg.train);
    save_train_state(state, state_dir);
  }
  for (const std::size_t i : outcome.split.train)
    if (i >= ds.size()) throw DataError("split.json does not match the dataset");

  while (!state.finished(cfg.train.epochs)) {
    const int before = state.epoch;
    continue_training(state, ds, outcome.split, cfg.train, state.epoch + cfg.checkpoint_every);
    save_train_state(state, state_dir);
    if (state.epoch == before) break;  // stopped early inside the chunk
  }

  outcome.result = finish(state);
  outcome.epochs_run = static_cast<int>(state.trace.size());
  save_model(outcome.result.model, out / "model");
  write_trace_csv(out / "loss.csv", state.trace);
  write_config_echo(out, cfg);
  write_run_meta(out, "train", started);
  return outcome;
}

EvalOutcome run_evaluate(const ExperimentConfig& cfg, const fs::path& checkpoint,
                         const fs::path& data_dir, const fs::path& out) {
  const std::string started = utc_timestamp();
  cfg.validate();
  const CausalDataset ds = dataset_for(cfg, data_dir);
  const GraphDklModel model = load_model(checkpoint / "model");
  const Split sp = load_split(checkpoint / "split.json");
  if (model.encoder.input_dim() != ds.x.cols())
    throw DataError("checkpoint expects " + std::to_string(model.encoder.input_dim()) +
                    " features, dataset has " + std::to_string(ds.x.cols()));
  if (sp.test.empty()) throw DataError("split has no test nodes");

  EvalOutcome r;
  r.predictions = predict(model, ds, sp.test);
  const Curves c = evaluate_predictions(r.predictions, ds, cfg.proportions, cfg.seed());
  r.curve = c.curve;
  r.random_curve = c.random_curve;
  r.full_pehe = c.full_pehe;
  r.audit = lipschitz_audit(model.encoder, ds.graph, ds.x, cfg.audit_pairs, cfg.seed());

  fs::create_directories(out);
  write_predictions_csv(out / "predictions.csv", r.predictions);
  write_curve_csv(out / "curve.csv", r.curve);
  write_curve_csv(out / "random_curve.csv", r.random_curve);
  write_config_echo(out, cfg);
  write_json(out / "report.json", {{"config", config_json(cfg)},
                                   {"test_nodes", sp.test.size()},
                                   {"full_pehe", r.full_pehe},
                                   {"curve", curve_json(r.curve)},
                                   {"random_curve", curve_json(r.random_curve)},
                                   {"positivity", positivity_json(ds)},
                                   {"lipschitz_audit", audit_json(r.audit)}});
  write_run_meta(out, "evaluate", started);
  return r;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("GRAPHDKL_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
    warn("ignoring invalid GRAPHDKL_THREADS='" + std::string(env) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SeedRun run_seed(const ExperimentConfig& base, double k, std::uint64_t seed) {
  ExperimentConfig cfg = base;
  cfg.synth.k = k;
  cfg.set_seed(seed);
  cfg.validate();
  const CausalDataset ds = generate(cfg.synth);
  const Split sp = split(ds, seed);
  const TrainResult res = train(ds, sp, cfg.train);

  SeedRun run;
  run.k = k;
  run.seed = seed;
  run.best_epoch = res.best_epoch;
  run.epochs_run = static_cast<int>(res.trace.size());
  run.trace = res.trace;
  run.predictions = predict(res.model, ds, sp.test);
  const Curves c = evaluate_predictions(run.predictions, ds, cfg.proportions, seed);
  run.curve = c.curve;
  run.random_curve = c.random_curve;
  run.full_pehe = c.full_pehe;
  run.audit_max_ratio = lipschitz_audit(res.model.encoder, ds.graph, ds.x, cfg.audit_pairs, seed).max_ratio;
  return run;
}

SweepOutcome run_sweep(const ExperimentConfig& cfg, const fs::path& out, unsigned threads,
                       const std::function<void(const SeedRun&)>& on_done) {
  const std::string started = utc_timestamp();
  cfg.validate();
  const std::size_t n_k = cfg.k_list.size();
  const std::size_t n_jobs = n_k * cfg.n_seeds;
  if (threads == 0) threads = worker_threads();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_jobs));

  std::vector<SeedRun> runs(n_jobs);
  std::vector<std::exception_ptr> errors(n_jobs);
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  auto worker = [&] {
    for (std::size_t job = next++; job < n_jobs; job = next++) {
      try {
        runs[job] = run_seed(cfg, cfg.k_list[job / cfg.n_seeds], cfg.seed() + job % cfg.n_seeds);
        if (on_done) {
          const std::lock_guard lock(done_mutex);
          on_done(runs[job]);
        }
      } catch (...) {
        errors[job] = std::current_exception();
        next = n_jobs;  // drain
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  fs::create_directories(out);
  SweepOutcome outcome;
  json blocks = json::array();
  std::string table = "k,statistic";
  for (const double p : cfg.proportions) table += "," + detail::format_double(p);
  table += "\n";

  for (std::size_t ki = 0; ki < n_k; ++ki) {
    SweepBlock block;
    block.k = cfg.k_list[ki];
    const fs::path kdir = out / ("k_" + k_label(block.k));
    std::vector<RejectionCurve> curves, randoms;
    json per_seed = json::array();
    double pehe_sum = 0.0;
    for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
      SeedRun& run = runs[ki * cfg.n_seeds + s];
      const fs::path sdir = kdir / ("seed_" + std::to_string(run.seed));
      fs::create_directories(sdir);
      write_predictions_csv(sdir / "predictions.csv", run.predictions);
      write_trace_csv(sdir / "loss.csv", run.trace);
      write_curve_csv(sdir / "curve.csv", run.curve);
      write_curve_csv(sdir / "random_curve.csv", run.random_curve);
      per_seed.push_back({{"seed", run.seed},
                          {"best_epoch", run.best_epoch},
                          {"epochs_run", run.epochs_run},
                          {"full_pehe", run.full_pehe},
                          {"audit_max_ratio", run.audit_max_ratio},
                          {"curve", curve_json(run.curve)},
                          {"random_curve", curve_json(run.random_curve)}});
      curves.push_back(run.curve);
      randoms.push_back(run.random_curve);
      pehe_sum += run.full_pehe;
      block.max_audit_ratio = std::max(block.max_audit_ratio, run.audit_max_ratio);
      block.runs.push_back(std::move(run));
    }
    block.curve = aggregate(curves);
    block.random_curve = aggregate(randoms);
    block.mean_full_pehe = pehe_sum / static_cast<double>(cfg.n_seeds);
    write_curve_csv(kdir / "curve.csv", block.curve);
    write_curve_csv(kdir / "random_curve.csv", block.random_curve);

    ExperimentConfig echo = cfg;
    echo.synth.k = block.k;
    const json block_json = {{"k", block.k},
                             {"config", config_json(echo)},
                             {"mean_full_pehe", block.mean_full_pehe},
                             {"max_audit_ratio", block.max_audit_ratio},
                             {"mean_curve", summary_json(block.curve)},
                             {"random_curve", summary_json(block.random_curve)},
                             {"seeds", per_seed}};
    write_json(kdir / "report.json", block_json);
    blocks.push_back(block_json);

    for (const auto& [name, values] :
         {std::pair{"mean", &block.curve.mean}, std::pair{"std", &block.curve.std}}) {
      table += k_label(block.k) + "," + name;
      for (const double v : *values) table += "," + detail::format_double(v);
      table += "\n";
    }
    outcome.blocks.push_back(std::move(block));
  }
  detail::write_file(out / "table.csv", table);
  write_json(out / "report.json", {{"config", config_json(cfg)}, {"blocks", blocks}});
  write_config_echo(out, cfg);
  write_run_meta(out, "sweep", started, threads);
  return outcome;
}

}  // namespace graphdkl
