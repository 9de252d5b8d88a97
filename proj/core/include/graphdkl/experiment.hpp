#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "graphdkl/encoder.hpp"
#include "graphdkl/estimator.hpp"
#include "graphdkl/evalrej.hpp"
#include "graphdkl/synthgen.hpp"

namespace graphdkl {

/// Flat JSON schema. Keys (all optional):
///   generator: num_nodes feature_dim num_clusters p_in p_out k sigma_y
///   training:  epochs lr beta1 beta2 spectral_norm sage_layers branch_layers
///              hidden_width num_inducing patience init_noise kmeans_inducing
///              optimal_init freeze_encoder
///   shared:    seed (generator, split and training)
///   runner:    proportions n_seeds k_list audit_pairs checkpoint_every out_dir
struct ExperimentConfig {
  SynthConfig synth;
  TrainConfig train;
  std::vector<double> proportions = default_proportions();
  std::size_t n_seeds = 10;
  std::vector<double> k_list{0.5, 1.0, 2.0};
  std::size_t audit_pairs = 1000;
  int checkpoint_every = 50;  // epochs between saved training states
  std::string out_dir;

  [[nodiscard]] std::uint64_t seed() const { return synth.seed; }
  void set_seed(std::uint64_t seed);
  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

/// Unknown keys and type mismatches raise ConfigError. The result is validated.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Canonical flat JSON with every key; parse_experiment_config inverts it.
std::string experiment_config_to_json(const ExperimentConfig& cfg);

/// Writes the dataset into `out` along with config.json and run_meta.json.
CausalDataset run_generate(const ExperimentConfig& cfg, const std::filesystem::path& out);

struct TrainOutcome {
  TrainResult result;
  Split split;
  int epochs_run = 0;
};

/// Trains on the dataset in `data_dir`, or on a freshly generated one when
/// `data_dir` is empty. Writes model/ (best snapshot), state/ (resumable),
/// split.json, loss.csv, config.json and run_meta.json. With `resume`, picks
/// up from state/ and produces the same outputs as an uninterrupted run.
TrainOutcome run_train(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                       const std::filesystem::path& out, bool resume = false);

struct EvalOutcome {
  std::vector<ItePrediction> predictions;
  RejectionCurve curve;
  RejectionCurve random_curve;
  double full_pehe = 0.0;
  LipschitzAudit audit;
};

/// `checkpoint` is a run_train output directory (model/ and split.json).
/// Writes predictions.csv, curve.csv, random_curve.csv, report.json and
/// run_meta.json.
EvalOutcome run_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& data_dir, const std::filesystem::path& out);

struct SeedRun {
  double k = 0.0;
  std::uint64_t seed = 0;
  int best_epoch = -1;
  int epochs_run = 0;
  double full_pehe = 0.0;
  double audit_max_ratio = 0.0;
  RejectionCurve curve;
  RejectionCurve random_curve;
  std::vector<ItePrediction> predictions;
  std::vector<EpochRecord> trace;
};

struct SweepBlock {
  double k = 0.0;
  std::vector<SeedRun> runs;  // ordered by seed
  CurveSummary curve;
  CurveSummary random_curve;
  double mean_full_pehe = 0.0;
  double max_audit_ratio = 0.0;
};

struct SweepOutcome {
  std::vector<SweepBlock> blocks;  // in k_list order
};

/// Seeds cfg.seed() .. cfg.seed() + n_seeds - 1 for every k. Runs in up to
/// `threads` workers (0: GRAPHDKL_THREADS, else hardware concurrency). Writes
/// k_<k>/seed_<s>/ per run, k_<k>/ aggregates, table.csv, report.json and
/// run_meta.json.
/// `on_done` is called (serialized) after each finished cell.
SweepOutcome run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out,
                       unsigned threads = 0,
                       const std::function<void(const SeedRun&)>& on_done = {});

/// One sweep cell without any file output.
SeedRun run_seed(const ExperimentConfig& cfg, double k, std::uint64_t seed);

/// Worker count from GRAPHDKL_THREADS, else hardware concurrency, at least 1.
unsigned worker_threads();

struct CollapseVariant {
  Tensor latent;  // N x 2
  LipschitzAudit audit;              // node pairs
  LipschitzAudit perturbation;       // whole-graph, max row norm
  double final_loss = 0.0;
  /// Latent distance between the class 3 and class 0 centroids divided by
  /// the same distance in input space.
  double centroid_ratio_30 = 0.0;
};

struct CollapseOutcome {
  Tensor x;  // N x 2
  std::vector<int> label;
  Graph graph;
  CollapseVariant sn;
  CollapseVariant nosn;
};

/// Four-class 2-D toy graph; a one-layer graph encoder with a linear readout
/// is trained on classes 0-2 with and without spectral normalization. Writes
/// latent_sn.csv, latent_nosn.csv, toy.csv (inputs), audit.json and
/// run_meta.json.
CollapseOutcome run_demo_collapse(const std::filesystem::path& out, std::uint64_t seed = 0,
                                  int epochs = 300);

/// Records command, wall-clock start/end and thread count in run_meta.json.
void write_run_meta(const std::filesystem::path& dir, const std::string& command,
                    const std::string& started_utc, unsigned threads = 1);
std::string utc_timestamp();

}  // namespace graphdkl
