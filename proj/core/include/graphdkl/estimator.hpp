#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "graphdkl/encoder.hpp"
#include "graphdkl/optim.hpp"
#include "graphdkl/svgp.hpp"
#include "graphdkl/synthgen.hpp"

namespace graphdkl {

struct TrainConfig {
  int epochs = 500;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  bool spectral_norm = true;
  std::size_t sage_layers = 2;    // L
  std::size_t branch_layers = 2;  // L'
  std::size_t hidden_width = 32;
  std::size_t num_inducing = 64;  // M, capped by the arm's training count
  int patience = 50;              // epochs without validation improvement
  double init_noise = 0.1;
  bool kmeans_inducing = false;
  /// Starts q(u) at the bound's optimum for the initial latents instead of
  /// at the prior.
  bool optimal_init = false;
  /// Keeps encoder weights and power vectors fixed; only the heads train and
  /// each head early-stops on its own arm.
  bool freeze_encoder = false;

  void validate() const;
  [[nodiscard]] EncoderShape encoder_shape(std::size_t input_dim) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Shared graph encoder, two branches, one sparse GP head per arm.
struct GraphDklModel {
  LipschitzEncoder encoder;
  std::array<SvgpHead, 2> heads;
  TrainConfig config;

  /// Encoder entries ("enc.*") followed by "gp0.*" and "gp1.*".
  [[nodiscard]] ParamSet params() const;
  void set_params(const ParamSet& params);
};

inline const std::string& head_prefix(int arm) {
  static const std::array<std::string, 2> kPrefix{"gp0.", "gp1."};
  return kPrefix[static_cast<std::size_t>(arm)];
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when the validation split has no factual nodes
};

/// Everything needed to continue training bit-for-bit.
struct TrainState {
  GraphDklModel model;  // parameters about to be evaluated at `epoch`
  AdamState adam;
  GraphDklModel best;
  std::array<double, 2> best_val{};  // joint value in slot 0 unless the encoder is frozen
  std::array<int, 2> best_epoch{-1, -1};
  std::array<int, 2> stale{0, 0};
  std::array<bool, 2> stopped{false, false};
  int epoch = 0;
  std::vector<EpochRecord> trace;

  [[nodiscard]] bool finished(int epochs) const;
};

/// Builds the initial model: encoder from the seed, heads at the prior with
/// inducing inputs drawn from initial latents of the arm's training nodes.
/// Throws DataError when the training split lacks either arm.
TrainState init_training(const CausalDataset& ds, const Split& split, const TrainConfig& cfg);

/// Runs epochs until `stop_epoch` (exclusive), early stopping, or
/// cfg.epochs. NumericError messages carry the epoch index.
void continue_training(TrainState& state, const CausalDataset& ds, const Split& split,
                       const TrainConfig& cfg, int stop_epoch);

struct TrainResult {
  GraphDklModel model;  // best validation snapshot
  std::vector<EpochRecord> trace;
  int best_epoch = -1;
};

TrainResult train(const CausalDataset& ds, const Split& split, const TrainConfig& cfg);
TrainResult finish(const TrainState& state);

/// -(ELBO_0 + ELBO_1) over `nodes` (factual outcomes, standardized per arm).
/// Arms without nodes contribute nothing.
Var total_loss(const GraphDklModel& model, const BoundParams& params, const CausalDataset& ds,
               std::span<const std::size_t> nodes);
double total_loss(const GraphDklModel& model, const CausalDataset& ds,
                  std::span<const std::size_t> nodes);

struct ItePrediction {
  std::size_t node = 0;
  double ite = 0.0;
  double uncertainty = 0.0;
  double mu0 = 0.0;
  double mu1 = 0.0;
  double var0 = 0.0;
  double var1 = 0.0;
};

/// Per-arm latent posterior, de-standardized: mean * std + mean_y and
/// variance * std^2. ite = mu1 - mu0, uncertainty = var0 + var1.
std::vector<ItePrediction> predict(const GraphDklModel& model, const CausalDataset& ds,
                                   std::span<const std::size_t> nodes);

inline constexpr int kModelFormatVersion = 1;

void save_model(const GraphDklModel& model, const std::filesystem::path& dir);
/// Throws IoError on a missing file, a version mismatch or a bad array size.
GraphDklModel load_model(const std::filesystem::path& dir);

void save_train_state(const TrainState& state, const std::filesystem::path& dir);
TrainState load_train_state(const std::filesystem::path& dir);

std::string train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
TrainConfig train_config_from_json(const std::string& text);

void save_split(const Split& split, const std::filesystem::path& path);
Split load_split(const std::filesystem::path& path);

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<ItePrediction>& preds);
void write_trace_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& trace);

}  // namespace graphdkl
