#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "graphdkl/graph.hpp"
#include "graphdkl/params.hpp"
#include "graphdkl/tensor.hpp"

namespace graphdkl {

/// Persistent left/right singular vector estimates for a weight matrix
/// W (rows x cols): u has W.rows() entries, v has W.cols().
struct PowerIterationState {
  Tensor u;
  Tensor v;

  [[nodiscard]] bool initialized() const { return !u.empty(); }
  void reset(std::size_t rows, std::size_t cols, std::uint64_t seed);
};

/// Power iteration on W starting from (and updating) `state`. Returns
/// tau = u^T W v, a lower bound on the largest singular value. A zero matrix
/// yields 0 with a warning.
double spectral_norm_estimate(const Tensor& w, PowerIterationState& state, int n_iters);
/// Standalone estimate from a fresh seeded start.
double spectral_norm_estimate(const Tensor& w, int n_iters, std::uint64_t seed = 0);

/// W / tau. Throws NumericError when tau <= 0.
Tensor normalize_weight(const Tensor& w, double tau);
/// Differentiable W / (u^T W v) with u, v held constant.
Var normalize_weight(Var w, const PowerIterationState& state);

enum class Activation { kRelu, kLinear };

/// Affine layer x W + b with an optional ReLU. Graph layers apply
/// mean_aggregate to their input first.
struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation activation = Activation::kRelu;
  PowerIterationState power;

  [[nodiscard]] std::size_t in_dim() const { return weight.rows(); }
  [[nodiscard]] std::size_t out_dim() const { return weight.cols(); }
};

struct SageLayer : DenseLayer {};
struct MlpLayer : DenseLayer {};

struct EncoderShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> sage_widths;    // length L >= 1
  std::vector<std::size_t> branch_widths;  // length L' >= 0, shared by both arms
};

/// L spectral-normalized graph layers feeding two treatment-specific MLP
/// branches. Graph and branch stacks end in a linear layer.
class LipschitzEncoder {
 public:
  LipschitzEncoder() = default;
  static LipschitzEncoder init(const EncoderShape& shape, bool spectral_norm, std::uint64_t seed);

  std::vector<SageLayer> sage;
  std::array<std::vector<MlpLayer>, 2> branch;
  bool spectral_norm = true;

  [[nodiscard]] std::size_t input_dim() const;
  [[nodiscard]] std::size_t latent_dim() const;
  [[nodiscard]] std::size_t output_dim() const;

  /// Trainable weights and biases named "enc.sage.<l>.weight",
  /// "enc.branch<arm>.<l>.bias", ...
  [[nodiscard]] ParamSet params() const;
  void set_params(const ParamSet& params);

  /// Runs `n_iters` warm-started power iterations on every weight.
  void refresh_power_iteration(int n_iters);

  [[nodiscard]] std::vector<DenseLayer*> layers();
  [[nodiscard]] std::vector<const DenseLayer*> layers() const;
};

/// Layer weight as used in the forward pass: W / (u^T W v) when spectral
/// normalization is on, W otherwise.
Var effective_weight(Var w, const DenseLayer& layer, bool spectral_norm);
Tensor effective_weight(const DenseLayer& layer, bool spectral_norm);

/// H^L for every node. `g` must outlive the tape.
Var sage_forward(const LipschitzEncoder& enc, const BoundParams& params, const Graph& g, Var x);
/// Z for treatment arm `arm` given H^L.
Var branch_forward(const LipschitzEncoder& enc, const BoundParams& params, Var h, int arm);

Tensor sage_forward(const LipschitzEncoder& enc, const Graph& g, const Tensor& x);
Tensor branch_forward(const LipschitzEncoder& enc, const Tensor& h, int arm);

/// Single layer applied to a plain input (graph layers need `g`).
Tensor apply_layer(const DenseLayer& layer, bool spectral_norm, const Tensor& input,
                   const Graph* g);

struct LipschitzAudit {
  double max_ratio = 0.0;
  std::array<double, 2> arm_max_ratio{0.0, 0.0};
  std::size_t pairs = 0;
};

/// max ||z_i - z_j|| / ||x_i - x_j|| over `n_pairs` sampled node pairs with
/// ||x_i - x_j|| > 1e-9, over both branches.
LipschitzAudit lipschitz_audit(const LipschitzEncoder& enc, const Graph& g, const Tensor& x,
                               std::size_t n_pairs, std::uint64_t seed);

/// Whole-graph variant: perturbs every row of X by Gaussian noise of size
/// `scale` and reports max_i ||dz_i|| / max_i ||dx_i|| (worst over trials and
/// arms). Mean aggregation averages rows, so normalized layers compose to a
/// map with ratio <= 1 in this norm; `pairs` counts trials.
LipschitzAudit perturbation_audit(const LipschitzEncoder& enc, const Graph& g, const Tensor& x,
                                  std::size_t n_trials, double scale, std::uint64_t seed);

}  // namespace graphdkl
