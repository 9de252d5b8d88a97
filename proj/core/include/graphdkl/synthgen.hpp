#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "graphdkl/graph.hpp"
#include "graphdkl/tensor.hpp"

namespace graphdkl {

struct SynthConfig {
  std::size_t num_nodes = 1000;
  std::size_t feature_dim = 16;
  std::size_t num_clusters = 4;
  double p_in = 0.05;
  double p_out = 0.005;
  /// Imbalance magnitude: propensity is sigmoid(k * centered score).
  double k = 1.0;
  double sigma_y = 1.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Networked observational data with ground-truth potential outcomes.
struct CausalDataset {
  Graph graph;
  Tensor x;  // N x D raw features
  std::vector<int> t;
  std::vector<double> y;
  std::vector<double> mu0;
  std::vector<double> mu1;
  std::vector<double> propensity;
  std::vector<int> cluster;  // generator-internal labels, not saved
  SynthConfig config;

  /// Coefficients drawn by the generator; empty after load_dataset.
  struct Truth {
    std::vector<double> score_weights;
    std::vector<double> beta0;
    std::vector<double> beta_tau;
  } truth;

  [[nodiscard]] std::size_t size() const { return t.size(); }
  [[nodiscard]] double true_ite(std::size_t i) const { return mu1[i] - mu0[i]; }
  [[nodiscard]] std::vector<double> true_ite() const;
};

/// Deterministic in `cfg.seed`. Recipe:
///   1. cluster c_i ~ U{0..C-1}, centroids ~ N(0, I), x_i = centroid + N(0, 0.25 I)
///   2. stochastic block model edges with (p_in, p_out)
///   3. xbar_i = (x_i + mean of neighbor features) / 2, or x_i when isolated
///   4. s_i = w_p . xbar_i, pi_i = sigmoid(k (s_i - median s)), t_i ~ Bern(pi_i)
///   5. mu0 = b0 . xbar, mu1 = mu0 + bt . xbar + 1, y = mu_t + N(0, sigma_y^2)
/// with w_p, b0, bt ~ N(0, I / sqrt(D)).
CausalDataset generate(const SynthConfig& cfg);

/// Contextualized features used by the generator (step 3 above).
Tensor contextualize(const Tensor& x, const Graph& g);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded uniform shuffle cut 3/1/1; val and test get floor(N/5) nodes each and
/// the remainder goes to train. Requires N >= 5.
Split make_split(std::size_t num_nodes, std::uint64_t seed);
inline Split split(const CausalDataset& ds, std::uint64_t seed) { return make_split(ds.size(), seed); }

struct PositivityCount {
  double threshold = 0.0;
  std::size_t below = 0;  // pi < threshold
  std::size_t above = 0;  // pi > 1 - threshold
  [[nodiscard]] std::size_t violations() const { return below + above; }
};

std::vector<PositivityCount> positivity_report(const std::vector<double>& propensity,
                                               const std::vector<double>& thresholds);
inline std::vector<PositivityCount> positivity_report(const CausalDataset& ds,
                                                     const std::vector<double>& thresholds) {
  return positivity_report(ds.propensity, thresholds);
}

inline constexpr int kDatasetFormatVersion = 1;

/// Directory layout: graph.txt, X.csv, t.csv, y.csv, mu0.csv, mu1.csv,
/// propensity.csv and manifest.json (format version, seed, full config).
void save_dataset(const CausalDataset& ds, const std::filesystem::path& dir);
CausalDataset load_dataset(const std::filesystem::path& dir);

}  // namespace graphdkl
