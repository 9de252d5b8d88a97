#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "graphdkl/gp.hpp"
#include "graphdkl/params.hpp"
#include "graphdkl/tensor.hpp"

namespace graphdkl {

/// Sparse variational GP head with q(u) = N(mu_u, L_u L_u^T) over M inducing
/// inputs (unwhitened). L_u is the strict lower triangle of `chol_u_raw`
/// plus softplus of its diagonal. Labels are standardized with
/// (label_mean, label_std) before training and prediction.
struct SvgpHead {
  RbfKernel kernel;
  double log_noise = std::log(0.1);
  Tensor inducing;    // M x S
  Tensor mu_u;        // M x 1
  Tensor chol_u_raw;  // M x M, only the lower triangle is used
  double label_mean = 0.0;
  double label_std = 1.0;

  [[nodiscard]] std::size_t num_inducing() const { return inducing.rows(); }
  [[nodiscard]] std::size_t input_dim() const { return inducing.cols(); }
  [[nodiscard]] double noise_variance() const { return std::exp(log_noise); }

  /// L_u with the softplus diagonal applied.
  [[nodiscard]] Tensor chol_u() const;
  /// Sets chol_u_raw so that chol_u() equals `l` (lower, positive diagonal).
  void set_chol_u(const Tensor& l);

  /// Trainable entries: <prefix>log_sigma, log_lengthscale, log_noise,
  /// inducing, mu_u, chol_u_raw.
  [[nodiscard]] ParamSet params(const std::string& prefix = "") const;
  void set_params(const ParamSet& params, const std::string& prefix = "");

  /// Mean/std of `y`; std falls back to 1 when degenerate.
  void fit_standardization(std::span<const double> y);
  [[nodiscard]] std::vector<double> standardize(std::span<const double> y) const;

  /// Head with q(u) = p(u): mu_u = 0 and L_u = chol(K_mm).
  static SvgpHead at_prior(Tensor inducing, const RbfKernel& kernel, double noise_variance);
};

struct ElboOptions {
  /// 0 selects the closed-form expected log-likelihood; otherwise a
  /// reparameterized Monte Carlo estimate with this many samples per point.
  int mc_samples = 0;
  std::uint64_t mc_seed = 0;
};

struct ElboTerms {
  Var elbo;
  Var expected_loglik;
  Var kl;
};

/// E_q(v)[log p(y | v)] - KL(q(u) || p(u)) for standardized labels `y`,
/// with q(v) = N(K_nm K_mm^{-1} mu_u,
///               K_nn - K_nm K_mm^{-1} (K_mm - K_u) K_mm^{-1} K_mn).
/// Costs O(M^2 N + M^3).
ElboTerms elbo_terms(const SvgpHead& head, const BoundParams& params, const std::string& prefix,
                     Var z, std::span<const double> y, const ElboOptions& options = {});
Var elbo(const SvgpHead& head, const BoundParams& params, const std::string& prefix, Var z,
         std::span<const double> y, const ElboOptions& options = {});
/// Value-only convenience using the head's current parameters.
double elbo(const SvgpHead& head, const Tensor& z, std::span<const double> y,
            const ElboOptions& options = {});

/// KL(N(mu_u, K_u) || N(0, K_mm)) at the head's current parameters.
double kl_divergence(const SvgpHead& head);

/// Latent predictive mean and variance (standardized scale):
/// mu* = Gamma mu_u, var* = k(z*, z*) - Gamma (K_mm - K_u) Gamma^T with
/// Gamma = k*^T K_mm^{-1}. Adds the noise variance when `include_noise`.
GpPrediction svgp_predict(const SvgpHead& head, const Tensor& queries, bool include_noise = false);

/// Sets q(u) to the optimum of the bound for fixed kernel, noise and
/// inducing inputs: K_u = K_mm S K_mm and mu_u = K_mm S K_mn y / noise with
/// S = (K_mm + K_mn K_nm / noise)^{-1}. `y` is on the standardized scale.
void set_optimal_variational(SvgpHead& head, const Tensor& z, std::span<const double> y);

/// Picks `m` rows of `candidates` without replacement, or k-means centroids
/// when `kmeans` is set. m is clamped to the candidate count.
Tensor select_inducing(const Tensor& candidates, std::size_t m, std::uint64_t seed,
                       bool kmeans = false);

}  // namespace graphdkl
