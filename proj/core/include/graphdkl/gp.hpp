#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "graphdkl/optim.hpp"
#include "graphdkl/params.hpp"
#include "graphdkl/tensor.hpp"

namespace graphdkl {

/// k(a, b) = sigma^2 exp(-||a - b||^2 / (2 l^2)), stored as logs.
struct RbfKernel {
  double log_sigma = 0.0;
  double log_lengthscale = 0.0;

  [[nodiscard]] double variance() const;
  [[nodiscard]] double lengthscale() const;
};

Tensor kernel_matrix(const RbfKernel& kernel, const Tensor& z1, const Tensor& z2);
Var kernel_matrix(Var log_sigma, Var log_lengthscale, Var z1, Var z2);

/// Diagonal jitter tried in order when a Cholesky factorization fails.
inline constexpr std::array<double, 6> kJitterLadder{0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4};

/// Cholesky factor of K + jitter I using the first ladder rung that
/// succeeds. Throws NumericError after the last rung. `jitter_used` reports
/// the rung.
Tensor jittered_cholesky(const Tensor& k, double* jitter_used = nullptr);
Var jittered_cholesky(Var k, double* jitter_used = nullptr);

struct GpPrediction {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Zero-mean exact GP regression with Gaussian observation noise; the
/// covariance of the labels is K_zz + noise I.
class ExactGp {
 public:
  RbfKernel kernel;
  double log_noise = 0.0;

  void set_data(Tensor z, std::vector<double> y);
  [[nodiscard]] bool fitted() const { return !y_.empty(); }
  [[nodiscard]] const Tensor& inputs() const { return z_; }
  [[nodiscard]] const std::vector<double>& targets() const { return y_; }
  [[nodiscard]] double noise_variance() const;

  /// Hyperparameters as "log_sigma", "log_lengthscale", "log_noise".
  [[nodiscard]] ParamSet params() const;
  void set_params(const ParamSet& params);

 private:
  Tensor z_;
  std::vector<double> y_;
};

/// log N(y | 0, K_zz + noise I) via Cholesky.
double exact_log_marginal(const ExactGp& gp, const Tensor& z, std::span<const double> y);
double exact_log_marginal(const ExactGp& gp);
Var exact_log_marginal(Var log_sigma, Var log_lengthscale, Var log_noise, Var z,
                       std::span<const double> y);

/// Latent posterior at each query row: mean k*^T (K + noise I)^{-1} y and
/// variance k(z*, z*) - k*^T (K + noise I)^{-1} k*, clamped at zero.
GpPrediction exact_posterior(const ExactGp& gp, const Tensor& queries);

struct ExactFitOptions {
  int steps = 100;
  AdamConfig adam{};
  bool fit_kernel = true;
  bool fit_noise = true;
};

struct ExactFitReport {
  std::vector<double> log_marginal;  // after each accepted step, starting with the initial value
  int accepted = 0;
  int rejected = 0;
};

/// Gradient ascent on the log marginal likelihood. A step that lowers the
/// objective is rolled back and the learning rate halved, so the recorded
/// trace is nondecreasing.
ExactFitReport fit_exact(ExactGp& gp, const ExactFitOptions& options);

}  // namespace graphdkl
