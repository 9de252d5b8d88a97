#include "graphdkl/svgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eigen_view.hpp"
#include "graphdkl/errors.hpp"
#include "graphdkl/log.hpp"
#include "graphdkl/ops.hpp"
#include "graphdkl/rng.hpp"

namespace graphdkl {

using detail::view;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

Tensor SvgpHead::chol_u() const {
  const std::size_t m = chol_u_raw.rows();
  Tensor l(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) l(i, j) = chol_u_raw(i, j);
    l(i, i) = softplus(chol_u_raw(i, i));
  }
  return l;
}

void SvgpHead::set_chol_u(const Tensor& l) {
  if (l.rows() != l.cols()) throw ShapeError("set_chol_u: factor must be square");
  chol_u_raw = Tensor(l.rows(), l.cols());
  for (std::size_t i = 0; i < l.rows(); ++i) {
    for (std::size_t j = 0; j < i; ++j) chol_u_raw(i, j) = l(i, j);
    chol_u_raw(i, i) = softplus_inverse(l(i, i));
  }
}

ParamSet SvgpHead::params(const std::string& prefix) const {
  ParamSet p;
  p.add(prefix + "log_sigma", Tensor::scalar(kernel.log_sigma));
  p.add(prefix + "log_lengthscale", Tensor::scalar(kernel.log_lengthscale));
  p.add(prefix + "log_noise", Tensor::scalar(log_noise));
  p.add(prefix + "inducing", inducing);
  p.add(prefix + "mu_u", mu_u);
  p.add(prefix + "chol_u_raw", chol_u_raw);
  return p;
}

void SvgpHead::set_params(const ParamSet& p, const std::string& prefix) {
  auto has = [&](const char* name) { return p.contains(prefix + name); };
  auto get = [&](const char* name) -> const Tensor& { return p[prefix + name]; };
  if (has("log_sigma")) kernel.log_sigma = get("log_sigma").item();
  if (has("log_lengthscale")) kernel.log_lengthscale = get("log_lengthscale").item();
  if (has("log_noise")) log_noise = get("log_noise").item();
  if (has("inducing")) {
    require_same_shape(inducing, get("inducing"), "SvgpHead inducing");
    inducing = get("inducing");
  }
  if (has("mu_u")) {
    require_same_shape(mu_u, get("mu_u"), "SvgpHead mu_u");
    mu_u = get("mu_u");
  }
  if (has("chol_u_raw")) {
    require_same_shape(chol_u_raw, get("chol_u_raw"), "SvgpHead chol_u_raw");
    chol_u_raw = get("chol_u_raw");
  }
}

void SvgpHead::fit_standardization(std::span<const double> y) {
  if (y.empty()) throw DataError("fit_standardization: no labels");
  double mean = 0.0;
  for (const double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (const double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  label_mean = mean;
  label_std = var > 1e-12 ? std::sqrt(var) : 1.0;
}

std::vector<double> SvgpHead::standardize(std::span<const double> y) const {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - label_mean) / label_std;
  return out;
}

SvgpHead SvgpHead::at_prior(Tensor inducing, const RbfKernel& kernel, double noise_variance) {
  if (inducing.rows() == 0) throw ConfigError("SvgpHead: need at least one inducing point");
  SvgpHead head;
  head.kernel = kernel;
  head.log_noise = std::log(noise_variance);
  head.inducing = std::move(inducing);
  head.mu_u = Tensor(head.inducing.rows(), 1);
  head.set_chol_u(jittered_cholesky(kernel_matrix(kernel, head.inducing, head.inducing)));
  return head;
}

ElboTerms elbo_terms(const SvgpHead& head, const BoundParams& params, const std::string& prefix,
                     Var z, std::span<const double> y, const ElboOptions& options) {
  Tape& tape = z.tape();
  const std::size_t n = y.size();
  if (n == 0 || z.rows() != n) throw ShapeError("elbo: need one label per input row");
  const Var log_sigma = params[prefix + "log_sigma"];
  const Var log_ls = params[prefix + "log_lengthscale"];
  const Var log_noise = params[prefix + "log_noise"];
  const Var inducing = params[prefix + "inducing"];
  const Var mu_u = params[prefix + "mu_u"];
  const Var chol_raw = params[prefix + "chol_u_raw"];
  const double m = static_cast<double>(head.num_inducing());

  const Var kmm = kernel_matrix(log_sigma, log_ls, inducing, inducing);
  const Var lm = jittered_cholesky(kmm);
  const Var kmn = kernel_matrix(log_sigma, log_ls, inducing, z);
  const Var a = ops::solve_lower(lm, kmn);        // L_m^{-1} K_mn
  const Var b = ops::solve_lower_t(lm, a);        // K_mm^{-1} K_mn
  const Var lu = ops::lower_softplus_diag(chol_raw);
  const Var mean = ops::matmul(ops::transpose(b), mu_u);  // N x 1
  const Var lub = ops::matmul(ops::transpose(lu), b);     // L_u^T K_mm^{-1} K_mn
  const Var prior_var = ops::exp(ops::scale(log_sigma, 2.0));
  const Var noise = ops::exp(log_noise);
  const Var labels = tape.constant(Tensor::column({y.begin(), y.end()}));

  Var ell;
  if (options.mc_samples <= 0) {
    // sum_i E[log N(y_i | v_i, noise)] = -n/2 log(2 pi noise)
    //   - (sum (y - mean)^2 + sum diag(Sigma)) / (2 noise)
    const Var sq_resid = ops::sum(ops::square(ops::sub(labels, mean)));
    const Var trace = ops::add(ops::sub(ops::scale(prior_var, static_cast<double>(n)),
                                        ops::sum(ops::square(a))),
                               ops::sum(ops::square(lub)));
    const Var scaled = ops::div_scalar(ops::add(sq_resid, trace), noise);
    ell = ops::add_scalar(ops::sub(ops::scale(scaled, -0.5),
                                   ops::scale(log_noise, 0.5 * static_cast<double>(n))),
                          -0.5 * static_cast<double>(n) * kLog2Pi);
  } else {
    // Marginal variance per point, then v = mean + sqrt(var) * eps.
    const Var ones_row = tape.constant(Tensor(1, n, 1.0));
    const Var var_row = ops::add(ops::sub(ops::mul_scalar(ones_row, prior_var),
                                          ops::col_sum(ops::square(a))),
                                 ops::col_sum(ops::square(lub)));
    const Var std_col = ops::sqrt(ops::add_scalar(ops::transpose(var_row), 1e-300));
    Rng rng(options.mc_seed, 0x3c);
    Var total;
    for (int s = 0; s < options.mc_samples; ++s) {
      const Var eps = tape.constant(rng.normal_tensor(n, 1));
      const Var v = ops::add(mean, ops::mul(std_col, eps));
      const Var sq = ops::sum(ops::square(ops::sub(labels, v)));
      total = total.valid() ? ops::add(total, sq) : sq;
    }
    const Var mean_sq = ops::scale(total, 1.0 / options.mc_samples);
    ell = ops::add_scalar(ops::sub(ops::scale(ops::div_scalar(mean_sq, noise), -0.5),
                                   ops::scale(log_noise, 0.5 * static_cast<double>(n))),
                          -0.5 * static_cast<double>(n) * kLog2Pi);
  }

  // KL = 1/2 [tr(K_mm^{-1} K_u) + mu^T K_mm^{-1} mu - M + log|K_mm| - log|K_u|]
  const Var trace_term = ops::sum(ops::square(ops::solve_lower(lm, lu)));
  const Var maha = ops::sum(ops::square(ops::solve_lower(lm, mu_u)));
  const Var logdet_diff = ops::sub(ops::logdet_chol(lm), ops::logdet_chol(lu));
  const Var kl =
      ops::scale(ops::add_scalar(ops::add(ops::add(trace_term, maha), logdet_diff), -m), 0.5);

  return {ops::sub(ell, kl), ell, kl};
}

Var elbo(const SvgpHead& head, const BoundParams& params, const std::string& prefix, Var z,
         std::span<const double> y, const ElboOptions& options) {
  return elbo_terms(head, params, prefix, z, y, options).elbo;
}

double elbo(const SvgpHead& head, const Tensor& z, std::span<const double> y,
            const ElboOptions& options) {
  Tape tape;
  const ParamSet p = head.params();
  BoundParams bound(tape, p, false);
  return elbo(head, bound, "", tape.constant(z), y, options).value().item();
}

double kl_divergence(const SvgpHead& head) {
  Tape tape;
  const ParamSet p = head.params();
  BoundParams bound(tape, p, false);
  const std::vector<double> y{0.0};
  const Tensor z(1, head.input_dim());
  return elbo_terms(head, bound, "", tape.constant(z), y).kl.value().item();
}

GpPrediction svgp_predict(const SvgpHead& head, const Tensor& queries, bool include_noise) {
  if (queries.cols() != head.input_dim()) {
    throw ShapeError("svgp_predict: query width " + std::to_string(queries.cols()) +
                     " does not match inducing width " + std::to_string(head.input_dim()));
  }
  const Tensor lm = jittered_cholesky(kernel_matrix(head.kernel, head.inducing, head.inducing));
  const auto lower = view(lm).triangularView<Eigen::Lower>();
  detail::RowMatrix a = view(kernel_matrix(head.kernel, head.inducing, queries));  // M x Q
  lower.solveInPlace(a);
  detail::RowMatrix b = a;
  view(lm).transpose().triangularView<Eigen::Upper>().solveInPlace(b);  // K_mm^{-1} k*
  const Tensor lu = head.chol_u();
  const detail::RowMatrix lub = view(lu).transpose() * b;
  const Eigen::VectorXd mean = b.transpose() * view(head.mu_u).col(0);

  GpPrediction out;
  out.mean.resize(queries.rows());
  out.var.resize(queries.rows());
  const double prior = head.kernel.variance();
  const double noise = include_noise ? head.noise_variance() : 0.0;
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto col = static_cast<Eigen::Index>(q);
    double var = prior - a.col(col).squaredNorm() + lub.col(col).squaredNorm();
    if (var < -1e-10) warn("svgp_predict: negative variance " + std::to_string(var) + " clamped");
    out.mean[q] = mean(col);
    out.var[q] = std::max(var, 0.0) + noise;
  }
  return out;
}

void set_optimal_variational(SvgpHead& head, const Tensor& z, std::span<const double> y) {
  if (z.rows() != y.size() || y.empty()) throw ShapeError("set_optimal_variational: bad data shape");
  if (z.cols() != head.input_dim()) throw ShapeError("set_optimal_variational: width mismatch");
  const std::size_t m = head.num_inducing();
  const double noise_sd = std::sqrt(head.noise_variance());
  const Tensor lm = jittered_cholesky(kernel_matrix(head.kernel, head.inducing, head.inducing));
  const auto lower = view(lm).triangularView<Eigen::Lower>();
  // A = L_m^{-1} K_mn / sd, B = I + A A^T; K_u = L_m B^{-1} L_m^T, mu = L_m B^{-1} A y / sd.
  detail::RowMatrix a = view(kernel_matrix(head.kernel, head.inducing, z));
  lower.solveInPlace(a);
  a /= noise_sd;
  detail::RowMatrix b = a * a.transpose();
  b.diagonal().array() += 1.0;
  const Eigen::LLT<detail::RowMatrix> llt(b);
  if (llt.info() != Eigen::Success) throw NumericError("set_optimal_variational: factorization failed");
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd mu = view(lm) * llt.solve(a * yv) / noise_sd;
  detail::RowMatrix ku = view(lm) * llt.solve(detail::RowMatrix(view(lm).transpose()));
  ku = 0.5 * (ku + ku.transpose()).eval();
  head.mu_u = Tensor(m, 1);
  for (std::size_t i = 0; i < m; ++i) head.mu_u(i, 0) = mu(static_cast<Eigen::Index>(i));
  head.set_chol_u(jittered_cholesky(detail::to_tensor(ku)));
}

Tensor select_inducing(const Tensor& candidates, std::size_t m, std::uint64_t seed, bool kmeans) {
  if (candidates.rows() == 0) throw DataError("select_inducing: no candidates");
  m = std::min(m, candidates.rows());
  Rng rng(seed, 0x1d0c);
  const std::vector<std::size_t> perm = rng.permutation(candidates.rows());
  Tensor centers(m, candidates.cols());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < candidates.cols(); ++c) centers(i, c) = candidates(perm[i], c);
  if (!kmeans) return centers;

  // Lloyd iterations seeded with the random subset; empty clusters keep
  // their previous center.
  std::vector<std::size_t> assign(candidates.rows());
  for (int it = 0; it < 25; ++it) {
    bool changed = false;
    for (std::size_t r = 0; r < candidates.rows(); ++r) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t k = 0; k < m; ++k) {
        double d = 0.0;
        for (std::size_t c = 0; c < candidates.cols(); ++c) {
          const double diff = candidates(r, c) - centers(k, c);
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      changed = changed || assign[r] != arg || it == 0;
      assign[r] = arg;
    }
    if (!changed) break;
    Tensor sums(m, candidates.cols());
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t r = 0; r < candidates.rows(); ++r) {
      ++counts[assign[r]];
      for (std::size_t c = 0; c < candidates.cols(); ++c) sums(assign[r], c) += candidates(r, c);
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (counts[k] == 0) continue;
      for (std::size_t c = 0; c < candidates.cols(); ++c)
        centers(k, c) = sums(k, c) / static_cast<double>(counts[k]);
    }
  }
  return centers;
}

}  // namespace graphdkl
