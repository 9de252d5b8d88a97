#include "graphdkl/gp.hpp"

#include <cmath>
#include <limits>

#include "eigen_view.hpp"
#include "graphdkl/errors.hpp"
#include "graphdkl/log.hpp"
#include "graphdkl/ops.hpp"

namespace graphdkl {

using detail::view;

double RbfKernel::variance() const { return std::exp(2.0 * log_sigma); }

double RbfKernel::lengthscale() const { return std::exp(log_lengthscale); }

Tensor kernel_matrix(const RbfKernel& kernel, const Tensor& z1, const Tensor& z2) {
  if (z1.cols() != z2.cols()) {
    throw ShapeError("kernel_matrix: feature widths differ " + z1.shape_string() + " vs " +
                     z2.shape_string());
  }
  const double var = kernel.variance();
  const double inv = 1.0 / (2.0 * kernel.lengthscale() * kernel.lengthscale());
  Tensor out(z1.rows(), z2.rows());
  for (std::size_t i = 0; i < z1.rows(); ++i) {
    for (std::size_t j = 0; j < z2.rows(); ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < z1.cols(); ++c) {
        const double d = z1(i, c) - z2(j, c);
        d2 += d * d;
      }
      out(i, j) = var * std::exp(-d2 * inv);
    }
  }
  return out;
}

Var kernel_matrix(Var log_sigma, Var log_lengthscale, Var z1, Var z2) {
  if (z1.cols() != z2.cols()) throw ShapeError("kernel_matrix: feature widths differ");
  // -1 / (2 l^2) = -0.5 exp(-2 log l)
  const Var neg_inv = ops::scale(ops::exp(ops::scale(log_lengthscale, -2.0)), -0.5);
  const Var e = ops::exp(ops::mul_scalar(ops::pairwise_sqdist(z1, z2), neg_inv));
  return ops::mul_scalar(e, ops::exp(ops::scale(log_sigma, 2.0)));
}

Tensor jittered_cholesky(const Tensor& k, double* jitter_used) {
  if (k.rows() != k.cols()) throw ShapeError("jittered_cholesky: matrix is not square");
  for (const double jitter : kJitterLadder) {
    detail::RowMatrix m = view(k);
    m.diagonal().array() += jitter;
    Eigen::LLT<detail::RowMatrix> llt(m);
    if (llt.info() != Eigen::Success) continue;
    detail::RowMatrix l = llt.matrixL();
    if ((l.diagonal().array() <= 0.0).any()) continue;
    if (jitter_used) *jitter_used = jitter;
    return detail::to_tensor(l);
  }
  throw NumericError("cholesky failed after jitter " + std::to_string(kJitterLadder.back()));
}

Var jittered_cholesky(Var k, double* jitter_used) {
  double jitter = 0.0;
  jittered_cholesky(k.value(), &jitter);
  if (jitter_used) *jitter_used = jitter;
  return ops::cholesky(jitter > 0.0 ? ops::add_diag(k, jitter) : k);
}

void ExactGp::set_data(Tensor z, std::vector<double> y) {
  if (z.rows() != y.size()) throw ShapeError("ExactGp: input and label counts differ");
  if (y.empty()) throw DataError("ExactGp: need at least one training point");
  z_ = std::move(z);
  y_ = std::move(y);
}

double ExactGp::noise_variance() const { return std::exp(log_noise); }

ParamSet ExactGp::params() const {
  ParamSet p;
  p.add("log_sigma", Tensor::scalar(kernel.log_sigma));
  p.add("log_lengthscale", Tensor::scalar(kernel.log_lengthscale));
  p.add("log_noise", Tensor::scalar(log_noise));
  return p;
}

void ExactGp::set_params(const ParamSet& p) {
  if (p.contains("log_sigma")) kernel.log_sigma = p["log_sigma"].item();
  if (p.contains("log_lengthscale")) kernel.log_lengthscale = p["log_lengthscale"].item();
  if (p.contains("log_noise")) log_noise = p["log_noise"].item();
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

Tensor label_covariance(const ExactGp& gp, const Tensor& z) {
  Tensor k = kernel_matrix(gp.kernel, z, z);
  const double noise = gp.noise_variance();
  for (std::size_t i = 0; i < k.rows(); ++i) k(i, i) += noise;
  return k;
}

}  // namespace

double exact_log_marginal(const ExactGp& gp, const Tensor& z, std::span<const double> y) {
  if (z.rows() != y.size() || y.empty()) throw ShapeError("exact_log_marginal: bad data shape");
  const Tensor l = jittered_cholesky(label_covariance(gp, z));
  Eigen::VectorXd alpha = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  view(l).triangularView<Eigen::Lower>().solveInPlace(alpha);
  const double logdet = 2.0 * view(l).diagonal().array().log().sum();
  const double n = static_cast<double>(y.size());
  return -0.5 * alpha.squaredNorm() - 0.5 * logdet - 0.5 * n * kLog2Pi;
}

double exact_log_marginal(const ExactGp& gp) {
  if (!gp.fitted()) throw DataError("exact_log_marginal: GP has no data");
  return exact_log_marginal(gp, gp.inputs(), gp.targets());
}

Var exact_log_marginal(Var log_sigma, Var log_lengthscale, Var log_noise, Var z,
                       std::span<const double> y) {
  Tape& tape = z.tape();
  const std::size_t n = y.size();
  if (z.rows() != n || n == 0) throw ShapeError("exact_log_marginal: bad data shape");
  const Var kzz = kernel_matrix(log_sigma, log_lengthscale, z, z);
  const Var noise_eye = ops::mul_scalar(tape.constant(Tensor::identity(n)), ops::exp(log_noise));
  const Var l = jittered_cholesky(ops::add(kzz, noise_eye));
  const Var alpha = ops::solve_lower(l, tape.constant(Tensor::column({y.begin(), y.end()})));
  const Var quad = ops::sum(ops::square(alpha));
  const Var logdet = ops::logdet_chol(l);
  return ops::add_scalar(ops::scale(ops::add(quad, logdet), -0.5),
                         -0.5 * static_cast<double>(n) * kLog2Pi);
}

GpPrediction exact_posterior(const ExactGp& gp, const Tensor& queries) {
  if (!gp.fitted()) throw DataError("exact_posterior: GP has no data");
  if (queries.cols() != gp.inputs().cols()) throw ShapeError("exact_posterior: width mismatch");
  const Tensor l = jittered_cholesky(label_covariance(gp, gp.inputs()));
  const auto tri = view(l).triangularView<Eigen::Lower>();
  const Tensor kq = kernel_matrix(gp.kernel, gp.inputs(), queries);  // N x Q

  Eigen::VectorXd alpha = Eigen::Map<const Eigen::VectorXd>(
      gp.targets().data(), static_cast<Eigen::Index>(gp.targets().size()));
  tri.solveInPlace(alpha);
  detail::RowMatrix v = view(kq);
  tri.solveInPlace(v);  // L^{-1} k*

  GpPrediction out;
  const double prior = gp.kernel.variance();
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto col = v.col(static_cast<Eigen::Index>(q));
    out.mean.push_back(col.dot(alpha));
    double var = prior - col.squaredNorm();
    if (var < -1e-10) warn("exact_posterior: negative variance " + std::to_string(var) + " clamped");
    out.var.push_back(std::max(var, 0.0));
  }
  return out;
}

ExactFitReport fit_exact(ExactGp& gp, const ExactFitOptions& options) {
  if (!gp.fitted()) throw DataError("fit_exact: GP has no data");
  ExactFitReport report;
  double current = exact_log_marginal(gp);
  report.log_marginal.push_back(current);

  ParamSet all = gp.params();
  ParamSet trainable = all.filter([&](std::string_view name) {
    if (name == "log_noise") return options.fit_noise;
    return options.fit_kernel;
  });
  if (trainable.size() == 0 || options.steps <= 0) return report;

  const Tensor& z = gp.inputs();
  const std::vector<double>& y = gp.targets();
  const ParamSet fixed = all;
  const ScalarFunction objective = [&](const BoundParams& bp) {
    Tape& tape = bp.tape();
    auto get = [&](const char* name) {
      return bp.contains(name) ? bp[name] : tape.constant(fixed[name]);
    };
    // Minimize the negative log marginal likelihood.
    return ops::neg(exact_log_marginal(get("log_sigma"), get("log_lengthscale"), get("log_noise"),
                                       tape.constant(z), y));
  };

  AdamState state = AdamState::zeros_like(trainable);
  AdamConfig adam = options.adam;
  for (int step = 0; step < options.steps; ++step) {
    const ValueAndGrad vg = value_and_grad(objective, trainable);
    ParamSet proposal = trainable;
    AdamState next_state = state;
    adam_step(proposal, vg.grads, next_state, adam);

    ExactGp candidate = gp;
    candidate.set_params(proposal);
    double value = -std::numeric_limits<double>::infinity();
    try {
      value = exact_log_marginal(candidate);
    } catch (const NumericError&) {
    }
    if (std::isfinite(value) && value >= current) {
      trainable = std::move(proposal);
      state = std::move(next_state);
      gp = std::move(candidate);
      current = value;
      report.log_marginal.push_back(current);
      ++report.accepted;
    } else {
      adam.lr *= 0.5;
      ++report.rejected;
    }
  }
  return report;
}

}  // namespace graphdkl
