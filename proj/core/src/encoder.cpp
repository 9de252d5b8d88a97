#include "graphdkl/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "eigen_view.hpp"
#include "graphdkl/errors.hpp"
#include "graphdkl/log.hpp"
#include "graphdkl/ops.hpp"
#include "graphdkl/rng.hpp"

namespace graphdkl {

using detail::view;

namespace {

constexpr int kInitPowerIterations = 30;

double norm(const Tensor& t) { return view(t).norm(); }

double bilinear(const Tensor& u, const Tensor& w, const Tensor& v) {
  return (view(u).transpose() * view(w) * view(v))(0, 0);
}

std::string layer_prefix(const std::string& stack, std::size_t index) {
  return "enc." + stack + "." + std::to_string(index) + ".";
}

std::string branch_stack(int arm) { return arm == 0 ? "branch0" : "branch1"; }

// Haar-orthogonal weights: every singular value is 1, so a normalized layer
// starts as an isometry on its row or column space.
Tensor orthogonal(std::size_t in, std::size_t out, Rng& rng) {
  const auto tall = static_cast<Eigen::Index>(std::max(in, out));
  const auto wide = static_cast<Eigen::Index>(std::min(in, out));
  Eigen::MatrixXd a(tall, wide);
  for (Eigen::Index j = 0; j < wide; ++j)
    for (Eigen::Index i = 0; i < tall; ++i) a(i, j) = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, wide);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(wide).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < wide; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  Tensor w(in, out);
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      w(i, j) = in >= out ? q(ii, jj) : q(jj, ii);
    }
  return w;
}

void init_layer(DenseLayer& layer, std::size_t in, std::size_t out, Activation act, Rng& rng,
                std::uint64_t power_seed) {
  layer.weight = orthogonal(in, out, rng);
  layer.bias = Tensor(1, out);
  layer.activation = act;
  layer.power.reset(in, out, power_seed);
  spectral_norm_estimate(layer.weight, layer.power, kInitPowerIterations);
}

}  // namespace

void PowerIterationState::reset(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed, 0x9017);
  u = rng.normal_tensor(rows, 1);
  v = Tensor(cols, 1);
  const double n = norm(u);
  if (n > 0.0) u *= 1.0 / n;
}

double spectral_norm_estimate(const Tensor& w, PowerIterationState& state, int n_iters) {
  if (n_iters < 1) throw Error("spectral_norm_estimate: n_iters must be >= 1");
  if (!state.initialized() || state.u.rows() != w.rows() || state.v.rows() != w.cols()) {
    state.reset(w.rows(), w.cols(), 0);
  }
  const auto wm = view(w);
  for (int it = 0; it < n_iters; ++it) {
    detail::RowMatrix v = wm.transpose() * view(state.u);
    const double vn = v.norm();
    if (vn == 0.0) {
      warn("spectral_norm_estimate: zero matrix, normalization skipped");
      return 0.0;
    }
    view(state.v) = v / vn;
    detail::RowMatrix u = wm * view(state.v);
    const double un = u.norm();
    if (un == 0.0) {
      warn("spectral_norm_estimate: zero matrix, normalization skipped");
      return 0.0;
    }
    view(state.u) = u / un;
  }
  return bilinear(state.u, w, state.v);
}

double spectral_norm_estimate(const Tensor& w, int n_iters, std::uint64_t seed) {
  PowerIterationState state;
  state.reset(w.rows(), w.cols(), seed);
  return spectral_norm_estimate(w, state, n_iters);
}

Tensor normalize_weight(const Tensor& w, double tau) {
  if (!(tau > 0.0)) throw NumericError("normalize_weight: tau must be positive");
  Tensor out = w;
  out *= 1.0 / tau;
  return out;
}

Var normalize_weight(Var w, const PowerIterationState& state) {
  Tape& tape = w.tape();
  const Var u = tape.constant(state.u);
  const Var v = tape.constant(state.v);
  const Var tau = ops::matmul(ops::matmul(ops::transpose(u), w), v);
  if (!(tau.value().item() > 0.0)) throw NumericError("normalize_weight: tau must be positive");
  return ops::div_scalar(w, tau);
}

LipschitzEncoder LipschitzEncoder::init(const EncoderShape& shape, bool spectral_norm,
                                        std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.sage_widths.empty()) {
    throw ConfigError("encoder: need an input width and at least one graph layer");
  }
  LipschitzEncoder enc;
  enc.spectral_norm = spectral_norm;
  Rng rng(seed, 0xe7c0);
  std::uint64_t power_stream = 0;

  std::size_t in = shape.input_dim;
  for (std::size_t l = 0; l < shape.sage_widths.size(); ++l) {
    SageLayer layer;
    const bool last = l + 1 == shape.sage_widths.size();
    init_layer(layer, in, shape.sage_widths[l], last ? Activation::kLinear : Activation::kRelu, rng,
               derive_seed(seed, ++power_stream));
    enc.sage.push_back(std::move(layer));
    in = shape.sage_widths[l];
  }
  const std::size_t latent = in;
  for (int arm = 0; arm < 2; ++arm) {
    std::size_t width = latent;
    for (std::size_t l = 0; l < shape.branch_widths.size(); ++l) {
      MlpLayer layer;
      const bool last = l + 1 == shape.branch_widths.size();
      init_layer(layer, width, shape.branch_widths[l],
                 last ? Activation::kLinear : Activation::kRelu, rng,
                 derive_seed(seed, ++power_stream));
      enc.branch[static_cast<std::size_t>(arm)].push_back(std::move(layer));
      width = shape.branch_widths[l];
    }
  }
  return enc;
}

std::size_t LipschitzEncoder::input_dim() const { return sage.empty() ? 0 : sage.front().in_dim(); }

std::size_t LipschitzEncoder::latent_dim() const { return sage.empty() ? 0 : sage.back().out_dim(); }

std::size_t LipschitzEncoder::output_dim() const {
  return branch[0].empty() ? latent_dim() : branch[0].back().out_dim();
}

ParamSet LipschitzEncoder::params() const {
  ParamSet out;
  for (std::size_t l = 0; l < sage.size(); ++l) {
    out.add(layer_prefix("sage", l) + "weight", sage[l].weight);
    out.add(layer_prefix("sage", l) + "bias", sage[l].bias);
  }
  for (int arm = 0; arm < 2; ++arm) {
    const auto& stack = branch[static_cast<std::size_t>(arm)];
    for (std::size_t l = 0; l < stack.size(); ++l) {
      out.add(layer_prefix(branch_stack(arm), l) + "weight", stack[l].weight);
      out.add(layer_prefix(branch_stack(arm), l) + "bias", stack[l].bias);
    }
  }
  return out;
}

void LipschitzEncoder::set_params(const ParamSet& params) {
  auto assign = [&params](DenseLayer& layer, const std::string& prefix) {
    if (params.contains(prefix + "weight")) {
      require_same_shape(layer.weight, params[prefix + "weight"], "encoder weight");
      layer.weight = params[prefix + "weight"];
    }
    if (params.contains(prefix + "bias")) {
      require_same_shape(layer.bias, params[prefix + "bias"], "encoder bias");
      layer.bias = params[prefix + "bias"];
    }
  };
  for (std::size_t l = 0; l < sage.size(); ++l) assign(sage[l], layer_prefix("sage", l));
  for (int arm = 0; arm < 2; ++arm) {
    auto& stack = branch[static_cast<std::size_t>(arm)];
    for (std::size_t l = 0; l < stack.size(); ++l) assign(stack[l], layer_prefix(branch_stack(arm), l));
  }
}

void LipschitzEncoder::refresh_power_iteration(int n_iters) {
  for (DenseLayer* layer : layers()) spectral_norm_estimate(layer->weight, layer->power, n_iters);
}

std::vector<DenseLayer*> LipschitzEncoder::layers() {
  std::vector<DenseLayer*> out;
  for (auto& l : sage) out.push_back(&l);
  for (auto& stack : branch)
    for (auto& l : stack) out.push_back(&l);
  return out;
}

std::vector<const DenseLayer*> LipschitzEncoder::layers() const {
  std::vector<const DenseLayer*> out;
  for (const auto& l : sage) out.push_back(&l);
  for (const auto& stack : branch)
    for (const auto& l : stack) out.push_back(&l);
  return out;
}

namespace {

bool can_normalize(const DenseLayer& layer) {
  if (!layer.power.initialized()) return false;
  if (bilinear(layer.power.u, layer.weight, layer.power.v) > 0.0) return true;
  warn("spectral normalization skipped for a layer with zero spectral estimate");
  return false;
}

Var dense_forward(const DenseLayer& layer, bool spectral_norm, Var w, Var b, Var input) {
  const Var w_eff = effective_weight(w, layer, spectral_norm);
  Var out = ops::add_row(ops::matmul(input, w_eff), b);
  if (layer.activation == Activation::kRelu) out = ops::relu(out);
  return out;
}

}  // namespace

Var effective_weight(Var w, const DenseLayer& layer, bool spectral_norm) {
  if (!spectral_norm || !can_normalize(layer)) return w;
  return normalize_weight(w, layer.power);
}

Tensor effective_weight(const DenseLayer& layer, bool spectral_norm) {
  if (!spectral_norm || !can_normalize(layer)) return layer.weight;
  return normalize_weight(layer.weight, bilinear(layer.power.u, layer.weight, layer.power.v));
}

Var sage_forward(const LipschitzEncoder& enc, const BoundParams& params, const Graph& g, Var x) {
  if (x.cols() != enc.input_dim()) {
    throw ShapeError("sage_forward: feature width " + std::to_string(x.cols()) +
                     " does not match encoder input " + std::to_string(enc.input_dim()));
  }
  Var h = x;
  for (std::size_t l = 0; l < enc.sage.size(); ++l) {
    const std::string prefix = layer_prefix("sage", l);
    h = dense_forward(enc.sage[l], enc.spectral_norm, params[prefix + "weight"],
                      params[prefix + "bias"], mean_aggregate(h, g));
  }
  return h;
}

Var branch_forward(const LipschitzEncoder& enc, const BoundParams& params, Var h, int arm) {
  if (arm != 0 && arm != 1) throw Error("branch_forward: arm must be 0 or 1");
  if (h.cols() != enc.latent_dim()) throw ShapeError("branch_forward: latent width mismatch");
  const auto& stack = enc.branch[static_cast<std::size_t>(arm)];
  Var z = h;
  for (std::size_t l = 0; l < stack.size(); ++l) {
    const std::string prefix = layer_prefix(branch_stack(arm), l);
    z = dense_forward(stack[l], enc.spectral_norm, params[prefix + "weight"],
                      params[prefix + "bias"], z);
  }
  return z;
}

Tensor apply_layer(const DenseLayer& layer, bool spectral_norm, const Tensor& input,
                   const Graph* g) {
  const Tensor agg = g ? mean_aggregate(input, *g) : input;
  if (agg.cols() != layer.in_dim()) throw ShapeError("apply_layer: input width mismatch");
  const Tensor w = effective_weight(layer, spectral_norm);
  Tensor out(agg.rows(), layer.out_dim());
  view(out).noalias() = view(agg) * view(w);
  view(out).rowwise() += view(layer.bias).row(0);
  if (layer.activation == Activation::kRelu)
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor sage_forward(const LipschitzEncoder& enc, const Graph& g, const Tensor& x) {
  if (x.cols() != enc.input_dim()) throw ShapeError("sage_forward: feature width mismatch");
  Tensor h = x;
  for (const auto& layer : enc.sage) h = apply_layer(layer, enc.spectral_norm, h, &g);
  return h;
}

Tensor branch_forward(const LipschitzEncoder& enc, const Tensor& h, int arm) {
  if (arm != 0 && arm != 1) throw Error("branch_forward: arm must be 0 or 1");
  Tensor z = h;
  for (const auto& layer : enc.branch[static_cast<std::size_t>(arm)])
    z = apply_layer(layer, enc.spectral_norm, z, nullptr);
  return z;
}

LipschitzAudit lipschitz_audit(const LipschitzEncoder& enc, const Graph& g, const Tensor& x,
                               std::size_t n_pairs, std::uint64_t seed) {
  LipschitzAudit audit;
  const std::size_t n = x.rows();
  if (n < 2 || n_pairs == 0) return audit;
  const Tensor h = sage_forward(enc, g, x);
  const std::array<Tensor, 2> z{branch_forward(enc, h, 0), branch_forward(enc, h, 1)};

  auto row_distance = [](const Tensor& m, std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double d = m(i, c) - m(j, c);
      acc += d * d;
    }
    return std::sqrt(acc);
  };

  Rng rng(seed, 0xa0d1);
  const std::size_t max_draws = 50 * n_pairs;
  for (std::size_t draw = 0; draw < max_draws && audit.pairs < n_pairs; ++draw) {
    const std::size_t i = rng.uniform_index(n);
    const std::size_t j = rng.uniform_index(n);
    if (i == j) continue;
    const double dx = row_distance(x, i, j);
    if (!(dx > 1e-9)) continue;
    ++audit.pairs;
    for (std::size_t arm = 0; arm < 2; ++arm) {
      const double r = row_distance(z[arm], i, j) / dx;
      audit.arm_max_ratio[arm] = std::max(audit.arm_max_ratio[arm], r);
    }
  }
  audit.max_ratio = std::max(audit.arm_max_ratio[0], audit.arm_max_ratio[1]);
  return audit;
}

LipschitzAudit perturbation_audit(const LipschitzEncoder& enc, const Graph& g, const Tensor& x,
                                  std::size_t n_trials, double scale, std::uint64_t seed) {
  LipschitzAudit audit;
  if (x.rows() == 0 || n_trials == 0) return audit;
  auto max_row_norm = [](const Tensor& a, const Tensor& b) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) acc += (a(i, c) - b(i, c)) * (a(i, c) - b(i, c));
      best = std::max(best, acc);
    }
    return std::sqrt(best);
  };
  const Tensor h = sage_forward(enc, g, x);
  const std::array<Tensor, 2> z{branch_forward(enc, h, 0), branch_forward(enc, h, 1)};
  Rng rng(seed, 0xa0d2);
  for (std::size_t t = 0; t < n_trials; ++t) {
    Tensor xp = x;
    for (double& v : xp.data()) v += rng.normal(0.0, scale);
    const double dx = max_row_norm(x, xp);
    if (!(dx > 1e-12)) continue;
    ++audit.pairs;
    const Tensor hp = sage_forward(enc, g, xp);
    for (std::size_t arm = 0; arm < 2; ++arm) {
      const double r = max_row_norm(z[arm], branch_forward(enc, hp, static_cast<int>(arm))) / dx;
      audit.arm_max_ratio[arm] = std::max(audit.arm_max_ratio[arm], r);
    }
  }
  audit.max_ratio = std::max(audit.arm_max_ratio[0], audit.arm_max_ratio[1]);
  return audit;
}

}  // namespace graphdkl
