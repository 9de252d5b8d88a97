#include "graphdkl/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "graphdkl/errors.hpp"
#include "graphdkl/ops.hpp"
#include "graphdkl/rng.hpp"

namespace graphdkl {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (sage_layers == 0) throw ConfigError("sage_layers must be >= 1");
  if (hidden_width == 0) throw ConfigError("hidden_width must be >= 1");
  if (num_inducing == 0) throw ConfigError("num_inducing must be >= 1");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (!(init_noise > 0.0) || !std::isfinite(init_noise)) throw ConfigError("init_noise must be positive");
}

EncoderShape TrainConfig::encoder_shape(std::size_t input_dim) const {
  EncoderShape shape;
  shape.input_dim = input_dim;
  shape.sage_widths.assign(sage_layers, hidden_width);
  shape.branch_widths.assign(branch_layers, hidden_width);
  return shape;
}

ParamSet GraphDklModel::params() const {
  ParamSet out = encoder.params();
  for (int arm = 0; arm < 2; ++arm) {
    const ParamSet hp = heads[static_cast<std::size_t>(arm)].params(head_prefix(arm));
    for (std::size_t i = 0; i < hp.size(); ++i) out.add(hp.name(i), hp.at(i));
  }
  return out;
}

void GraphDklModel::set_params(const ParamSet& params) {
  encoder.set_params(params);
  for (int arm = 0; arm < 2; ++arm)
    heads[static_cast<std::size_t>(arm)].set_params(params, head_prefix(arm));
}

bool TrainState::finished(int epochs) const {
  return epoch >= epochs || (stopped[0] && stopped[1]);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::array<std::vector<std::size_t>, 2> by_arm(const CausalDataset& ds,
                                              std::span<const std::size_t> nodes) {
  std::array<std::vector<std::size_t>, 2> out;
  for (const std::size_t i : nodes) {
    if (i >= ds.size()) throw DataError("node index " + std::to_string(i) + " out of range");
    out[ds.t[i] == 1 ? 1 : 0].push_back(i);
  }
  return out;
}

Tensor gather(const Tensor& m, std::span<const std::size_t> rows) {
  Tensor out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(rows[r], c);
  return out;
}

std::vector<double> labels(const CausalDataset& ds, std::span<const std::size_t> nodes) {
  std::vector<double> y;
  y.reserve(nodes.size());
  for (const std::size_t i : nodes) y.push_back(ds.y[i]);
  return y;
}

double median_pairwise_distance(const Tensor& z) {
  std::vector<double> d;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = i + 1; j < z.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c) acc += (z(i, c) - z(j, c)) * (z(i, c) - z(j, c));
      d.push_back(std::sqrt(acc));
    }
  }
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 1e-12 ? *mid : 1.0;
}

// Per-arm negative ELBO on the arm's nodes; invalid Var for an empty arm.
std::array<Var, 2> arm_losses(const GraphDklModel& model, const BoundParams& bp,
                              const std::array<Var, 2>& z, const CausalDataset& ds,
                              const std::array<std::vector<std::size_t>, 2>& nodes) {
  std::array<Var, 2> out;
  for (int arm = 0; arm < 2; ++arm) {
    const auto a = static_cast<std::size_t>(arm);
    if (nodes[a].empty()) continue;
    const SvgpHead& head = model.heads[a];
    const std::vector<double> y = head.standardize(labels(ds, nodes[a]));
    const Var za = ops::gather_rows(z[a], nodes[a]);
    out[a] = ops::neg(elbo(head, bp, head_prefix(arm), za, y));
  }
  return out;
}

std::array<Var, 2> forward_latents(const GraphDklModel& model, const BoundParams& bp,
                                   const CausalDataset& ds) {
  const Var x = bp.tape().constant(ds.x);
  const Var h = sage_forward(model.encoder, bp, ds.graph, x);
  return {branch_forward(model.encoder, bp, h, 0), branch_forward(model.encoder, bp, h, 1)};
}

Var sum_valid(const std::array<Var, 2>& parts) {
  if (parts[0].valid() && parts[1].valid()) return ops::add(parts[0], parts[1]);
  return parts[0].valid() ? parts[0] : parts[1];
}

double value_or_nan(const Var& v) { return v.valid() ? v.value().item() : kNaN; }

void check_gradients(const ParamSet& grads) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads.at(i).all_finite()) throw NumericError("non-finite gradient for " + grads.name(i));
  }
}

}  // namespace

TrainState init_training(const CausalDataset& ds, const Split& split, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.x.rows() != ds.size() || ds.graph.num_nodes() != ds.size())
    throw DataError("dataset arrays disagree on the node count");
  const auto train_arms = by_arm(ds, split.train);
  if (train_arms[0].empty() || train_arms[1].empty())
    throw DataError("training split needs at least one node in each treatment arm");

  TrainState state;
  GraphDklModel& model = state.model;
  model.config = cfg;
  model.encoder = LipschitzEncoder::init(cfg.encoder_shape(ds.x.cols()), cfg.spectral_norm,
                                         derive_seed(cfg.seed, 1));
  const Tensor h = sage_forward(model.encoder, ds.graph, ds.x);
  for (int arm = 0; arm < 2; ++arm) {
    const auto a = static_cast<std::size_t>(arm);
    const Tensor z = gather(branch_forward(model.encoder, h, arm), train_arms[a]);
    Tensor inducing = select_inducing(z, cfg.num_inducing, derive_seed(cfg.seed, 10 + a),
                                      cfg.kmeans_inducing);
    RbfKernel kernel;
    kernel.log_lengthscale = std::log(median_pairwise_distance(inducing));
    SvgpHead head = SvgpHead::at_prior(std::move(inducing), kernel, cfg.init_noise);
    head.fit_standardization(labels(ds, train_arms[a]));
    if (cfg.optimal_init) set_optimal_variational(head, z, head.standardize(labels(ds, train_arms[a])));
    model.heads[a] = std::move(head);
  }
  state.adam = AdamState::zeros_like(model.params());
  state.best = model;
  state.best_val.fill(std::numeric_limits<double>::infinity());
  return state;
}

void continue_training(TrainState& state, const CausalDataset& ds, const Split& split,
                       const TrainConfig& cfg, int stop_epoch) {
  const auto train_arms = by_arm(ds, split.train);
  const auto val_arms = by_arm(ds, split.val);
  const AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
  const bool frozen = cfg.freeze_encoder;
  stop_epoch = std::min(stop_epoch, cfg.epochs);

  while (state.epoch < stop_epoch && !state.finished(cfg.epochs)) {
    const int epoch = state.epoch;
    try {
      GraphDklModel& model = state.model;
      if (!frozen && model.encoder.spectral_norm) model.encoder.refresh_power_iteration(1);

      ParamSet params = model.params();
      Tape tape;
      BoundParams bp(tape, params, true);
      const std::array<Var, 2> z = forward_latents(model, bp, ds);
      const std::array<Var, 2> train_parts = arm_losses(model, bp, z, ds, train_arms);
      const std::array<Var, 2> val_parts = arm_losses(model, bp, z, ds, val_arms);
      const Var train_loss = sum_valid(train_parts);
      const Var val_loss = sum_valid(val_parts);

      EpochRecord rec{epoch, train_loss.value().item(), value_or_nan(val_loss)};
      state.trace.push_back(rec);

      // Model selection: jointly, or per head when the encoder is frozen.
      const int groups = frozen ? 2 : 1;
      for (int gi = 0; gi < groups; ++gi) {
        const auto g = static_cast<std::size_t>(gi);
        if (state.stopped[g]) continue;
        double score = frozen ? value_or_nan(val_parts[g]) : rec.val_loss;
        if (std::isnan(score)) score = frozen ? value_or_nan(train_parts[g]) : rec.train_loss;
        if (score < state.best_val[g]) {
          state.best_val[g] = score;
          state.best_epoch[g] = epoch;
          state.stale[g] = 0;
          if (frozen) {
            state.best.encoder = model.encoder;
            state.best.heads[g] = model.heads[g];
          } else {
            state.best = model;
          }
        } else if (cfg.patience > 0 && ++state.stale[g] >= cfg.patience) {
          state.stopped[g] = true;
        }
      }
      if (!frozen) state.stopped[1] = state.stopped[0];
      if (state.stopped[0] && state.stopped[1]) break;

      tape.backward(train_loss);
      const ParamSet grads = bp.gradients();
      check_gradients(grads);

      auto active = [&](std::string_view name) {
        if (name.starts_with("enc.")) return !frozen;
        if (!frozen) return true;
        return !state.stopped[name.starts_with(head_prefix(1)) ? 1 : 0];
      };
      ParamSet step_params = params.filter(active);
      AdamState sub{state.adam.m.filter(active), state.adam.v.filter(active), state.adam.step};
      adam_step(step_params, grads.filter(active), sub, adam);
      params.assign_from(step_params);
      state.adam.m.assign_from(sub.m);
      state.adam.v.assign_from(sub.v);
      state.adam.step = sub.step;
      model.set_params(params);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    ++state.epoch;
  }
  if (frozen) state.best.config = state.model.config;
}

TrainResult finish(const TrainState& state) {
  TrainResult result;
  result.model = state.best;
  result.trace = state.trace;
  result.best_epoch = state.best_epoch[0];
  return result;
}

TrainResult train(const CausalDataset& ds, const Split& split, const TrainConfig& cfg) {
  TrainState state = init_training(ds, split, cfg);
  continue_training(state, ds, split, cfg, cfg.epochs);
  return finish(state);
}

Var total_loss(const GraphDklModel& model, const BoundParams& params, const CausalDataset& ds,
               std::span<const std::size_t> nodes) {
  const auto arms = by_arm(ds, nodes);
  const Var loss = sum_valid(arm_losses(model, params, forward_latents(model, params, ds), ds, arms));
  if (!loss.valid()) throw DataError("total_loss: no nodes");
  return loss;
}

double total_loss(const GraphDklModel& model, const CausalDataset& ds,
                  std::span<const std::size_t> nodes) {
  const ParamSet params = model.params();
  Tape tape;
  BoundParams bp(tape, params, false);
  return total_loss(model, bp, ds, nodes).value().item();
}

std::vector<ItePrediction> predict(const GraphDklModel& model, const CausalDataset& ds,
                                   std::span<const std::size_t> nodes) {
  for (const std::size_t i : nodes)
    if (i >= ds.size()) throw DataError("predict: node index " + std::to_string(i) + " out of range");
  const Tensor h = sage_forward(model.encoder, ds.graph, ds.x);
  std::array<GpPrediction, 2> arm;
  for (int a = 0; a < 2; ++a) {
    const auto ai = static_cast<std::size_t>(a);
    const Tensor z = gather(branch_forward(model.encoder, h, a), nodes);
    arm[ai] = svgp_predict(model.heads[ai], z);
    const SvgpHead& head = model.heads[ai];
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      arm[ai].mean[q] = arm[ai].mean[q] * head.label_std + head.label_mean;
      arm[ai].var[q] *= head.label_std * head.label_std;
    }
  }
  std::vector<ItePrediction> out(nodes.size());
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    ItePrediction& p = out[q];
    p.node = nodes[q];
    p.mu0 = arm[0].mean[q];
    p.mu1 = arm[1].mean[q];
    p.var0 = arm[0].var[q];
    p.var1 = arm[1].var[q];
    p.ite = p.mu1 - p.mu0;
    p.uncertainty = p.var0 + p.var1;
  }
  return out;
}

}  // namespace graphdkl
