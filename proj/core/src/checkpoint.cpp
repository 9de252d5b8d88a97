// Model and training-state checkpoints: JSON manifest plus raw f64 arrays.
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "graphdkl/array_io.hpp"
#include "graphdkl/errors.hpp"
#include "graphdkl/estimator.hpp"
#include "text_io.hpp"

namespace graphdkl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"seed", c.seed},
          {"spectral_norm", c.spectral_norm},
          {"sage_layers", c.sage_layers},
          {"branch_layers", c.branch_layers},
          {"hidden_width", c.hidden_width},
          {"num_inducing", c.num_inducing},
          {"patience", c.patience},
          {"init_noise", c.init_noise},
          {"kmeans_inducing", c.kmeans_inducing},
          {"optimal_init", c.optimal_init},
          {"freeze_encoder", c.freeze_encoder}};
}

TrainConfig config_from(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  static const std::set<std::string> kKeys{
      "epochs",       "lr",          "beta1",         "beta2",      "seed",
      "spectral_norm", "sage_layers", "branch_layers", "hidden_width", "num_inducing",
      "patience",     "init_noise",  "kmeans_inducing", "optimal_init", "freeze_encoder"};
  for (const auto& [key, _] : j.items())
    if (!kKeys.contains(key)) throw ConfigError("unknown train config key '" + key + "'");
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.seed = j.value("seed", c.seed);
    c.spectral_norm = j.value("spectral_norm", c.spectral_norm);
    c.sage_layers = j.value("sage_layers", c.sage_layers);
    c.branch_layers = j.value("branch_layers", c.branch_layers);
    c.hidden_width = j.value("hidden_width", c.hidden_width);
    c.num_inducing = j.value("num_inducing", c.num_inducing);
    c.patience = j.value("patience", c.patience);
    c.init_noise = j.value("init_noise", c.init_noise);
    c.kmeans_inducing = j.value("kmeans_inducing", c.kmeans_inducing);
    c.optimal_init = j.value("optimal_init", c.optimal_init);
    c.freeze_encoder = j.value("freeze_encoder", c.freeze_encoder);
  } catch (const json::exception& e) {
    throw ConfigError("train config: " + std::string(e.what()));
  }
  return c;
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing " + path.string());
  try {
    return json::parse(detail::read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path.filename().string() + ": " + e.what());
  }
}

std::string power_name(std::size_t layer, char which) {
  return "power." + std::to_string(layer) + "." + which;
}

ParamSet model_arrays(const GraphDklModel& model) {
  ParamSet arrays = model.params();
  const auto layers = model.encoder.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i]->power.initialized()) continue;
    arrays.add(power_name(i, 'u'), layers[i]->power.u);
    arrays.add(power_name(i, 'v'), layers[i]->power.v);
  }
  for (int arm = 0; arm < 2; ++arm) {
    const SvgpHead& h = model.heads[static_cast<std::size_t>(arm)];
    arrays.add(head_prefix(arm) + "label_stats", Tensor(1, 2, {h.label_mean, h.label_std}));
  }
  return arrays;
}

// Array files live next to the manifest; a stale directory is cleared first
// so removed entries do not linger.
void write_arrays(const ParamSet& arrays, const fs::path& dir, json& manifest) {
  if (fs::exists(dir)) fs::remove_all(dir);
  manifest["arrays"] = json::parse(save_param_arrays(arrays, dir));
}

ParamSet read_arrays(const json& manifest, const fs::path& dir) {
  if (!manifest.contains("arrays")) throw IoError("manifest lacks an array index");
  return load_param_arrays(manifest.at("arrays").dump(), dir);
}

const Tensor& require(const ParamSet& arrays, const std::string& name) {
  if (!arrays.contains(name)) throw IoError("checkpoint lacks array '" + name + "'");
  return arrays[name];
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("train config: " + std::string(e.what()));
  }
  return config_from(j);
}

void save_model(const GraphDklModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest = {{"format_version", kModelFormatVersion},
                   {"kind", "graphdkl-model"},
                   {"input_dim", model.encoder.input_dim()},
                   {"spectral_norm", model.encoder.spectral_norm},
                   {"config", config_json(model.config)}};
  write_arrays(model_arrays(model), dir / "arrays", manifest);
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

GraphDklModel load_model(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  if (manifest.value("format_version", -1) != kModelFormatVersion)
    throw IoError("model checkpoint: unsupported format version");
  GraphDklModel model;
  std::size_t input_dim = 0;
  bool sn = true;
  try {
    model.config = config_from(manifest.at("config"));
    input_dim = manifest.at("input_dim").get<std::size_t>();
    sn = manifest.at("spectral_norm").get<bool>();
  } catch (const json::exception& e) {
    throw IoError("model manifest: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw IoError(std::string("model manifest: ") + e.what());
  }
  const ParamSet arrays = read_arrays(manifest, dir / "arrays");

  model.encoder = LipschitzEncoder::init(model.config.encoder_shape(input_dim), sn, 0);
  try {
    model.encoder.set_params(arrays);
  } catch (const ShapeError& e) {
    throw IoError(std::string("model arrays: ") + e.what());
  }
  auto layers = model.encoder.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!arrays.contains(power_name(i, 'u'))) {
      layers[i]->power = {};
      continue;
    }
    layers[i]->power.u = require(arrays, power_name(i, 'u'));
    layers[i]->power.v = require(arrays, power_name(i, 'v'));
    if (layers[i]->power.u.size() != layers[i]->weight.rows() ||
        layers[i]->power.v.size() != layers[i]->weight.cols())
      throw IoError("power vector shape mismatch for layer " + std::to_string(i));
  }
  for (int arm = 0; arm < 2; ++arm) {
    const std::string& p = head_prefix(arm);
    SvgpHead& h = model.heads[static_cast<std::size_t>(arm)];
    h.kernel.log_sigma = require(arrays, p + "log_sigma").item();
    h.kernel.log_lengthscale = require(arrays, p + "log_lengthscale").item();
    h.log_noise = require(arrays, p + "log_noise").item();
    h.inducing = require(arrays, p + "inducing");
    h.mu_u = require(arrays, p + "mu_u");
    h.chol_u_raw = require(arrays, p + "chol_u_raw");
    const Tensor& stats = require(arrays, p + "label_stats");
    if (stats.size() != 2) throw IoError("label_stats must hold two values");
    h.label_mean = stats.data()[0];
    h.label_std = stats.data()[1];
    const std::size_t m = h.inducing.rows();
    if (h.mu_u.rows() != m || h.mu_u.cols() != 1 || h.chol_u_raw.rows() != m ||
        h.chol_u_raw.cols() != m || h.inducing.cols() != model.encoder.output_dim())
      throw IoError("head " + std::to_string(arm) + " arrays have inconsistent shapes");
  }
  return model;
}

void save_train_state(const TrainState& state, const fs::path& dir) {
  fs::create_directories(dir);
  save_model(state.model, dir / "current");
  save_model(state.best, dir / "best");

  ParamSet arrays;
  for (std::size_t i = 0; i < state.adam.m.size(); ++i) {
    arrays.add("m." + state.adam.m.name(i), state.adam.m.at(i));
    arrays.add("v." + state.adam.v.name(i), state.adam.v.at(i));
  }
  arrays.add("best_val", Tensor(1, 2, {state.best_val[0], state.best_val[1]}));
  Tensor trace(state.trace.size(), 3);
  for (std::size_t r = 0; r < state.trace.size(); ++r) {
    trace(r, 0) = state.trace[r].epoch;
    trace(r, 1) = state.trace[r].train_loss;
    trace(r, 2) = state.trace[r].val_loss;
  }
  if (!state.trace.empty()) arrays.add("trace", trace);

  json manifest = {{"format_version", kModelFormatVersion},
                   {"kind", "graphdkl-train-state"},
                   {"epoch", state.epoch},
                   {"adam_step", state.adam.step},
                   {"trace_rows", state.trace.size()},
                   {"best_epoch", state.best_epoch},
                   {"stale", state.stale},
                   {"stopped", state.stopped}};
  write_arrays(arrays, dir / "arrays", manifest);
  detail::write_file(dir / "state.json", manifest.dump(2) + "\n");
}

TrainState load_train_state(const fs::path& dir) {
  const json manifest = read_json(dir / "state.json");
  if (manifest.value("format_version", -1) != kModelFormatVersion)
    throw IoError("train state: unsupported format version");
  TrainState state;
  state.model = load_model(dir / "current");
  state.best = load_model(dir / "best");
  const ParamSet arrays = read_arrays(manifest, dir / "arrays");
  std::size_t trace_rows = 0;
  try {
    state.epoch = manifest.at("epoch").get<int>();
    state.adam.step = manifest.at("adam_step").get<std::int64_t>();
    trace_rows = manifest.at("trace_rows").get<std::size_t>();
    state.best_epoch = manifest.at("best_epoch").get<std::array<int, 2>>();
    state.stale = manifest.at("stale").get<std::array<int, 2>>();
    state.stopped = manifest.at("stopped").get<std::array<bool, 2>>();
  } catch (const json::exception& e) {
    throw IoError("state.json: " + std::string(e.what()));
  }
  const ParamSet params = state.model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.adam.m.add(params.name(i), require(arrays, "m." + params.name(i)));
    state.adam.v.add(params.name(i), require(arrays, "v." + params.name(i)));
  }
  const Tensor& best = require(arrays, "best_val");
  state.best_val = {best.data()[0], best.data()[1]};
  if (trace_rows > 0) {
    const Tensor& trace = require(arrays, "trace");
    if (trace.rows() != trace_rows) throw IoError("trace length disagrees with state.json");
    for (std::size_t r = 0; r < trace_rows; ++r)
      state.trace.push_back({static_cast<int>(trace(r, 0)), trace(r, 1), trace(r, 2)});
  }
  return state;
}

void save_split(const Split& split, const fs::path& path) {
  const json j = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  detail::write_file(path, j.dump() + "\n");
}

Split load_split(const fs::path& path) {
  const json j = read_json(path);
  Split s;
  try {
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.val = j.at("val").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw IoError(path.filename().string() + ": " + e.what());
  }
  return s;
}

void write_predictions_csv(const fs::path& path, const std::vector<ItePrediction>& preds) {
  std::string out = "node,ite,uncertainty,mu0,mu1,var0,var1\n";
  for (const ItePrediction& p : preds) {
    out += std::to_string(p.node);
    for (const double v : {p.ite, p.uncertainty, p.mu0, p.mu1, p.var0, p.var1})
      out += "," + detail::format_double(v);
    out += "\n";
  }
  detail::write_file(path, out);
}

void write_trace_csv(const fs::path& path, const std::vector<EpochRecord>& trace) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (const EpochRecord& r : trace) {
    out += std::to_string(r.epoch) + "," + detail::format_double(r.train_loss) + "," +
           (std::isnan(r.val_loss) ? std::string("nan") : detail::format_double(r.val_loss)) + "\n";
  }
  detail::write_file(path, out);
}

}  // namespace graphdkl
