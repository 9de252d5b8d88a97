#include "graphdkl/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "graphdkl/errors.hpp"
#include "graphdkl/ops.hpp"
#include "graphdkl/rng.hpp"
#include "text_io.hpp"

namespace graphdkl {

namespace {

// Independent RNG streams of the generator.
enum Stream : std::uint64_t {
  kClusters = 1,
  kCentroids,
  kFeatureNoise,
  kEdges,
  kScoreWeights,
  kTreatment,
  kOutcomeCoef,
  kOutcomeNoise,
};

constexpr double kFeatureNoiseStd = 0.5;
constexpr double kTreatmentOffset = 1.0;
// sigmoid(36) rounds to 1 - 2e-16; beyond this the propensity could saturate.
constexpr double kMaxLogit = 36.0;

double dot_row(const Tensor& m, std::size_t r, const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t c = 0; c < m.cols(); ++c) acc += m(r, c) * w[c];
  return acc;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double stddev) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.normal(0.0, stddev);
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("synth config: " + msg); };
  if (num_clusters < 1) fail("need at least one cluster");
  if (num_nodes < num_clusters) fail("num_nodes must be >= num_clusters");
  if (feature_dim < 1) fail("feature_dim must be positive");
  if (!(p_in >= 0.0 && p_in <= 1.0) || !(p_out >= 0.0 && p_out <= 1.0)) {
    fail("edge probabilities must lie in [0, 1]");
  }
  if (p_in < p_out) fail("p_in must be >= p_out");
  if (!(k >= 0.0) || !std::isfinite(k)) fail("k must be a finite value >= 0");
  if (!(sigma_y > 0.0) || !std::isfinite(sigma_y)) fail("sigma_y must be positive");
}

std::vector<double> CausalDataset::true_ite() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = true_ite(i);
  return out;
}

Tensor contextualize(const Tensor& x, const Graph& g) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t deg = g.degree(i);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (deg == 0) {
        out(i, c) = x(i, c);
        continue;
      }
      double acc = 0.0;
      const auto [b, e] = g.neighbors(i);
      for (const std::size_t* p = b; p != e; ++p) acc += x(*p, c);
      out(i, c) = 0.5 * (x(i, c) + acc / static_cast<double>(deg));
    }
  }
  return out;
}

CausalDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.num_nodes;
  const std::size_t d = cfg.feature_dim;
  const double coef_std = 1.0 / std::pow(static_cast<double>(d), 0.25);

  CausalDataset ds;
  ds.config = cfg;

  Rng cluster_rng(cfg.seed, kClusters);
  ds.cluster.resize(n);
  for (auto& c : ds.cluster) c = static_cast<int>(cluster_rng.uniform_index(cfg.num_clusters));

  Rng centroid_rng(cfg.seed, kCentroids);
  const Tensor centroids = centroid_rng.normal_tensor(cfg.num_clusters, d);
  Rng noise_rng(cfg.seed, kFeatureNoise);
  ds.x = Tensor(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c)
      ds.x(i, c) = centroids(static_cast<std::size_t>(ds.cluster[i]), c) +
                   noise_rng.normal(0.0, kFeatureNoiseStd);

  Rng edge_rng(cfg.seed, kEdges);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = ds.cluster[i] == ds.cluster[j] ? cfg.p_in : cfg.p_out;
      if (edge_rng.bernoulli(p)) edges.emplace_back(i, j);
    }
  }
  ds.graph = Graph::from_edges(n, edges);

  const Tensor xbar = contextualize(ds.x, ds.graph);

  Rng score_rng(cfg.seed, kScoreWeights);
  ds.truth.score_weights = gaussian_vector(score_rng, d, coef_std);
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) score[i] = dot_row(xbar, i, ds.truth.score_weights);
  const double center = median(score);

  Rng treat_rng(cfg.seed, kTreatment);
  ds.propensity.resize(n);
  ds.t.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double logit = cfg.k * (score[i] - center);
    if (std::abs(logit) >= kMaxLogit) {
      throw ConfigError("synth config: k = " + std::to_string(cfg.k) +
                        " saturates the propensity (|logit| >= 36)");
    }
    ds.propensity[i] = sigmoid(logit);
    ds.t[i] = treat_rng.uniform() < ds.propensity[i] ? 1 : 0;
  }

  Rng coef_rng(cfg.seed, kOutcomeCoef);
  ds.truth.beta0 = gaussian_vector(coef_rng, d, coef_std);
  ds.truth.beta_tau = gaussian_vector(coef_rng, d, coef_std);
  Rng y_rng(cfg.seed, kOutcomeNoise);
  ds.mu0.resize(n);
  ds.mu1.resize(n);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.mu0[i] = dot_row(xbar, i, ds.truth.beta0);
    ds.mu1[i] = ds.mu0[i] + dot_row(xbar, i, ds.truth.beta_tau) + kTreatmentOffset;
    const double noise = y_rng.normal(0.0, cfg.sigma_y);
    ds.y[i] = (ds.t[i] == 1 ? ds.mu1[i] : ds.mu0[i]) + noise;
  }
  return ds;
}

Split make_split(std::size_t num_nodes, std::uint64_t seed) {
  if (num_nodes < 5) throw DataError("split: need at least 5 nodes");
  Rng rng(seed, 0x5b17);
  const std::vector<std::size_t> perm = rng.permutation(num_nodes);
  const std::size_t n_val = num_nodes / 5;
  const std::size_t n_test = num_nodes / 5;
  const std::size_t n_train = num_nodes - n_val - n_test;
  Split s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return s;
}

std::vector<PositivityCount> positivity_report(const std::vector<double>& propensity,
                                               const std::vector<double>& thresholds) {
  std::vector<PositivityCount> out;
  for (const double thr : thresholds) {
    PositivityCount pc{thr};
    for (const double p : propensity) {
      if (p < thr) ++pc.below;
      if (p > 1.0 - thr) ++pc.above;
    }
    out.push_back(pc);
  }
  return out;
}

namespace {

nlohmann::json config_to_json(const SynthConfig& c) {
  return {{"num_nodes", c.num_nodes}, {"feature_dim", c.feature_dim},
          {"num_clusters", c.num_clusters}, {"p_in", c.p_in},
          {"p_out", c.p_out}, {"k", c.k},
          {"sigma_y", c.sigma_y}, {"seed", c.seed}};
}

SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.num_nodes = j.at("num_nodes").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.num_clusters = j.at("num_clusters").get<std::size_t>();
  c.p_in = j.at("p_in").get<double>();
  c.p_out = j.at("p_out").get<double>();
  c.k = j.at("k").get<double>();
  c.sigma_y = j.at("sigma_y").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void write_column(const std::filesystem::path& path, const std::vector<double>& v) {
  detail::write_numeric_csv(path, Tensor::column(v));
}

std::vector<double> read_column(const std::filesystem::path& path, std::size_t expected) {
  if (!std::filesystem::exists(path)) throw IoError("missing dataset file " + path.string());
  const Tensor t = detail::read_numeric_csv(path, false);
  if (t.rows() != expected || (expected > 0 && t.cols() != 1)) {
    throw ParseError(path.filename().string() + ": expected " + std::to_string(expected) +
                     " single-column rows, got " + t.shape_string());
  }
  return t.values();
}

}  // namespace

void save_dataset(const CausalDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_edge_list(ds.graph, dir / "graph.txt");
  save_feature_csv(ds.x, dir / "X.csv");
  std::vector<double> t(ds.t.begin(), ds.t.end());
  write_column(dir / "t.csv", t);
  write_column(dir / "y.csv", ds.y);
  write_column(dir / "mu0.csv", ds.mu0);
  write_column(dir / "mu1.csv", ds.mu1);
  write_column(dir / "propensity.csv", ds.propensity);

  nlohmann::json manifest = {{"format_version", kDatasetFormatVersion},
                             {"kind", "graphdkl-dataset"},
                             {"seed", ds.config.seed},
                             {"num_nodes", ds.size()},
                             {"feature_dim", ds.x.cols()},
                             {"config", config_to_json(ds.config)}};
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

CausalDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw IoError("missing " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }
  if (manifest.value("format_version", -1) != kDatasetFormatVersion) {
    throw IoError("manifest.json: unsupported dataset format version");
  }

  CausalDataset ds;
  std::size_t n = 0;
  std::size_t d = 0;
  try {
    ds.config = config_from_json(manifest.at("config"));
    n = manifest.at("num_nodes").get<std::size_t>();
    d = manifest.at("feature_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }

  if (!std::filesystem::exists(dir / "graph.txt")) throw IoError("missing graph.txt");
  ds.graph = load_edge_list(dir / "graph.txt");
  if (ds.graph.num_nodes() != n) throw ParseError("graph.txt: node count disagrees with manifest");

  if (!std::filesystem::exists(dir / "X.csv")) throw IoError("missing X.csv");
  ds.x = load_feature_csv(dir / "X.csv");
  if (ds.x.rows() != n || ds.x.cols() != d) {
    throw ParseError("X.csv: expected " + std::to_string(n) + " x " + std::to_string(d) +
                     ", got " + ds.x.shape_string());
  }

  const auto t = read_column(dir / "t.csv", n);
  ds.t.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (t[i] != 0.0 && t[i] != 1.0) throw ParseError("t.csv: treatment must be 0 or 1");
    ds.t[i] = static_cast<int>(t[i]);
  }
  ds.y = read_column(dir / "y.csv", n);
  ds.mu0 = read_column(dir / "mu0.csv", n);
  ds.mu1 = read_column(dir / "mu1.csv", n);
  ds.propensity = read_column(dir / "propensity.csv", n);
  return ds;
}

}  // namespace graphdkl
