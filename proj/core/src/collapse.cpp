// Toy graph for the feature-collapse demonstration.
#include <array>
#include <cmath>

#include <json.hpp>

#include "graphdkl/errors.hpp"
#include "graphdkl/experiment.hpp"
#include "graphdkl/ops.hpp"
#include "graphdkl/optim.hpp"
#include "graphdkl/rng.hpp"
#include "text_io.hpp"

namespace graphdkl {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kPerClass = 50;
constexpr std::size_t kClasses = 4;
constexpr double kNoise = 0.5;
constexpr std::array<std::array<double, 2>, kClasses> kCenters{{{0, 0}, {3, 0}, {0, 3}, {3, 3}}};
// Dense class 0, sparse class 3 whose nodes mostly link into class 0.
constexpr std::array<double, kClasses> kIntraP{0.3, 0.2, 0.2, 0.02};
constexpr std::size_t kCrossPerNode = 4;

struct Toy {
  Tensor x;
  std::vector<int> label;
  Graph graph;
};

Toy make_toy(std::uint64_t seed) {
  Rng rng(seed, 0xc011);
  Toy toy;
  const std::size_t n = kPerClass * kClasses;
  toy.x = Tensor(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i / kPerClass;
    toy.label.push_back(static_cast<int>(c));
    toy.x(i, 0) = kCenters[c][0] + rng.normal(0.0, kNoise);
    toy.x(i, 1) = kCenters[c][1] + rng.normal(0.0, kNoise);
  }
  std::vector<Edge> edges;
  for (std::size_t c = 0; c < kClasses; ++c)
    for (std::size_t a = 0; a < kPerClass; ++a)
      for (std::size_t b = a + 1; b < kPerClass; ++b)
        if (rng.bernoulli(kIntraP[c])) edges.emplace_back(c * kPerClass + a, c * kPerClass + b);
  for (std::size_t a = 0; a < kPerClass; ++a)
    for (std::size_t e = 0; e < kCrossPerNode; ++e)
      edges.emplace_back(3 * kPerClass + a, rng.uniform_index(kPerClass));
  toy.graph = Graph::from_edges(n, edges);
  return toy;
}

Tensor centroid(const Tensor& m, const std::vector<int>& label, int cls) {
  Tensor c(1, m.cols());
  double count = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (label[i] != cls) continue;
    for (std::size_t j = 0; j < m.cols(); ++j) c(0, j) += m(i, j);
    ++count;
  }
  c *= 1.0 / count;
  return c;
}

double distance(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(acc);
}

// One graph layer (2 -> 2, linear) plus a linear readout onto one-hot labels
// of the three seen classes, squared loss.
CollapseVariant train_variant(const Toy& toy, bool spectral_norm, std::uint64_t seed, int epochs) {
  EncoderShape shape{2, {2}, {}};
  LipschitzEncoder enc = LipschitzEncoder::init(shape, spectral_norm, derive_seed(seed, 1));

  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < toy.label.size(); ++i)
    if (toy.label[i] < 3) seen.push_back(i);
  Tensor target(seen.size(), 3);
  for (std::size_t r = 0; r < seen.size(); ++r)
    target(r, static_cast<std::size_t>(toy.label[seen[r]])) = 1.0;

  ParamSet params = enc.params();
  Rng rng(seed, 0x2ead);
  params.add("readout.weight", rng.normal_tensor(2, 3, 1.0 / std::sqrt(2.0)));
  params.add("readout.bias", Tensor(1, 3));

  auto loss_fn = [&](const BoundParams& bp) {
    const Var x = bp.tape().constant(toy.x);
    const Var z = ops::gather_rows(sage_forward(enc, bp, toy.graph, x), seen);
    const Var out = ops::add_row(ops::matmul(z, bp["readout.weight"]), bp["readout.bias"]);
    return ops::mean(ops::square(ops::sub(out, bp.tape().constant(target))));
  };

  AdamState adam = AdamState::zeros_like(params);
  const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
  for (int e = 0; e < epochs; ++e) {
    if (spectral_norm) enc.refresh_power_iteration(1);
    const ValueAndGrad vg = value_and_grad(loss_fn, params);
    adam_step(params, vg.grads, adam, cfg);
    enc.set_params(params);
  }
  if (spectral_norm) enc.refresh_power_iteration(1);

  CollapseVariant v;
  v.final_loss = evaluate(loss_fn, params);
  v.latent = sage_forward(enc, toy.graph, toy.x);
  v.audit = lipschitz_audit(enc, toy.graph, toy.x, 1000, seed);
  v.perturbation = perturbation_audit(enc, toy.graph, toy.x, 100, 0.1, seed);
  const double dx = distance(centroid(toy.x, toy.label, 3), centroid(toy.x, toy.label, 0));
  v.centroid_ratio_30 =
      distance(centroid(v.latent, toy.label, 3), centroid(v.latent, toy.label, 0)) / dx;
  return v;
}

void write_latent(const fs::path& path, const Tensor& z, const std::vector<int>& label,
                  const char* header = "node,class,z1,z2\n") {
  std::string out = header;
  for (std::size_t i = 0; i < z.rows(); ++i)
    out += std::to_string(i) + "," + std::to_string(label[i]) + "," +
           detail::format_double(z(i, 0)) + "," + detail::format_double(z(i, 1)) + "\n";
  detail::write_file(path, out);
}

nlohmann::json variant_json(const CollapseVariant& v) {
  return {{"max_ratio", v.audit.max_ratio},
          {"pairs", v.audit.pairs},
          {"perturbation_max_ratio", v.perturbation.max_ratio},
          {"perturbation_trials", v.perturbation.pairs},
          {"final_loss", v.final_loss},
          {"centroid_ratio_class3_class0", v.centroid_ratio_30}};
}

}  // namespace

CollapseOutcome run_demo_collapse(const fs::path& out, std::uint64_t seed, int epochs) {
  if (epochs < 0) throw ConfigError("demo-collapse: epochs must be >= 0");
  const std::string started = utc_timestamp();
  Toy toy = make_toy(seed);
  CollapseOutcome r;
  r.sn = train_variant(toy, true, seed, epochs);
  r.nosn = train_variant(toy, false, seed, epochs);

  fs::create_directories(out);
  write_latent(out / "latent_sn.csv", r.sn.latent, toy.label);
  write_latent(out / "latent_nosn.csv", r.nosn.latent, toy.label);
  write_latent(out / "toy.csv", toy.x, toy.label, "node,class,x1,x2\n");
  const nlohmann::json audit = {{"seed", seed},
                                {"epochs", epochs},
                                {"num_nodes", toy.x.rows()},
                                {"num_edges", toy.graph.num_edges()},
                                {"held_out_class", 3},
                                {"spectral_norm", variant_json(r.sn)},
                                {"no_spectral_norm", variant_json(r.nosn)}};
  detail::write_file(out / "audit.json", audit.dump(2) + "\n");
  write_run_meta(out, "demo-collapse", started);

  r.x = std::move(toy.x);
  r.label = std::move(toy.label);
  r.graph = std::move(toy.graph);
  return r;
}

}  // namespace graphdkl
