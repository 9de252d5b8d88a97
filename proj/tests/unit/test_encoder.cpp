#include <doctest.h>

#include <cmath>

#include "graphdkl/encoder.hpp"
#include "graphdkl/errors.hpp"
#include "graphdkl/log.hpp"
#include "graphdkl/rng.hpp"
#include "oracles.hpp"

using namespace graphdkl;

namespace {

// Straight-line forward: neighborhood average, x W_eff + b, ReLU unless linear.
Tensor oracle_layer(const DenseLayer& layer, bool sn, const Tensor& in, const Graph* g) {
  Tensor agg = in;
  if (g != nullptr) {
    for (std::size_t i = 0; i < in.rows(); ++i) {
      std::vector<std::size_t> nb{i};
      const auto [b, e] = g->neighbors(i);
      nb.insert(nb.end(), b, e);
      for (std::size_t c = 0; c < in.cols(); ++c) {
        double s = 0.0;
        for (std::size_t j : nb) s += in(j, c);
        agg(i, c) = s / static_cast<double>(nb.size());
      }
    }
  }
  double tau = 1.0;
  if (sn) {
    tau = 0.0;
    for (std::size_t a = 0; a < layer.weight.rows(); ++a)
      for (std::size_t b = 0; b < layer.weight.cols(); ++b)
        tau += layer.power.u[a] * layer.weight(a, b) * layer.power.v[b];
  }
  Tensor out(in.rows(), layer.out_dim());
  for (std::size_t i = 0; i < in.rows(); ++i)
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      double s = layer.bias[o];
      for (std::size_t c = 0; c < in.cols(); ++c) s += agg(i, c) * layer.weight(c, o) / tau;
      out(i, o) = layer.activation == Activation::kRelu ? std::max(0.0, s) : s;
    }
  return out;
}

Tensor oracle_forward(const LipschitzEncoder& enc, const Graph& g, const Tensor& x, int arm) {
  Tensor h = x;
  for (const SageLayer& l : enc.sage) h = oracle_layer(l, enc.spectral_norm, h, &g);
  for (const MlpLayer& l : enc.branch[static_cast<std::size_t>(arm)])
    h = oracle_layer(l, enc.spectral_norm, h, nullptr);
  return h;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void randomize(LipschitzEncoder& enc, std::uint64_t seed) {
  Rng rng(seed);
  for (DenseLayer* l : enc.layers()) {
    l->weight = rng.normal_tensor(l->in_dim(), l->out_dim());
    l->bias = rng.normal_tensor(1, l->out_dim(), 0.3);
  }
  enc.refresh_power_iteration(200);
}

void set_identity(LipschitzEncoder& enc, double scale) {
  for (DenseLayer* l : enc.layers()) {
    l->weight = Tensor::identity(l->in_dim());
    l->weight *= scale;
    l->bias = Tensor(1, l->out_dim());
  }
  enc.refresh_power_iteration(30);
}

}  // namespace

TEST_CASE("power iteration on simple spectra") {
  CHECK(spectral_norm_estimate(Tensor::from_rows({{3, 0}, {0, 1}}), 30) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(spectral_norm_estimate(Tensor::identity(4), 30) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("power iteration against a Jacobi SVD") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor w = rng.normal_tensor(5, 7);
    const double smax = oracle::sigma_max(w);
    const double tau = spectral_norm_estimate(w, 30, trial);
    CHECK(tau <= smax * (1 + 1e-12));
    CHECK(std::abs(tau - smax) / smax < 0.01);
  }
}

TEST_CASE("warm start keeps improving the same state") {
  Rng rng(4);
  const Tensor w = rng.normal_tensor(6, 6);
  PowerIterationState st;
  st.reset(6, 6, 1);
  const double a = spectral_norm_estimate(w, st, 1);
  const double b = spectral_norm_estimate(w, st, 1);
  CHECK(b >= a - 1e-12);
  CHECK(oracle::sigma_max(st.u.transposed()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero matrix yields tau 0 with a warning") {
  int warnings = 0;
  const WarningSink prev = set_warning_sink([&](const std::string&) { ++warnings; });
  CHECK(spectral_norm_estimate(Tensor(3, 3), 30) == 0.0);
  set_warning_sink(prev);
  CHECK(warnings == 1);
}

TEST_CASE("normalize_weight") {
  const Tensor w = Tensor::from_rows({{2, -4}, {6, 1}});
  const Tensor half = normalize_weight(w, 2.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(half[i] == w[i] / 2.0);
  CHECK(normalize_weight(w, 1.0) == w);
  CHECK_THROWS_AS(normalize_weight(w, 0.0), NumericError);
  CHECK_THROWS_AS(normalize_weight(w, -1.0), NumericError);

  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor m = rng.normal_tensor(6, 4);
    const Tensor wbar = normalize_weight(m, spectral_norm_estimate(m, 30, trial));
    const double again = spectral_norm_estimate(wbar, 30, trial + 100);
    CHECK(again >= 0.99);
    CHECK(again <= 1.001);
  }
}

TEST_CASE("normalization is idempotent on direction") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor m = rng.normal_tensor(5, 5);
    const Tensor once = normalize_weight(m, spectral_norm_estimate(m, 500, trial));
    const Tensor twice = normalize_weight(once, spectral_norm_estimate(once, 500, trial));
    for (std::size_t i = 0; i < m.size(); ++i)
      CHECK(std::abs(twice[i] - once[i]) <= 1e-6 * std::abs(once[i]) + 1e-15);
  }
}

TEST_CASE("initial weights are orthogonal and normalized") {
  const LipschitzEncoder enc = LipschitzEncoder::init({6, {8, 4}, {4, 3}}, true, 5);
  for (const DenseLayer* l : enc.layers()) {
    const std::vector<double> sv = oracle::singular_values(l->weight);
    for (std::size_t i = 0; i < std::min(l->in_dim(), l->out_dim()); ++i)
      CHECK(sv[i] == doctest::Approx(1.0).epsilon(1e-10));
    const Tensor eff = effective_weight(*l, true);
    CHECK(oracle::sigma_max(eff) <= 1.0 + 1e-3);
  }
  CHECK(enc.latent_dim() == 4);
  CHECK(enc.output_dim() == 3);
  CHECK(enc.sage.back().activation == Activation::kLinear);
  CHECK(enc.sage.front().activation == Activation::kRelu);
  CHECK(enc.branch[1].back().activation == Activation::kLinear);
}

TEST_CASE("single node with identity weights passes nonnegative input through") {
  LipschitzEncoder enc = LipschitzEncoder::init({3, {3}, {}}, true, 0);
  set_identity(enc, 1.0);
  const Graph g = Graph::from_edges(1, {});
  const Tensor x = Tensor::from_rows({{0.5, 2.0, 0.0}});
  CHECK(max_abs_diff(sage_forward(enc, g, x), x) < 1e-15);
}

TEST_CASE("two-node edge with identity weights averages the rows") {
  LipschitzEncoder enc = LipschitzEncoder::init({2, {2}, {}}, true, 0);
  set_identity(enc, 1.0);
  const Graph g = Graph::from_edges(2, {{0, 1}});
  const Tensor h = sage_forward(enc, g, Tensor::from_rows({{1, 0}, {0, 1}}));
  CHECK(max_abs_diff(h, Tensor::from_rows({{0.5, 0.5}, {0.5, 0.5}})) < 1e-15);
}

TEST_CASE("branches: identity, zero weights and random") {
  LipschitzEncoder enc = LipschitzEncoder::init({3, {3}, {3}}, false, 0);
  Rng rng(1);
  const Tensor h = rng.normal_tensor(4, 3);
  set_identity(enc, 1.0);
  CHECK(branch_forward(enc, h, 0) == h);
  enc.branch[1][0].weight = Tensor(3, 3);
  enc.branch[1][0].bias = Tensor::row({1.0, -2.0, 0.5});
  const Tensor z = branch_forward(enc, h, 1);
  for (std::size_t i = 0; i < 4; ++i) CHECK((z(i, 0) == 1.0 && z(i, 1) == -2.0 && z(i, 2) == 0.5));

  LipschitzEncoder deep = LipschitzEncoder::init({3, {3}, {5, 4, 2}}, true, 3);
  randomize(deep, 17);
  const Graph none = Graph::from_edges(4, {});
  for (int arm = 0; arm < 2; ++arm) {
    Tensor expect = h;
    for (const MlpLayer& l : deep.branch[static_cast<std::size_t>(arm)])
      expect = oracle_layer(l, true, expect, nullptr);
    CHECK(max_abs_diff(branch_forward(deep, h, arm), expect) < 1e-12);
  }
}

TEST_CASE("3-node path forward matches the straight-line oracle") {
  for (bool sn : {true, false}) {
    LipschitzEncoder enc = LipschitzEncoder::init({4, {5, 3}, {4, 2}}, sn, 9);
    randomize(enc, 31);
    const Graph g = Graph::from_edges(3, {{0, 1}, {1, 2}});
    Rng rng(2);
    const Tensor x = rng.normal_tensor(3, 4);
    for (int arm = 0; arm < 2; ++arm) {
      const Tensor z = branch_forward(enc, sage_forward(enc, g, x), arm);
      CHECK(max_abs_diff(z, oracle_forward(enc, g, x, arm)) < 1e-12);
    }
    // The taped path agrees with the plain one.
    Tape tape;
    const ParamSet params = enc.params();
    const BoundParams bp(tape, params);
    const Var h = sage_forward(enc, bp, g, tape.constant(x));
    CHECK(max_abs_diff(branch_forward(enc, bp, h, 1).value(), oracle_forward(enc, g, x, 1)) < 1e-12);
  }
}

TEST_CASE("disabling normalization is a plain mean-aggregator network") {
  LipschitzEncoder sn = LipschitzEncoder::init({4, {6, 3}, {3}}, true, 13);
  randomize(sn, 14);
  // Fold 1/tau into the weights by hand and switch the flag off.
  LipschitzEncoder plain = sn;
  plain.spectral_norm = false;
  for (std::size_t i = 0; i < plain.layers().size(); ++i)
    plain.layers()[i]->weight = effective_weight(*sn.layers()[i], true);
  Rng rng(3);
  std::vector<Edge> edges;
  for (int e = 0; e < 25; ++e) edges.emplace_back(rng.uniform_index(12), rng.uniform_index(12));
  const Graph g = Graph::from_edges(12, edges);
  const Tensor x = rng.normal_tensor(12, 4);
  CHECK(max_abs_diff(sage_forward(sn, g, x), sage_forward(plain, g, x)) < 1e-12);
  Tensor h = x;
  for (const SageLayer& l : plain.sage) h = oracle_layer(l, false, h, &g);
  CHECK(max_abs_diff(sage_forward(plain, g, x), h) < 1e-12);
  for (const DenseLayer* l : plain.layers()) CHECK(effective_weight(*l, false) == l->weight);
}

TEST_CASE("audit: identity pipeline and halved weights") {
  Rng rng(6);
  const Graph none = Graph::from_edges(40, {});
  const Tensor x = rng.normal_tensor(40, 3);

  LipschitzEncoder id = LipschitzEncoder::init({3, {3}, {3}}, false, 0);
  set_identity(id, 1.0);
  const LipschitzAudit a = lipschitz_audit(id, none, x, 200, 1);
  CHECK(a.max_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.pairs > 0);

  LipschitzEncoder half = id;
  set_identity(half, 0.5);
  CHECK(lipschitz_audit(half, none, x, 200, 1).max_ratio <= 0.5 + 1e-12);

  // Random graph and weights: with normalization off the ratio is only reported.
  std::vector<Edge> edges;
  for (int e = 0; e < 80; ++e) edges.emplace_back(rng.uniform_index(40), rng.uniform_index(40));
  const Graph g = Graph::from_edges(40, edges);
  LipschitzEncoder big = LipschitzEncoder::init({3, {3}, {3}}, false, 0);
  set_identity(big, 4.0);
  CHECK(perturbation_audit(big, none, x, 10, 0.1, 2).max_ratio == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(perturbation_audit(big, g, x, 10, 0.1, 2).max_ratio <= 16.0 + 1e-12);
}

TEST_CASE("every normalized layer is 1-Lipschitz in the max row norm") {
  LipschitzEncoder enc = LipschitzEncoder::init({5, {7, 6}, {6, 4}}, true, 21);
  randomize(enc, 22);
  Rng rng(23);
  std::vector<Edge> edges;
  for (int e = 0; e < 40; ++e) edges.emplace_back(rng.uniform_index(15), rng.uniform_index(15));
  const Graph g = Graph::from_edges(15, edges);
  for (std::size_t l = 0; l < enc.sage.size(); ++l) {
    const DenseLayer& layer = enc.sage[l];
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor a = rng.normal_tensor(15, layer.in_dim());
      const Tensor b = rng.normal_tensor(15, layer.in_dim());
      const double out = oracle::max_row_norm_diff(apply_layer(layer, true, a, &g), apply_layer(layer, true, b, &g));
      CHECK(out <= (1 + 1e-3) * oracle::max_row_norm_diff(a, b));
    }
  }
  for (const auto& stack : enc.branch)
    for (const MlpLayer& layer : stack)
      for (int trial = 0; trial < 100; ++trial) {
        const Tensor a = rng.normal_tensor(1, layer.in_dim());
        const Tensor b = rng.normal_tensor(1, layer.in_dim());
        const double out = oracle::max_row_norm_diff(apply_layer(layer, true, a, nullptr),
                                                     apply_layer(layer, true, b, nullptr));
        CHECK(out <= (1 + 1e-3) * oracle::max_row_norm_diff(a, b));
      }
}

TEST_CASE("whole-graph perturbation ratio of a normalized encoder stays below one") {
  LipschitzEncoder enc = LipschitzEncoder::init({4, {8, 4}, {4}}, true, 30);
  randomize(enc, 31);
  Rng rng(32);
  std::vector<Edge> edges;
  for (int e = 0; e < 90; ++e) edges.emplace_back(rng.uniform_index(50), rng.uniform_index(50));
  const Graph g = Graph::from_edges(50, edges);
  CHECK(perturbation_audit(enc, g, rng.normal_tensor(50, 4), 50, 0.1, 4).max_ratio <= 1.001);
}

TEST_CASE("parameter round trip and shape checks") {
  LipschitzEncoder enc = LipschitzEncoder::init({3, {4}, {2}}, true, 1);
  ParamSet p = enc.params();
  CHECK(p.contains("enc.sage.0.weight"));
  CHECK(p.contains("enc.branch1.0.bias"));
  ParamSet bad;
  bad.add("enc.sage.0.weight", Tensor(2, 2));
  CHECK_THROWS_AS(enc.set_params(bad), ShapeError);
  CHECK_THROWS_AS(sage_forward(enc, Graph::from_edges(2, {}), Tensor(2, 5)), ShapeError);
  CHECK_THROWS_AS(LipschitzEncoder::init({3, {}, {}}, true, 0), ConfigError);
}
