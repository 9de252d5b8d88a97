#include <doctest.h>

#include <algorithm>
#include <set>

#include "graphdkl/errors.hpp"
#include "graphdkl/graph.hpp"
#include "graphdkl/log.hpp"
#include "graphdkl/ops.hpp"
#include "graphdkl/rng.hpp"
#include "graphdkl/synthgen.hpp"
#include "tmpdir.hpp"

using namespace graphdkl;

TEST_CASE("isolated node keeps its row") {
  const Graph g = Graph::from_edges(3, {{0, 1}});
  const Tensor h = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const Tensor out = mean_aggregate(h, g);
  CHECK(out(2, 0) == 5.0);
  CHECK(out(2, 1) == 6.0);
}

TEST_CASE("single edge averages both endpoints") {
  const Graph g = Graph::from_edges(2, {{0, 1}});
  const Tensor out = mean_aggregate(Tensor::from_rows({{1, 0}, {0, 1}}), g);
  CHECK(out == Tensor::from_rows({{0.5, 0.5}, {0.5, 0.5}}));
}

TEST_CASE("triangle of basis vectors gives thirds") {
  const Graph g = Graph::from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
  const Tensor out = mean_aggregate(Tensor::identity(3), g);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("mean_aggregate rejects a row count mismatch") {
  const Graph g = Graph::from_edges(3, {});
  CHECK_THROWS_AS(mean_aggregate(Tensor(4, 2), g), ShapeError);
}

TEST_CASE("aggregation is row-stochastic and stays in the neighborhood hull") {
  Rng rng(3);
  std::vector<Edge> edges;
  for (int e = 0; e < 60; ++e) edges.emplace_back(rng.uniform_index(30), rng.uniform_index(30));
  const Graph g = Graph::from_edges(30, edges);
  const Tensor c(30, 4, 2.75);
  const Tensor agg_c = mean_aggregate(c, g);
  for (std::size_t i = 0; i < agg_c.size(); ++i) CHECK(agg_c[i] == doctest::Approx(2.75).epsilon(1e-15));

  const Tensor h = rng.normal_tensor(30, 4);
  const Tensor out = mean_aggregate(h, g);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t col = 0; col < 4; ++col) {
      double lo = h(i, col), hi = h(i, col);
      const auto [b, e] = g.neighbors(i);
      for (const std::size_t* p = b; p != e; ++p) {
        lo = std::min(lo, h(*p, col));
        hi = std::max(hi, h(*p, col));
      }
      CHECK(out(i, col) >= lo - 1e-15);
      CHECK(out(i, col) <= hi + 1e-15);
    }
  }
}

TEST_CASE("differentiable aggregation matches the plain one") {
  Rng rng(5);
  const Graph g = Graph::from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  const Tensor h = rng.normal_tensor(4, 3);
  Tape tape;
  CHECK(mean_aggregate(tape.constant(h), g).value() == mean_aggregate(h, g));
}

TEST_CASE("graph canonicalization") {
  std::vector<std::string> warnings;
  const Graph g = Graph::from_edges(4, {{0, 1}, {1, 0}, {2, 2}, {3, 1}, {1, 3}});
  CHECK(g.num_edges() == 2);
  CHECK(g.dropped_self_loops() == 1);
  CHECK(g.degree(1) == 2);
  CHECK(g.degree(2) == 0);
  CHECK(g.edge_list() == std::vector<Edge>{{0, 1}, {1, 3}});
  CHECK_THROWS_AS(Graph::from_edges(2, {{0, 2}}), ParseError);
}

TEST_CASE("degrees") {
  CHECK(degrees(Graph::from_edges(3, {})) == std::vector<double>{0, 0, 0});
  CHECK(degrees(Graph::from_edges(3, {{0, 1}, {1, 2}})) == std::vector<double>{1, 2, 1});

  SynthConfig cfg;
  cfg.num_nodes = 200;
  cfg.seed = 4;
  const CausalDataset ds = generate(cfg);
  std::vector<double> recount(200, 0.0);
  for (const auto& [i, j] : ds.graph.edge_list()) {
    recount[i] += 1;
    recount[j] += 1;
  }
  CHECK(degrees(ds.graph) == recount);
}

TEST_CASE("edge list files") {
  TempDir dir("graph");

  SUBCASE("header only gives an edgeless graph") {
    spit(dir / "g.txt", "N 5\n");
    const Graph g = load_edge_list(dir / "g.txt");
    CHECK(g.num_nodes() == 5);
    CHECK(g.num_edges() == 0);
  }
  SUBCASE("reverse duplicates merge") {
    spit(dir / "g.txt", "N 2\n0 1\n1 0\n");
    const Graph g = load_edge_list(dir / "g.txt");
    CHECK(g.num_edges() == 1);
    CHECK(g.degree(0) == 1);
    CHECK(g.degree(1) == 1);
  }
  SUBCASE("comments and blank lines are skipped") {
    spit(dir / "g.txt", "# toy\nN 3\n\n0 2\n# end\n");
    CHECK(load_edge_list(dir / "g.txt").num_edges() == 1);
  }
  SUBCASE("self-loops are dropped with a warning") {
    std::vector<std::string> seen;
    const WarningSink prev = set_warning_sink([&](const std::string& m) { seen.push_back(m); });
    spit(dir / "g.txt", "N 3\n1 1\n0 1\n");
    const Graph g = load_edge_list(dir / "g.txt");
    set_warning_sink(prev);
    CHECK(g.num_edges() == 1);
    CHECK(seen.size() == 1);
  }
  SUBCASE("malformed lines report the line number") {
    spit(dir / "g.txt", "N 3\n0 1\n0 x\n");
    try {
      load_edge_list(dir / "g.txt");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    spit(dir / "g.txt", "N 3\n0 1 2\n");
    CHECK_THROWS_AS(load_edge_list(dir / "g.txt"), ParseError);
    spit(dir / "g.txt", "N 3\n0 3\n");
    CHECK_THROWS_AS(load_edge_list(dir / "g.txt"), ParseError);
    spit(dir / "g.txt", "0 1\n");
    CHECK_THROWS_AS(load_edge_list(dir / "g.txt"), ParseError);
  }
  SUBCASE("random 100-edge file round-trips to the same canonical set") {
    Rng rng(9);
    std::string text = "N 40\n";
    std::set<Edge> canon;
    int written = 0;
    while (written < 100) {
      const std::size_t i = rng.uniform_index(40), j = rng.uniform_index(40);
      if (i == j) continue;
      text += std::to_string(i) + " " + std::to_string(j) + "\n";
      canon.insert({std::min(i, j), std::max(i, j)});
      ++written;
    }
    spit(dir / "a.txt", text);
    const Graph g = load_edge_list(dir / "a.txt");
    save_edge_list(g, dir / "b.txt");
    const Graph back = load_edge_list(dir / "b.txt");
    CHECK(back == g);
    const std::vector<Edge> el = back.edge_list();
    CHECK(std::set<Edge>(el.begin(), el.end()) == canon);
  }
}

TEST_CASE("feature csv round trip") {
  TempDir dir("feat");
  Rng rng(2);
  const Tensor x = rng.normal_tensor(7, 3);
  save_feature_csv(x, dir / "x.csv");
  CHECK(load_feature_csv(dir / "x.csv") == x);
}
