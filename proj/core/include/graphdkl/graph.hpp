#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "graphdkl/tape.hpp"
#include "graphdkl/tensor.hpp"

namespace graphdkl {

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected simple graph in compressed sparse row form. Neighbor lists are
/// sorted, free of duplicates and self-loops, and symmetric.
class Graph {
 public:
  Graph() = default;

  /// Builds the canonical graph from an edge list: reverse edges are added,
  /// duplicates merged and self-loops dropped (counted in
  /// `dropped_self_loops`). Throws ParseError on out-of-range endpoints.
  static Graph from_edges(std::size_t num_nodes, const std::vector<Edge>& edges);

  [[nodiscard]] std::size_t num_nodes() const { return num_nodes_; }
  [[nodiscard]] std::size_t num_edges() const { return neighbors_.size() / 2; }
  [[nodiscard]] bool undirected() const { return true; }
  [[nodiscard]] const std::vector<std::size_t>& offsets() const { return offsets_; }
  [[nodiscard]] const std::vector<std::size_t>& neighbor_indices() const { return neighbors_; }
  [[nodiscard]] std::size_t dropped_self_loops() const { return dropped_self_loops_; }

  [[nodiscard]] std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
  [[nodiscard]] std::pair<const std::size_t*, const std::size_t*> neighbors(std::size_t i) const {
    return {neighbors_.data() + offsets_[i], neighbors_.data() + offsets_[i + 1]};
  }

  /// Each undirected edge once, as (i, j) with i < j, in sorted order.
  [[nodiscard]] std::vector<Edge> edge_list() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> neighbors_;
  std::size_t dropped_self_loops_ = 0;
};

std::vector<double> degrees(const Graph& g);

/// Row i of the result is the arithmetic mean of h_i and every neighbor row.
Tensor mean_aggregate(const Tensor& h, const Graph& g);
/// Differentiable version recorded on `h`'s tape.
Var mean_aggregate(Var h, const Graph& g);

/// Edge-list text format: a header line "N <num_nodes>" followed by one
/// "i j" pair per line, 0-based. Blank lines and lines starting with '#' are
/// ignored.
Graph load_edge_list(const std::filesystem::path& path);
void save_edge_list(const Graph& g, const std::filesystem::path& path);

/// One node per row, comma separated, 17 significant digits.
Tensor load_feature_csv(const std::filesystem::path& path);
void save_feature_csv(const Tensor& x, const std::filesystem::path& path);

}  // namespace graphdkl
