#include "graphdkl/graph.hpp"

#include <algorithm>
#include <sstream>

#include "graphdkl/errors.hpp"
#include "graphdkl/log.hpp"
#include "text_io.hpp"

namespace graphdkl {

Graph Graph::from_edges(std::size_t num_nodes, const std::vector<Edge>& edges) {
  Graph g;
  g.num_nodes_ = num_nodes;
  std::vector<std::vector<std::size_t>> adj(num_nodes);
  for (const auto& [i, j] : edges) {
    if (i >= num_nodes || j >= num_nodes) {
      throw ParseError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                       ") out of range for " + std::to_string(num_nodes) + " nodes");
    }
    if (i == j) {
      ++g.dropped_self_loops_;
      continue;
    }
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  g.offsets_.assign(num_nodes + 1, 0);
  g.neighbors_.clear();
  for (std::size_t i = 0; i < num_nodes; ++i) {
    auto& list = adj[i];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    g.neighbors_.insert(g.neighbors_.end(), list.begin(), list.end());
    g.offsets_[i + 1] = g.neighbors_.size();
  }
  return g;
}

std::vector<Edge> Graph::edge_list() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (std::size_t i = 0; i < num_nodes_; ++i) {
    const auto [b, e] = neighbors(i);
    for (const std::size_t* p = b; p != e; ++p)
      if (i < *p) out.emplace_back(i, *p);
  }
  return out;
}

std::vector<double> degrees(const Graph& g) {
  std::vector<double> out(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) out[i] = static_cast<double>(g.degree(i));
  return out;
}

Tensor mean_aggregate(const Tensor& h, const Graph& g) {
  if (h.rows() != g.num_nodes()) {
    throw ShapeError("mean_aggregate: " + std::to_string(h.rows()) + " rows for graph of " +
                     std::to_string(g.num_nodes()) + " nodes");
  }
  const std::size_t width = h.cols();
  Tensor out(h.rows(), width);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    double* dst = &out.data()[i * width];
    const double* self = &h.data()[i * width];
    std::copy(self, self + width, dst);
    const auto [b, e] = g.neighbors(i);
    for (const std::size_t* p = b; p != e; ++p) {
      const double* src = &h.data()[*p * width];
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
    const double inv = 1.0 / static_cast<double>(g.degree(i) + 1);
    for (std::size_t c = 0; c < width; ++c) dst[c] *= inv;
  }
  return out;
}

Var mean_aggregate(Var h, const Graph& g) {
  Tensor out = mean_aggregate(h.value(), g);
  // The operator is linear with matrix P = (D + I)^{-1}(A + I); its adjoint
  // scatters each output adjoint row, divided by the row's set size, onto
  // the row itself and its neighbors.
  return h.tape().record("mean_aggregate", std::move(out), {h},
                         [h, &g](Tape& t, const Tensor&, const Tensor& adj) {
                           Tensor* gh = t.adjoint(h);
                           if (!gh) return;
                           const std::size_t width = adj.cols();
                           for (std::size_t i = 0; i < g.num_nodes(); ++i) {
                             const double inv = 1.0 / static_cast<double>(g.degree(i) + 1);
                             const double* src = &adj.data()[i * width];
                             double* self = &gh->data()[i * width];
                             for (std::size_t c = 0; c < width; ++c) self[c] += inv * src[c];
                             const auto [b, e] = g.neighbors(i);
                             for (const std::size_t* p = b; p != e; ++p) {
                               double* dst = &gh->data()[*p * width];
                               for (std::size_t c = 0; c < width; ++c) dst[c] += inv * src[c];
                             }
                           }
                         });
}

Graph load_edge_list(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t n = 0;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);

    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (pos < body.size()) {
      const auto start = body.find_first_not_of(" \t", pos);
      if (start == std::string_view::npos) break;
      const auto end = body.find_first_of(" \t", start);
      fields.push_back(body.substr(start, end == std::string_view::npos ? end : end - start));
      pos = end == std::string_view::npos ? body.size() : end;
    }

    if (!have_header) {
      if (fields.size() != 2 || fields[0] != "N") {
        throw ParseError(where + ": expected header 'N <num_nodes>'");
      }
      n = detail::parse_index(fields[1], where);
      have_header = true;
      continue;
    }
    if (fields.size() != 2) throw ParseError(where + ": expected 'i j'");
    const std::size_t i = detail::parse_index(fields[0], where);
    const std::size_t j = detail::parse_index(fields[1], where);
    if (i >= n || j >= n) {
      throw ParseError(where + ": node index out of range [0, " + std::to_string(n) + ")");
    }
    edges.emplace_back(i, j);
  }
  if (!have_header) throw ParseError(path.filename().string() + ": missing 'N <num_nodes>' header");

  Graph g = Graph::from_edges(n, edges);
  if (g.dropped_self_loops() > 0) {
    warn(path.filename().string() + ": dropped " + std::to_string(g.dropped_self_loops()) +
         " self-loop(s)");
  }
  return g;
}

void save_edge_list(const Graph& g, const std::filesystem::path& path) {
  std::string out = "N " + std::to_string(g.num_nodes()) + "\n";
  for (const auto& [i, j] : g.edge_list()) {
    out += std::to_string(i);
    out += ' ';
    out += std::to_string(j);
    out += '\n';
  }
  detail::write_file(path, out);
}

Tensor load_feature_csv(const std::filesystem::path& path) {
  return detail::read_numeric_csv(path, false);
}

void save_feature_csv(const Tensor& x, const std::filesystem::path& path) {
  detail::write_numeric_csv(path, x);
}

}  // namespace graphdkl
