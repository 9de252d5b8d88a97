#include "graphdkl/tape.hpp"

#include <algorithm>

#include "graphdkl/errors.hpp"

namespace graphdkl {

Var Tape::push(const char* op, Tensor value, bool requires_grad, Backward backward,
                std::vector<std::size_t> parents) {
  if (check_finite_ && !value.all_finite()) {
    collect_sources(parents);
    throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) {
    node.backward = std::move(backward);
    node.parents = std::move(parents);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::collect_sources(const std::vector<std::size_t>& parents) {
  nonfinite_sources_.clear();
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<std::size_t> stack(parents);
  while (!stack.empty()) {
    const std::size_t id = stack.back();
    stack.pop_back();
    if (seen[id]) continue;
    seen[id] = 1;
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    if (!n.backward) nonfinite_sources_.push_back(id);
    stack.insert(stack.end(), n.parents.begin(), n.parents.end());
  }
  std::sort(nonfinite_sources_.begin(), nonfinite_sources_.end());
}

Var Tape::constant(Tensor value) { return push("constant", std::move(value), false, {}); }

Var Tape::variable(Tensor value) { return push("variable", std::move(value), true, {}); }

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> parents,
                 Backward backward) {
  bool needs = false;
  std::vector<std::size_t> ids;
  ids.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.tape_ != this) throw Error(std::string("op '") + op + "' mixes tapes");
    needs = needs || nodes_[p.id_].requires_grad;
    ids.push_back(p.id_);
  }
  return push(op, std::move(value), needs, std::move(backward), std::move(ids));
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& parents,
                 Backward backward) {
  bool needs = false;
  std::vector<std::size_t> ids;
  ids.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.tape_ != this) throw Error(std::string("op '") + op + "' mixes tapes");
    needs = needs || nodes_[p.id_].requires_grad;
    ids.push_back(p.id_);
  }
  return push(op, std::move(value), needs, std::move(backward), std::move(ids));
}

Tensor* Tape::adjoint(Var v) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return nullptr;
  if (n.adjoint.empty() && !n.value.empty()) n.adjoint = Tensor(n.value.rows(), n.value.cols());
  return &n.adjoint;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  if (n.adjoint.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw Error("backward: root belongs to another tape");
  const Tensor& rv = nodes_[root.id_].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ShapeError("backward: root must be a scalar, got " + rv.shape_string());
  }
  for (Node& n : nodes_) {
    if (!n.adjoint.empty()) n.adjoint.fill(0.0);
    n.visited = false;
  }
  backward_visits_ = 0;
  if (!nodes_[root.id_].requires_grad) return;
  adjoint(root)->fill(1.0);

  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.adjoint.empty()) continue;
    if (n.visited) throw Error("backward: node visited twice");
    n.visited = true;
    ++backward_visits_;
    if (n.backward) n.backward(*this, n.value, n.adjoint);
  }
}

}  // namespace graphdkl
