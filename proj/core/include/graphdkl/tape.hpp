#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "graphdkl/tensor.hpp"

namespace graphdkl {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }
  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, which is
/// a topological order, so the backward sweep is a single reverse pass.
class Tape {
 public:
  /// Backward rule: receives the node's output value and adjoint and pushes
  /// contributions into parents with `Tape::adjoint`.
  using Backward = std::function<void(Tape&, const Tensor& value, const Tensor& adjoint)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(const char* op, Tensor value, const std::vector<Var>& parents, Backward backward);

  /// Seeds the 1x1 root with adjoint 1 and sweeps every node once in reverse.
  void backward(Var root);

  [[nodiscard]] const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  /// Adjoint of `v` after backward(); zeros if no gradient reached it.
  [[nodiscard]] Tensor grad(Var v) const;
  [[nodiscard]] bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  /// Mutable adjoint of `v` for use inside backward rules, allocated lazily.
  /// Returns nullptr when `v` does not lead to any variable.
  Tensor* adjoint(Var v);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] std::size_t backward_visits() const { return backward_visits_; }
  [[nodiscard]] const char* op(Var v) const { return nodes_[v.id_].op; }

  void set_check_finite(bool on) { check_finite_ = on; }

  /// Variable leaves feeding the op whose non-finite output raised the last
  /// NumericError, in tape order.
  [[nodiscard]] const std::vector<std::size_t>& nonfinite_sources() const { return nonfinite_sources_; }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor adjoint;
    bool requires_grad = false;
    bool visited = false;
    Backward backward;
    std::vector<std::size_t> parents;
  };

  Var push(const char* op, Tensor value, bool requires_grad, Backward backward,
           std::vector<std::size_t> parents = {});
  void collect_sources(const std::vector<std::size_t>& parents);

  std::deque<Node> nodes_;
  std::size_t backward_visits_ = 0;
  bool check_finite_ = true;
  std::vector<std::size_t> nonfinite_sources_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

}  // namespace graphdkl
