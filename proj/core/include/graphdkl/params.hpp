#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "graphdkl/tape.hpp"
#include "graphdkl/tensor.hpp"

namespace graphdkl {

/// Named trainable tensors, iterated in insertion order.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  [[nodiscard]] bool contains(std::string_view name) const;
  [[nodiscard]] std::size_t index_of(std::string_view name) const;

  Tensor& operator[](std::string_view name) { return values_[index_of(name)]; }
  const Tensor& operator[](std::string_view name) const { return values_[index_of(name)]; }
  Tensor& at(std::size_t i) { return values_[i]; }
  [[nodiscard]] const Tensor& at(std::size_t i) const { return values_[i]; }

  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
  [[nodiscard]] const std::string& name(std::size_t i) const { return names_[i]; }
  [[nodiscard]] std::size_t total_size() const;

  /// Same names and shapes, all entries zero.
  [[nodiscard]] ParamSet zeros_like() const;
  /// Subset restricted to names accepted by `keep`, preserving order.
  [[nodiscard]] ParamSet filter(const std::function<bool(std::string_view)>& keep) const;
  /// Overwrites every entry of `other` present here; shapes must match.
  void assign_from(const ParamSet& other);

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Tape variables for every entry of a ParamSet, looked up by name.
class BoundParams {
 public:
  /// Binds as differentiable leaves when `trainable`, otherwise as constants.
  BoundParams(Tape& tape, const ParamSet& params, bool trainable = true);

  [[nodiscard]] Var operator[](std::string_view name) const;
  [[nodiscard]] Var at(std::size_t i) const { return vars_[i]; }
  [[nodiscard]] bool contains(std::string_view name) const { return params_->contains(name); }
  [[nodiscard]] std::size_t size() const { return vars_.size(); }
  [[nodiscard]] Tape& tape() const { return *tape_; }

  /// Gradients of every bound entry after `tape().backward(...)`.
  [[nodiscard]] ParamSet gradients() const;

 private:
  Tape* tape_;
  const ParamSet* params_;
  std::vector<Var> vars_;
};

using ScalarFunction = std::function<Var(const BoundParams&)>;

struct ValueAndGrad {
  double value = 0.0;
  ParamSet grads;
};

/// Evaluates f on a fresh tape and returns its value and gradient for every
/// parameter. Throws NumericError naming the parameter when any entry is
/// non-finite.
ValueAndGrad value_and_grad(const ScalarFunction& f, const ParamSet& params);

/// Plain evaluation without gradients.
double evaluate(const ScalarFunction& f, const ParamSet& params);

}  // namespace graphdkl
