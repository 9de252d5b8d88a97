#include "graphdkl/params.hpp"

#include <algorithm>
#include <cmath>

#include "graphdkl/errors.hpp"

namespace graphdkl {

void ParamSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw Error("ParamSet: duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

bool ParamSet::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParamSet::index_of(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error("ParamSet: unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < size(); ++i) {
    out.add(names_[i], Tensor(values_[i].rows(), values_[i].cols()));
  }
  return out;
}

ParamSet ParamSet::filter(const std::function<bool(std::string_view)>& keep) const {
  ParamSet out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (keep(names_[i])) out.add(names_[i], values_[i]);
  }
  return out;
}

void ParamSet::assign_from(const ParamSet& other) {
  for (std::size_t i = 0; i < other.size(); ++i) {
    Tensor& dst = (*this)[other.name(i)];
    require_same_shape(dst, other.at(i), "ParamSet::assign_from");
    dst = other.at(i);
  }
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, bool trainable)
    : tape_(&tape), params_(&params) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars_.push_back(trainable ? tape.variable(params.at(i)) : tape.constant(params.at(i)));
  }
}

Var BoundParams::operator[](std::string_view name) const { return vars_[params_->index_of(name)]; }

ParamSet BoundParams::gradients() const {
  ParamSet out;
  for (std::size_t i = 0; i < vars_.size(); ++i) out.add(params_->name(i), tape_->grad(vars_[i]));
  return out;
}

ValueAndGrad value_and_grad(const ScalarFunction& f, const ParamSet& params) {
  Tape tape;
  BoundParams bound(tape, params, true);
  Var root;
  try {
    root = f(bound);
  } catch (const NumericError& e) {
    std::string names;
    for (std::size_t i = 0; i < bound.size(); ++i) {
      const auto& src = tape.nonfinite_sources();
      if (std::find(src.begin(), src.end(), bound.at(i).id()) == src.end()) continue;
      names += (names.empty() ? "'" : ", '") + params.name(i) + "'";
    }
    if (names.empty()) throw;
    throw NumericError(std::string(e.what()) + " from parameter " + names);
  }
  const double value = root.value().item();
  if (!std::isfinite(value)) throw NumericError("value_and_grad: non-finite function value");
  tape.backward(root);
  ValueAndGrad out{value, bound.gradients()};
  for (std::size_t i = 0; i < out.grads.size(); ++i) {
    if (!out.grads.at(i).all_finite()) {
      throw NumericError("value_and_grad: non-finite gradient for parameter '" +
                         out.grads.name(i) + "'");
    }
  }
  return out;
}

double evaluate(const ScalarFunction& f, const ParamSet& params) {
  Tape tape;
  BoundParams bound(tape, params, false);
  return f(bound).value().item();
}

}  // namespace graphdkl
