#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphdkl/params.hpp"

namespace graphdkl {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates and the step counter.
struct AdamState {
  ParamSet m;
  ParamSet v;
  std::int64_t step = 0;

  static AdamState zeros_like(const ParamSet& params);
};

/// One bias-corrected Adam update of every entry in `params`. Throws
/// ShapeError when `grads` or `state` do not mirror `params`.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  [[nodiscard]] bool passed() const;
  [[nodiscard]] double max_rel_error() const;
  [[nodiscard]] std::string summary() const;
};

/// Compares reverse-mode gradients with central differences
/// (f(p+h) - f(p-h)) / 2h on every component. A component passes when
/// |analytic - numeric| <= atol + rtol * max(|analytic|, |numeric|).
GradCheckReport finite_diff_check(const ScalarFunction& f, const ParamSet& params, double h,
                                  double rtol, double atol);

}  // namespace graphdkl
