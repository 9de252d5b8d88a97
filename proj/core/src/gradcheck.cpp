#include <algorithm>
#include <cmath>
#include <sstream>

#include "graphdkl/errors.hpp"
#include "graphdkl/optim.hpp"

namespace graphdkl {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << e.name << ": rel " << e.max_rel_error << " abs " << e.max_abs_error
       << (e.passed ? " ok" : " FAIL") << "\n";
  }
  return os.str();
}

GradCheckReport finite_diff_check(const ScalarFunction& f, const ParamSet& params, double h,
                                  double rtol, double atol) {
  if (!(h > 0.0)) throw Error("finite_diff_check: step must be positive");
  const ValueAndGrad analytic = value_and_grad(f, params);
  ParamSet probe = params;

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    GradCheckEntry entry{params.name(i)};
    auto values = probe.at(i).data();
    const auto grads = analytic.grads.at(i).data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double original = values[k];
      values[k] = original + h;
      const double up = evaluate(f, probe);
      values[k] = original - h;
      const double down = evaluate(f, probe);
      values[k] = original;

      const double numeric = (up - down) / (2.0 * h);
      const double abs_err = std::abs(grads[k] - numeric);
      const double scale = std::max(std::abs(grads[k]), std::abs(numeric));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      if (abs_err > atol) entry.max_rel_error = std::max(entry.max_rel_error, rel_err);
      if (abs_err > atol + rtol * scale) entry.passed = false;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace graphdkl
