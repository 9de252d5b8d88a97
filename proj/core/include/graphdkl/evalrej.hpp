#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace graphdkl {

/// Rejection proportions evaluated by default.
inline const std::vector<double>& default_proportions() {
  static const std::vector<double> kGrid{0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.50, 0.70, 0.90};
  return kGrid;
}

/// sqrt(mean((pred - truth)^2)). Throws MetricError on empty or unequal input.
double pehe(std::span<const double> ite_pred, std::span<const double> ite_true);

struct RejectionCurve {
  std::vector<double> proportions;
  std::vector<double> retained_pehe;
  std::vector<std::size_t> n_retained;
};

/// Number of predictions dropped at proportion p of q: floor(p q).
std::size_t rejected_count(double p, std::size_t q);

/// For each p, drops the floor(p Q) most uncertain predictions (ties: higher
/// node index dropped first) and reports PEHE on the rest. `node` carries the
/// original index used for tie-breaking; empty means 0..Q-1.
RejectionCurve rejection_curve(std::span<const double> ite_pred,
                               std::span<const double> uncertainty,
                               std::span<const double> ite_true,
                               std::span<const double> proportions,
                               std::span<const std::size_t> node = {});

/// Same proportions, but the rejected subset is drawn uniformly at random.
RejectionCurve random_rejection_curve(std::span<const double> ite_pred,
                                      std::span<const double> ite_true,
                                      std::span<const double> proportions, std::uint64_t seed);

struct CurveSummary {
  std::vector<double> proportions;
  std::vector<double> mean;
  std::vector<double> std;  // sample standard deviation over seeds, 0 for one curve
  std::vector<double> mean_n_retained;
  std::size_t count = 0;
};

/// Point-wise mean and standard deviation. Throws MetricError when the
/// curves disagree on proportions or none are given.
CurveSummary aggregate(std::span<const RejectionCurve> curves);

void write_curve_csv(const std::filesystem::path& path, const CurveSummary& summary);
void write_curve_csv(const std::filesystem::path& path, const RejectionCurve& curve);

}  // namespace graphdkl
