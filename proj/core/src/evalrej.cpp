#include "graphdkl/evalrej.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "graphdkl/errors.hpp"
#include "graphdkl/rng.hpp"
#include "text_io.hpp"

namespace graphdkl {

namespace {

void check_proportions(std::span<const double> proportions) {
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    const double p = proportions[i];
    if (!(p >= 0.0 && p < 1.0))
      throw MetricError("rejection proportion " + std::to_string(p) + " outside [0, 1)");
    if (i > 0 && !(p > proportions[i - 1]))
      throw MetricError("rejection proportions must be strictly increasing");
  }
}

// PEHE over the entries of `order` from position `from` onwards, summed in
// input order so that p = 0 reproduces pehe() bit for bit.
double tail_pehe(std::span<const double> pred, std::span<const double> truth,
                 const std::vector<std::size_t>& order, std::size_t from) {
  if (from >= order.size()) throw MetricError("no predictions retained");
  std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(from), order.end());
  std::sort(kept.begin(), kept.end());
  double acc = 0.0;
  for (const std::size_t i : kept) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(order.size() - from));
}

RejectionCurve curve_from_order(std::span<const double> pred, std::span<const double> truth,
                                std::span<const double> proportions,
                                const std::vector<std::size_t>& order) {
  RejectionCurve curve;
  const std::size_t q = order.size();
  for (const double p : proportions) {
    const std::size_t drop = rejected_count(p, q);
    curve.proportions.push_back(p);
    curve.retained_pehe.push_back(tail_pehe(pred, truth, order, drop));
    curve.n_retained.push_back(q - drop);
  }
  return curve;
}

}  // namespace

double pehe(std::span<const double> ite_pred, std::span<const double> ite_true) {
  if (ite_pred.empty()) throw MetricError("pehe: empty input");
  if (ite_pred.size() != ite_true.size()) throw MetricError("pehe: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < ite_pred.size(); ++i) {
    const double d = ite_pred[i] - ite_true[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(ite_pred.size()));
}

std::size_t rejected_count(double p, std::size_t q) {
  // The epsilon keeps exact products such as 0.3 * 10 from rounding down.
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(q) + 1e-9));
}

RejectionCurve rejection_curve(std::span<const double> ite_pred,
                               std::span<const double> uncertainty,
                               std::span<const double> ite_true,
                               std::span<const double> proportions,
                               std::span<const std::size_t> node) {
  const std::size_t q = ite_pred.size();
  if (q == 0) throw MetricError("rejection_curve: empty input");
  if (uncertainty.size() != q || ite_true.size() != q || (!node.empty() && node.size() != q))
    throw MetricError("rejection_curve: length mismatch");
  check_proportions(proportions);

  auto key = [&](std::size_t i) { return node.empty() ? i : node[i]; };
  std::vector<std::size_t> order(q);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (uncertainty[a] != uncertainty[b]) return uncertainty[a] > uncertainty[b];
    return key(a) > key(b);
  });
  return curve_from_order(ite_pred, ite_true, proportions, order);
}

RejectionCurve random_rejection_curve(std::span<const double> ite_pred,
                                      std::span<const double> ite_true,
                                      std::span<const double> proportions, std::uint64_t seed) {
  const std::size_t q = ite_pred.size();
  if (q == 0) throw MetricError("random_rejection_curve: empty input");
  if (ite_true.size() != q) throw MetricError("random_rejection_curve: length mismatch");
  check_proportions(proportions);
  Rng rng(seed, 0x7e1);
  return curve_from_order(ite_pred, ite_true, proportions, rng.permutation(q));
}

CurveSummary aggregate(std::span<const RejectionCurve> curves) {
  if (curves.empty()) throw MetricError("aggregate: no curves");
  CurveSummary s;
  s.proportions = curves.front().proportions;
  s.count = curves.size();
  const std::size_t k = s.proportions.size();
  for (const RejectionCurve& c : curves) {
    if (c.proportions != s.proportions || c.retained_pehe.size() != k || c.n_retained.size() != k)
      throw MetricError("aggregate: curves disagree on proportions");
  }
  const double n = static_cast<double>(curves.size());
  s.mean.assign(k, 0.0);
  s.std.assign(k, 0.0);
  s.mean_n_retained.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (const RejectionCurve& c : curves) {
      s.mean[i] += c.retained_pehe[i];
      s.mean_n_retained[i] += static_cast<double>(c.n_retained[i]);
    }
    s.mean[i] /= n;
    s.mean_n_retained[i] /= n;
    for (const RejectionCurve& c : curves) {
      const double d = c.retained_pehe[i] - s.mean[i];
      s.std[i] += d * d;
    }
    s.std[i] = curves.size() > 1 ? std::sqrt(s.std[i] / (n - 1.0)) : 0.0;
  }
  return s;
}

void write_curve_csv(const std::filesystem::path& path, const CurveSummary& summary) {
  std::string out = "proportion,retained_pehe,n_retained,std\n";
  for (std::size_t i = 0; i < summary.proportions.size(); ++i) {
    out += detail::format_double(summary.proportions[i]) + "," +
           detail::format_double(summary.mean[i]) + "," +
           detail::format_double(summary.mean_n_retained[i]) + "," +
           detail::format_double(summary.std[i]) + "\n";
  }
  detail::write_file(path, out);
}

void write_curve_csv(const std::filesystem::path& path, const RejectionCurve& curve) {
  const RejectionCurve one[] = {curve};
  write_curve_csv(path, aggregate(one));
}

}  // namespace graphdkl
