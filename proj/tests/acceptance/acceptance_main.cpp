// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "grad_suite.hpp"
#include "graphdkl/encoder.hpp"
#include "graphdkl/evalrej.hpp"
#include "graphdkl/experiment.hpp"
#include "graphdkl/gp.hpp"
#include "graphdkl/rng.hpp"
#include "graphdkl/svgp.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace graphdkl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(const std::string& name, const Verdict& v, double seconds) {
  std::printf("%s %s (%.1fs): %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), seconds, v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++g_failures;
}

void check(const std::string& name, double budget_seconds, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_seconds > 0 && secs > budget_seconds) {
    v.pass = false;
    v.detail += "; over the " + std::to_string(static_cast<int>(budget_seconds)) + "s budget";
  }
  report(name, v, secs);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

RbfKernel kern(double var, double ls) { return {0.5 * std::log(var), std::log(ls)}; }

std::vector<double> normals(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

ExactGp exact_for(const SvgpHead& h, const Tensor& z, const std::vector<double>& y) {
  ExactGp gp;
  gp.kernel = h.kernel;
  gp.log_noise = h.log_noise;
  gp.set_data(z, y);
  return gp;
}

Verdict svgp_exact_equivalence() {
  Rng rng(101);
  double worst_mean = 0.0, worst_var = 0.0, worst_elbo = 0.0;
  int sets = 0;
  for (const std::size_t n : {3u, 8u, 15u, 22u, 30u}) {
    for (int rep = 0; rep < 4; ++rep, ++sets) {
      const std::size_t dim = 1 + rng.uniform_index(4);
      const Tensor z = rng.normal_tensor(n, dim);
      const std::vector<double> y = normals(rng, n);
      const double var = 0.5 + rng.uniform();
      const double ls = 0.6 + rng.uniform();
      const double noise = 0.05 + 0.3 * rng.uniform();
      SvgpHead h = SvgpHead::at_prior(z, kern(var, ls), noise);
      set_optimal_variational(h, z, y);
      const ExactGp gp = exact_for(h, z, y);
      worst_elbo = std::max(worst_elbo, std::abs(elbo(h, z, y) - exact_log_marginal(gp)));
      const Tensor q = rng.normal_tensor(10, dim);
      const GpPrediction a = svgp_predict(h, q);
      const GpPrediction b = exact_posterior(gp, q);
      for (std::size_t i = 0; i < 10; ++i) {
        worst_mean = std::max(worst_mean, std::abs(a.mean[i] - b.mean[i]));
        worst_var = std::max(worst_var, std::abs(a.var[i] - b.var[i]));
      }
    }
  }
  return {worst_mean < 1e-5 && worst_var < 1e-5 && worst_elbo < 1e-6,
          std::to_string(sets) + " sets, max |dmu| " + fmt("%.2e", worst_mean) + ", max |dvar| " +
              fmt("%.2e", worst_var) + ", max |dELBO| " + fmt("%.2e", worst_elbo)};
}

Verdict elbo_bound() {
  Rng rng(202);
  double min_slack = 1e300;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(29);
    const std::size_t dim = 1 + rng.uniform_index(3);
    const Tensor z = rng.normal_tensor(n, dim);
    const std::vector<double> y = normals(rng, n);
    const std::size_t m = 1 + rng.uniform_index(n);
    const Tensor inducing = rng.normal_tensor(m, dim);
    const double var = 0.3 + 2 * rng.uniform();
    const double ls = 0.4 + rng.uniform();
    const double noise = 0.05 + rng.uniform();
    SvgpHead h = SvgpHead::at_prior(inducing, kern(var, ls), noise);
    h.mu_u = rng.normal_tensor(m, 1);
    Tensor l = rng.normal_tensor(m, m, 0.3);
    for (std::size_t i = 0; i < m; ++i) {
      l(i, i) = 0.05 + std::abs(l(i, i));
      for (std::size_t j = i + 1; j < m; ++j) l(i, j) = 0.0;
    }
    h.set_chol_u(l);
    min_slack = std::min(min_slack, exact_log_marginal(exact_for(h, z, y)) - elbo(h, z, y));
  }
  return {min_slack >= -1e-8, "50 states, min (log marginal - ELBO) " + fmt("%.3e", min_slack)};
}

Verdict gradient_suite() {
  std::vector<gradsuite::CaseResult> all = gradsuite::primitive_suite(5);
  all.push_back(gradsuite::kernel_case(7));
  all.push_back(gradsuite::elbo_case(8));
  all.push_back(gradsuite::training_loss_case(9));
  bool ok = true;
  double worst_rel = 0.0, worst_abs = 0.0;
  std::string failed;
  for (const auto& r : all) {
    ok = ok && r.passed;
    worst_rel = std::max(worst_rel, r.max_rel_error);
    worst_abs = std::max(worst_abs, r.max_abs_error);
    if (!r.passed) failed += " " + r.name;
  }
  return {ok, std::to_string(all.size()) + " cases (rtol 1e-4, atol 1e-7), worst abs error " +
                  fmt("%.2e", worst_abs) + ", worst rel error above atol " + fmt("%.2e", worst_rel) +
                  (failed.empty() ? "" : ", failing:" + failed)};
}

Verdict spectral_norm() {
  Rng rng(303);
  double worst = 0.0, worst_gap = 0.0;
  int misses = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.uniform_index(64), c = 1 + rng.uniform_index(64);
    const Tensor w = rng.normal_tensor(r, c);
    const std::vector<double> sv = oracle::singular_values(w);
    const double tau = spectral_norm_estimate(w, 30, static_cast<std::uint64_t>(trial));
    const double err = std::abs(tau - sv[0]) / sv[0];
    if (err >= 0.01) ++misses;
    if (err > worst) {
      worst = err;
      worst_gap = sv.size() > 1 ? sv[1] / sv[0] : 0.0;
    }
  }
  return {worst < 0.01, "100 Gaussian matrices up to 64x64, 30 iterations: " + std::to_string(misses) +
                            " outside 1%, worst relative error " + fmt("%.2e", worst) +
                            " with sigma2/sigma1 = " + fmt("%.3f", worst_gap)};
}

Verdict metric_exactness() {
  const double a = pehe(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 1});
  const std::vector<double> pred{3, 2, 1, 0}, truth(4, 0.0);
  const std::vector<double> unc{9, 4, 1, 0}, flat(4, 1.0);
  const std::vector<double> half{0.0, 0.5}, quarter{0.25};
  const RejectionCurve oracle_curve = rejection_curve(pred, unc, truth, half);
  const RejectionCurve tie = rejection_curve(pred, flat, truth, quarter);
  const double e1 = std::abs(a - std::sqrt(5.0 / 3.0));
  const double e2 = std::abs(oracle_curve.retained_pehe[0] - pehe(pred, truth));
  const double e3 = std::abs(oracle_curve.retained_pehe[1] - std::sqrt(0.5));
  const double e4 = std::abs(tie.retained_pehe[0] - std::sqrt(14.0 / 3.0));
  const double worst = std::max({e1, e2, e3, e4});
  return {worst <= 1e-12, "pehe 1.29099..., p=0 identity, oracle 0.70711..., tie-break; worst error " +
                              fmt("%.1e", worst)};
}

struct SweepData {
  SweepBlock k2, k05;
  bool ok = false;
  std::string error;
};

SweepData run_sweeps(const fs::path& out) {
  SweepData d;
  try {
    ExperimentConfig cfg;  // desk-scale defaults, 10 seeds
    cfg.k_list = {0.5, 2.0};
    const unsigned threads = worker_threads();
    std::fprintf(stderr, "sweep: k in {0.5, 2}, %zu seeds, %u worker(s)\n", cfg.n_seeds, threads);
    const SweepOutcome r = run_sweep(cfg, out, threads, [](const SeedRun& run) {
      std::fprintf(stderr, "  k=%g seed=%llu sqrt PEHE %.4f\n", run.k,
                   static_cast<unsigned long long>(run.seed), run.full_pehe);
    });
    d.k05 = r.blocks.at(0);
    d.k2 = r.blocks.at(1);
    d.ok = true;
  } catch (const std::exception& e) {
    d.error = e.what();
  }
  return d;
}

}  // namespace

int main() {
  std::unique_ptr<TempDir> scratch;
  fs::path out;
  if (const char* env = std::getenv("GRAPHDKL_ACCEPTANCE_OUT"); env != nullptr && *env != '\0') {
    out = env;
  } else {
    scratch = std::make_unique<TempDir>("acceptance");
    out = scratch->path();
  }

  check("svgp-exact-equivalence", 5, svgp_exact_equivalence);
  check("elbo-bound", 10, elbo_bound);
  check("gradient-suite", 60, gradient_suite);
  check("spectral-norm", 5, spectral_norm);
  check("metric-exactness", 0, metric_exactness);

  const auto t0 = std::chrono::steady_clock::now();
  const SweepData sweep = run_sweeps(out / "sweep");
  const double sweep_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "sweep finished in %.0fs\n", sweep_secs);
  auto need_sweep = [&](const std::function<Verdict()>& body) {
    return [&, body]() -> Verdict {
      if (!sweep.ok) return {false, "sweep failed: " + sweep.error};
      return body();
    };
  };

  check("lipschitz-audit", 0, need_sweep([&] {
          const double r = std::max(sweep.k2.max_audit_ratio, sweep.k05.max_audit_ratio);
          return Verdict{r <= 1.001, "max pair ratio over all sweep models (1000 pairs each) " + fmt("%.4f", r)};
        }));

  check("rejection-trend", 0, need_sweep([&] {
          const CurveSummary& c = sweep.k2.curve;
          const auto at = [&](double p) {
            for (std::size_t i = 0; i < c.proportions.size(); ++i)
              if (std::abs(c.proportions[i] - p) < 1e-12) return i;
            throw std::runtime_error("proportion missing from the grid");
          };
          const std::size_t i0 = at(0.0), i30 = at(0.30);
          const double ratio = c.mean[i30] / c.mean[i0];
          const double n = static_cast<double>(c.count);
          bool monotone = true;
          for (std::size_t i = i0; i < i30; ++i)
            monotone = monotone && c.mean[i + 1] <= c.mean[i] + c.std[i + 1] / std::sqrt(n);
          std::string detail = "k=2, " + std::to_string(c.count) + " seeds: mean " + fmt("%.4f", c.mean[i0]) +
                               " at 0%, " + fmt("%.4f", c.mean[i30]) + " at 30%, ratio " + fmt("%.3f", ratio) +
                               " (need <= 0.85); 0-30% segment " +
                               (monotone ? "nonincreasing within 1 SE" : "rises by more than 1 SE") +
                               "; total runtime " + fmt("%.0f", sweep_secs) + "s";
          return Verdict{ratio <= 0.85 && monotone && sweep_secs < 900, detail};
        }));

  check("null-policy-control", 0, need_sweep([&] {
          const CurveSummary& c = sweep.k2.curve;
          const CurveSummary& r = sweep.k2.random_curve;
          bool ok = true;
          double worst = -1e300;
          for (std::size_t i = 0; i < c.proportions.size(); ++i) {
            if (c.proportions[i] < 0.10 - 1e-12) continue;
            worst = std::max(worst, c.mean[i] - r.mean[i]);
            ok = ok && c.mean[i] <= r.mean[i];
          }
          return Verdict{ok, "k=2, max (uncertainty - random) over p >= 10%: " + fmt("%.4f", worst)};
        }));

  check("imbalance-monotonicity", 0, need_sweep([&] {
          const double lo = sweep.k05.mean_full_pehe, hi = sweep.k2.mean_full_pehe;
          return Verdict{hi > lo, "mean sqrt PEHE k=0.5 " + fmt("%.4f", lo) + ", k=2 " + fmt("%.4f", hi)};
        }));

  check("collapse-demo", 0, [&] {
    const fs::path dir = out / "demo";
    const CollapseOutcome r = run_demo_collapse(dir, 0, 300);
    bool csv_ok = true;
    for (const char* name : {"latent_sn.csv", "latent_nosn.csv"}) {
      std::set<int> classes;
      std::size_t rows = 0;
      std::istringstream in(slurp(dir / name));
      std::string line;
      std::getline(in, line);
      csv_ok = csv_ok && line == "node,class,z1,z2";
      while (std::getline(in, line)) {
        int node = 0, cls = 0;
        double z1 = 0, z2 = 0;
        csv_ok = csv_ok && std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &node, &cls, &z1, &z2) == 4 &&
                 std::isfinite(z1) && std::isfinite(z2);
        classes.insert(cls);
        ++rows;
      }
      csv_ok = csv_ok && rows == r.x.rows() && classes == std::set<int>{0, 1, 2, 3};
    }
    const double ratio = r.sn.audit.max_ratio;
    return Verdict{csv_ok && ratio <= 1.001,
                   std::string("CSVs ") + (csv_ok ? "parse with all four classes" : "malformed") +
                       "; normalized pair ratio " + fmt("%.4f", ratio) + " (need <= 1.001), unconstrained " +
                       fmt("%.4f", r.nosn.audit.max_ratio) + "; whole-graph perturbation ratio " +
                       fmt("%.4f", r.sn.perturbation.max_ratio) + " normalized, " +
                       fmt("%.4f", r.nosn.perturbation.max_ratio) + " unconstrained"};
  });

  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
