#include <doctest.h>

#include <cmath>
#include <numbers>

#include "graphdkl/errors.hpp"
#include "graphdkl/gp.hpp"
#include "graphdkl/ops.hpp"
#include "graphdkl/rng.hpp"
#include "oracles.hpp"

using namespace graphdkl;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

RbfKernel kern(double var, double ls) { return {0.5 * std::log(var), std::log(ls)}; }

ExactGp make_gp(const Tensor& z, const std::vector<double>& y, double var, double ls, double noise) {
  ExactGp gp;
  gp.kernel = kern(var, ls);
  gp.log_noise = std::log(noise);
  gp.set_data(z, y);
  return gp;
}

}  // namespace

TEST_CASE("rbf kernel values") {
  const RbfKernel k = kern(2.25, 0.7);
  Rng rng(1);
  const Tensor z = rng.normal_tensor(6, 3);
  const Tensor kzz = kernel_matrix(k, z, z);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(kzz(i, i) == doctest::Approx(2.25).epsilon(1e-14));
    for (std::size_t j = 0; j < 6; ++j) CHECK(kzz(i, j) == kzz(j, i));
  }
  const Tensor far = kernel_matrix(k, Tensor::from_rows({{0, 0, 0}}), Tensor::from_rows({{100, 0, 0}}));
  CHECK(far.item() < 1e-300);
  const Tensor unit = kernel_matrix(kern(1, 1), Tensor::from_rows({{0, 0}}), Tensor::from_rows({{1, 1}}));
  CHECK(unit.item() == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(unit.item() == doctest::Approx(0.36788).epsilon(1e-5));

  const Tensor q = rng.normal_tensor(4, 3);
  const Tensor kq = kernel_matrix(k, q, z);
  const Tensor ref = oracle::gram(q, z, 2.25, 0.7);
  for (std::size_t i = 0; i < kq.size(); ++i) CHECK(kq[i] == doctest::Approx(ref[i]).epsilon(1e-13));
  CHECK_THROWS_AS(kernel_matrix(k, q, Tensor(2, 2)), ShapeError);
}

TEST_CASE("kernel matrices on random sets factorize") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = rng.normal_tensor(15, 2, 0.1);
    double jitter = -1.0;
    CHECK_NOTHROW(jittered_cholesky(kernel_matrix(kern(1.0, 2.0), z, z), &jitter));
    CHECK(jitter >= 0.0);
  }
}

TEST_CASE("jitter ladder") {
  double used = -1.0;
  jittered_cholesky(Tensor::identity(3), &used);
  CHECK(used == 0.0);
  // Rank one: plain factorization fails, a small rung rescues it.
  const Tensor r1 = Tensor::from_rows({{1, 1}, {1, 1}});
  const Tensor l = jittered_cholesky(r1, &used);
  CHECK(used > 0.0);
  CHECK(used <= 1e-4);
  CHECK(l(0, 0) > 0.0);
  CHECK_THROWS_AS(jittered_cholesky(Tensor::from_rows({{1, 0}, {0, -1}})), NumericError);
}

TEST_CASE("log marginal: scalar cases") {
  ExactGp gp;
  gp.kernel = kern(1.0, 1.0);
  gp.log_noise = -std::numeric_limits<double>::infinity();
  const Tensor z = Tensor::from_rows({{0.3}});
  CHECK(exact_log_marginal(gp, z, std::vector<double>{0.0}) == doctest::Approx(-kHalfLog2Pi).epsilon(1e-12));

  const double a = 1.7, v = 2.5;
  gp.kernel = kern(2.0, 1.0);
  gp.log_noise = std::log(0.5);
  CHECK(exact_log_marginal(gp, z, std::vector<double>{a}) ==
        doctest::Approx(-a * a / (2 * v) - 0.5 * std::log(v) - kHalfLog2Pi).epsilon(1e-12));
}

TEST_CASE("log marginal and posterior against the dense-inverse oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor z = rng.normal_tensor(3, 2);
    const std::vector<double> y{rng.normal(), rng.normal(), rng.normal()};
    const ExactGp gp = make_gp(z, y, 1.3, 0.8, 0.2);
    CHECK(exact_log_marginal(gp) == doctest::Approx(oracle::log_marginal(z, y, 1.3, 0.8, 0.2)).epsilon(1e-10));
    const Tensor q = rng.normal_tensor(1, 2);
    const GpPrediction p = exact_posterior(gp, q);
    const oracle::Posterior ref = oracle::posterior(z, y, q, 1.3, 0.8, 0.2);
    CHECK(std::abs(p.mean[0] - ref.mean[0]) < 1e-10);
    CHECK(std::abs(p.var[0] - ref.var[0]) < 1e-10);
  }
}

TEST_CASE("posterior limits") {
  const Tensor z = Tensor::from_rows({{0.0}, {1.0}, {2.5}});
  const std::vector<double> y{0.4, -1.2, 2.0};
  const ExactGp gp = make_gp(z, y, 1.5, 0.9, 1e-12);
  const GpPrediction at = exact_posterior(gp, z);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(at.mean[i] == doctest::Approx(y[i]).epsilon(1e-6));
    CHECK(at.var[i] < 1e-6);
    CHECK(at.var[i] >= 0.0);
  }
  const GpPrediction far = exact_posterior(gp, Tensor::from_rows({{200.0}}));
  CHECK(std::abs(far.mean[0]) < 1e-12);
  CHECK(far.var[0] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("adding a training point never raises the predictive variance") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = rng.normal_tensor(8, 2);
    std::vector<double> y(8);
    for (double& v : y) v = rng.normal();
    const Tensor q = rng.normal_tensor(5, 2);
    Tensor z7(7, 2);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t c = 0; c < 2; ++c) z7(i, c) = z(i, c);
    const GpPrediction small = exact_posterior(make_gp(z7, {y.begin(), y.begin() + 7}, 1.0, 0.7, 0.05), q);
    const GpPrediction big = exact_posterior(make_gp(z, y, 1.0, 0.7, 0.05), q);
    for (std::size_t a = 0; a < 5; ++a) CHECK(big.var[a] <= small.var[a] + 1e-10);
  }
}

TEST_CASE("exact marginal gradients") {
  Rng rng(5);
  const Tensor z0 = rng.normal_tensor(6, 2);
  std::vector<double> y(6);
  for (double& v : y) v = rng.normal();
  ParamSet p;
  p.add("ls", Tensor::scalar(0.1));
  p.add("ll", Tensor::scalar(-0.2));
  p.add("ln", Tensor::scalar(-1.0));
  p.add("z", z0);
  auto f = [&](const BoundParams& bp) {
    return exact_log_marginal(bp["ls"], bp["ll"], bp["ln"], bp["z"], y);
  };
  CHECK(finite_diff_check(f, p, 1e-6, 1e-4, 1e-7).passed());
  ExactGp gp = make_gp(z0, y, std::exp(0.2), std::exp(-0.2), std::exp(-1.0));
  CHECK(evaluate(f, p) == doctest::Approx(exact_log_marginal(gp)).epsilon(1e-12));
}

TEST_CASE("fit_exact") {
  Rng rng(6);
  SUBCASE("pure noise labels: objective never decreases") {
    const Tensor z = rng.normal_tensor(25, 2);
    std::vector<double> y(25);
    for (double& v : y) v = rng.normal();
    ExactGp gp = make_gp(z, y, 1.0, 1.0, 0.1);
    const ExactFitReport rep = fit_exact(gp, {});
    for (std::size_t i = 1; i < rep.log_marginal.size(); ++i)
      CHECK(rep.log_marginal[i] >= rep.log_marginal[i - 1]);
    CHECK(rep.log_marginal.back() >= rep.log_marginal.front());
    CHECK(exact_log_marginal(gp) == doctest::Approx(rep.log_marginal.back()).epsilon(1e-12));
  }
  SUBCASE("sinusoid is recovered below the noise level") {
    const double sigma = 0.1;
    Tensor z(20, 1);
    std::vector<double> y(20), f(20);
    for (std::size_t i = 0; i < 20; ++i) {
      z(i, 0) = 2.0 * std::numbers::pi * static_cast<double>(i) / 19.0;
      f[i] = std::sin(z(i, 0));
      y[i] = f[i] + rng.normal(0.0, sigma);
    }
    ExactGp gp = make_gp(z, y, 1.0, 1.0, 0.1);
    ExactFitOptions opt;
    opt.steps = 200;
    opt.adam.lr = 0.05;
    fit_exact(gp, opt);
    const GpPrediction p = exact_posterior(gp, z);
    double se = 0.0;
    for (std::size_t i = 0; i < 20; ++i) se += (p.mean[i] - f[i]) * (p.mean[i] - f[i]);
    CHECK(std::sqrt(se / 20.0) < sigma);
  }
  SUBCASE("nothing to fit is a no-op") {
    const Tensor z = rng.normal_tensor(10, 2);
    std::vector<double> y(10, 0.3);
    ExactGp gp = make_gp(z, y, 1.0, 1.0, 0.1);
    const ParamSet before = gp.params();
    ExactFitOptions opt;
    opt.fit_kernel = false;
    opt.fit_noise = false;
    fit_exact(gp, opt);
    CHECK(gp.params() == before);
  }
}
