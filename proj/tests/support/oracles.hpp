#pragma once
// Straight-line reference implementations used only by tests. They share no
// code with the library.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "graphdkl/tensor.hpp"

namespace oracle {

using graphdkl::Tensor;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

// Gauss-Jordan with partial pivoting.
inline Tensor inverse(Tensor a) {
  const std::size_t n = a.rows();
  Tensor inv = Tensor::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (a(piv, col) == 0.0) throw std::runtime_error("oracle::inverse: singular");
    for (std::size_t c = 0; c < n; ++c) {
      std::swap(a(col, c), a(piv, c));
      std::swap(inv(col, c), inv(piv, c));
    }
    const double d = a(col, col);
    for (std::size_t c = 0; c < n; ++c) {
      a(col, c) /= d;
      inv(col, c) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      for (std::size_t c = 0; c < n; ++c) {
        a(r, c) -= f * a(col, c);
        inv(r, c) -= f * inv(col, c);
      }
    }
  }
  return inv;
}

// log|det A| via LU with partial pivoting.
inline double logdet(Tensor a) {
  const std::size_t n = a.rows();
  double acc = 0.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
    acc += std::log(std::abs(a(col, col)));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
    }
  }
  return acc;
}

// Cyclic Jacobi on the symmetric matrix W^T W; returns singular values of W.
inline std::vector<double> singular_values(const Tensor& w) {
  const std::size_t n = w.cols();
  Tensor a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < w.rows(); ++k) a(i, j) += w(k, i) * w(k, j);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> sv;
  for (std::size_t i = 0; i < n; ++i) sv.push_back(std::sqrt(std::max(0.0, a(i, i))));
  std::sort(sv.rbegin(), sv.rend());
  return sv;
}

inline double sigma_max(const Tensor& w) { return singular_values(w).front(); }

inline double rbf(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j, double var,
                  double ls) {
  double d2 = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) d2 += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
  return var * std::exp(-d2 / (2.0 * ls * ls));
}

inline Tensor gram(const Tensor& a, const Tensor& b, double var, double ls) {
  Tensor k(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) k(i, j) = rbf(a, i, b, j, var, ls);
  return k;
}

// log N(y | 0, K + noise I) by explicit inverse and LU determinant.
inline double log_marginal(const Tensor& z, const std::vector<double>& y, double var, double ls,
                           double noise) {
  Tensor k = gram(z, z, var, ls);
  for (std::size_t i = 0; i < z.rows(); ++i) k(i, i) += noise;
  const Tensor inv = inverse(k);
  double quad = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) quad += y[i] * inv(i, j) * y[j];
  const double n = static_cast<double>(y.size());
  return -0.5 * quad - 0.5 * logdet(k) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct Posterior {
  std::vector<double> mean;
  std::vector<double> var;
};

inline Posterior posterior(const Tensor& z, const std::vector<double>& y, const Tensor& q,
                           double var, double ls, double noise) {
  Tensor k = gram(z, z, var, ls);
  for (std::size_t i = 0; i < z.rows(); ++i) k(i, i) += noise;
  const Tensor inv = inverse(k);
  const Tensor ks = gram(q, z, var, ls);
  Posterior p;
  for (std::size_t a = 0; a < q.rows(); ++a) {
    double m = 0.0, v = var;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < z.rows(); ++j) {
        m += ks(a, i) * inv(i, j) * y[j];
        v -= ks(a, i) * inv(i, j) * ks(a, j);
      }
    }
    p.mean.push_back(m);
    p.var.push_back(v);
  }
  return p;
}

inline double row_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double acc = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) acc += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
  return std::sqrt(acc);
}

inline double max_row_norm_diff(const Tensor& a, const Tensor& b) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) best = std::max(best, row_distance(a, i, b, i));
  return best;
}

}  // namespace oracle
