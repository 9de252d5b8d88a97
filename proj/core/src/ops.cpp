#include "graphdkl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eigen_view.hpp"
#include "graphdkl/errors.hpp"

namespace graphdkl {

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw NumericError("softplus_inverse: argument must be positive");
  // log(exp(y) - 1), written to stay accurate for large y.
  return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace graphdkl

namespace graphdkl::ops {

using detail::view;

namespace {

Tape& tape_of(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands on different tapes");
  return a.tape();
}

void require_square(const Tensor& t, const char* op) {
  if (t.rows() != t.cols()) {
    throw ShapeError(std::string(op) + ": expected square matrix, got " + t.shape_string());
  }
}

void require_scalar(const Tensor& t, const char* op) {
  if (t.rows() != 1 || t.cols() != 1) {
    throw ShapeError(std::string(op) + ": expected 1x1 scalar, got " + t.shape_string());
  }
}

// Elementwise unary op: f gives the value, df(x, y) the local derivative.
template <typename F, typename DF>
Var unary(const char* name, Var a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape().record(name, std::move(y), {a},
                         [a, df](Tape& t, const Tensor& out, const Tensor& g) {
                           Tensor* ga = t.adjoint(a);
                           if (!ga) return;
                           const Tensor& x = a.value();
                           for (std::size_t i = 0; i < x.size(); ++i)
                             (*ga)[i] += g[i] * df(x[i], out[i]);
                         });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + av.shape_string() + " x " +
                     bv.shape_string());
  }
  Tensor out(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  return tape.record("matmul", std::move(out), {a, b},
                     [a, b](Tape& t, const Tensor&, const Tensor& g) {
                       if (Tensor* ga = t.adjoint(a))
                         view(*ga).noalias() += view(g) * view(b.value()).transpose();
                       if (Tensor* gb = t.adjoint(b))
                         view(*gb).noalias() += view(a.value()).transpose() * view(g);
                     });
}

Var transpose(Var a) {
  return a.tape().record("transpose", a.value().transposed(), {a},
                         [a](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.adjoint(a)) view(*ga) += view(g).transpose();
                         });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return tape.record("add", std::move(out), {a, b},
                     [a, b](Tape& t, const Tensor&, const Tensor& g) {
                       if (Tensor* ga = t.adjoint(a)) *ga += g;
                       if (Tensor* gb = t.adjoint(b)) *gb += g;
                     });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.rows(), a.cols());
  view(out) = view(a.value()) - view(b.value());
  return tape.record("sub", std::move(out), {a, b},
                     [a, b](Tape& t, const Tensor&, const Tensor& g) {
                       if (Tensor* ga = t.adjoint(a)) *ga += g;
                       if (Tensor* gb = t.adjoint(b)) view(*gb) -= view(g);
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.rows(), a.cols());
  view(out) = view(a.value()).cwiseProduct(view(b.value()));
  return tape.record("mul", std::move(out), {a, b},
                     [a, b](Tape& t, const Tensor&, const Tensor& g) {
                       if (Tensor* ga = t.adjoint(a))
                         view(*ga) += view(g).cwiseProduct(view(b.value()));
                       if (Tensor* gb = t.adjoint(b))
                         view(*gb) += view(g).cwiseProduct(view(a.value()));
                     });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  Tensor out = a.value();
  out *= factor;
  return a.tape().record("scale", std::move(out), {a},
                         [a, factor](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.adjoint(a)) view(*ga) += factor * view(g);
                         });
}

Var add_scalar(Var a, double offset) {
  Tensor out = a.value();
  for (double& v : out.data()) v += offset;
  return a.tape().record("add_scalar", std::move(out), {a},
                         [a](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.adjoint(a)) *ga += g;
                         });
}

Var mul_scalar(Var a, Var s) {
  Tape& tape = tape_of(a, s, "mul_scalar");
  require_scalar(s.value(), "mul_scalar");
  Tensor out = a.value();
  out *= s.value()[0];
  return tape.record("mul_scalar", std::move(out), {a, s},
                     [a, s](Tape& t, const Tensor&, const Tensor& g) {
                       if (Tensor* ga = t.adjoint(a)) view(*ga) += s.value()[0] * view(g);
                       if (Tensor* gs = t.adjoint(s))
                         (*gs)[0] += view(g).cwiseProduct(view(a.value())).sum();
                     });
}

Var div_scalar(Var a, Var s) {
  Tape& tape = tape_of(a, s, "div_scalar");
  require_scalar(s.value(), "div_scalar");
  const double denom = s.value()[0];
  if (denom == 0.0) throw NumericError("div_scalar: division by zero");
  Tensor out = a.value();
  out *= 1.0 / denom;
  return tape.record("div_scalar", std::move(out), {a, s},
                     [a, s](Tape& t, const Tensor&, const Tensor& g) {
                       const double d = s.value()[0];
                       if (Tensor* ga = t.adjoint(a)) view(*ga) += view(g) / d;
                       if (Tensor* gs = t.adjoint(s))
                         (*gs)[0] -= view(g).cwiseProduct(view(a.value())).sum() / (d * d);
                     });
}

Var add_row(Var m, Var r) {
  Tape& tape = tape_of(m, r, "add_row");
  const Tensor& mv = m.value();
  const Tensor& rv = r.value();
  if (rv.rows() != 1 || rv.cols() != mv.cols()) {
    throw ShapeError("add_row: row " + rv.shape_string() + " does not fit " + mv.shape_string());
  }
  Tensor out = mv;
  view(out).rowwise() += view(rv).row(0);
  return tape.record("add_row", std::move(out), {m, r},
                     [m, r](Tape& t, const Tensor&, const Tensor& g) {
                       if (Tensor* gm = t.adjoint(m)) *gm += g;
                       if (Tensor* gr = t.adjoint(r)) view(*gr) += view(g).colwise().sum();
                     });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a, [](double x) { return graphdkl::sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return graphdkl::softplus(x); },
      [](double x, double) { return graphdkl::sigmoid(x); });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  return a.tape().record("sum", Tensor::scalar(view(a.value()).sum()), {a},
                         [a](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.adjoint(a)) view(*ga).array() += g[0];
                         });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var col_sum(Var a) {
  Tensor out(1, a.cols());
  view(out) = view(a.value()).colwise().sum();
  return a.tape().record("col_sum", std::move(out), {a},
                         [a](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.adjoint(a)) view(*ga).rowwise() += view(g).row(0);
                         });
}

Var row_sum(Var a) {
  Tensor out(a.rows(), 1);
  view(out) = view(a.value()).rowwise().sum();
  return a.tape().record("row_sum", std::move(out), {a},
                         [a](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.adjoint(a)) view(*ga).colwise() += view(g).col(0);
                         });
}

Var diag(Var a) {
  require_square(a.value(), "diag");
  const std::size_t n = a.rows();
  Tensor out(n, 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()(i, i);
  return a.tape().record("diag", std::move(out), {a},
                         [a](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.adjoint(a))
                             for (std::size_t i = 0; i < g.rows(); ++i) (*ga)(i, i) += g[i];
                         });
}

Var add_diag(Var a, double value) {
  require_square(a.value(), "add_diag");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += value;
  return a.tape().record("add_diag", std::move(out), {a},
                         [a](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* ga = t.adjoint(a)) *ga += g;
                         });
}

Var cholesky(Var a) {
  const Tensor& av = a.value();
  require_square(av, "cholesky");
  Eigen::LLT<detail::RowMatrix> llt(view(av));
  if (llt.info() != Eigen::Success) {
    throw NumericError("cholesky: matrix of size " + std::to_string(av.rows()) +
                       " is not positive definite");
  }
  Tensor out = detail::to_tensor(detail::RowMatrix(llt.matrixL()));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    if (!(out(i, i) > 0.0)) throw NumericError("cholesky: non-positive pivot");
  }
  return a.tape().record(
      "cholesky", std::move(out), {a}, [a](Tape& t, const Tensor& l, const Tensor& g) {
        Tensor* ga = t.adjoint(a);
        if (!ga) return;
        // S = L^{-T} Phi(L^T Lbar) L^{-1}, Phi = lower triangle with halved
        // diagonal; the symmetric part of S is the gradient wrt A.
        const auto lv = view(l);
        detail::RowMatrix p = (lv.transpose() * view(g)).triangularView<Eigen::Lower>();
        p.diagonal() *= 0.5;
        const auto upper = lv.transpose().triangularView<Eigen::Upper>();
        upper.solveInPlace(p);
        detail::RowMatrix s = p.transpose();
        upper.solveInPlace(s);
        view(*ga) += 0.5 * (s + s.transpose());
      });
}

Var solve_lower(Var l, Var b) {
  Tape& tape = tape_of(l, b, "solve_lower");
  require_square(l.value(), "solve_lower");
  if (l.rows() != b.rows()) throw ShapeError("solve_lower: row mismatch");
  Tensor x = b.value();
  view(l.value()).triangularView<Eigen::Lower>().solveInPlace(view(x));
  return tape.record("solve_lower", std::move(x), {l, b},
                     [l, b](Tape& t, const Tensor& x, const Tensor& g) {
                       // Bbar = L^{-T} Xbar ; Lbar = -tril(Bbar X^T)
                       detail::RowMatrix gb = view(g);
                       view(l.value()).transpose().triangularView<Eigen::Upper>().solveInPlace(gb);
                       if (Tensor* gl = t.adjoint(l)) {
                         detail::RowMatrix full = gb * view(x).transpose();
                         view(*gl) -= full.triangularView<Eigen::Lower>().toDenseMatrix();
                       }
                       if (Tensor* gbp = t.adjoint(b)) view(*gbp) += gb;
                     });
}

Var solve_lower_t(Var l, Var b) {
  Tape& tape = tape_of(l, b, "solve_lower_t");
  require_square(l.value(), "solve_lower_t");
  if (l.rows() != b.rows()) throw ShapeError("solve_lower_t: row mismatch");
  Tensor x = b.value();
  view(l.value()).transpose().triangularView<Eigen::Upper>().solveInPlace(view(x));
  return tape.record("solve_lower_t", std::move(x), {l, b},
                     [l, b](Tape& t, const Tensor& x, const Tensor& g) {
                       // Bbar = L^{-1} Xbar ; Lbar = -tril(X Bbar^T)
                       detail::RowMatrix gb = view(g);
                       view(l.value()).triangularView<Eigen::Lower>().solveInPlace(gb);
                       if (Tensor* gl = t.adjoint(l)) {
                         detail::RowMatrix full = view(x) * gb.transpose();
                         view(*gl) -= full.triangularView<Eigen::Lower>().toDenseMatrix();
                       }
                       if (Tensor* gbp = t.adjoint(b)) view(*gbp) += gb;
                     });
}

Var logdet_chol(Var l) {
  const Tensor& lv = l.value();
  require_square(lv, "logdet_chol");
  double acc = 0.0;
  for (std::size_t i = 0; i < lv.rows(); ++i) {
    if (!(lv(i, i) > 0.0)) throw NumericError("logdet_chol: non-positive diagonal");
    acc += std::log(lv(i, i));
  }
  return l.tape().record("logdet_chol", Tensor::scalar(2.0 * acc), {l},
                         [l](Tape& t, const Tensor&, const Tensor& g) {
                           if (Tensor* gl = t.adjoint(l)) {
                             const Tensor& lv = l.value();
                             for (std::size_t i = 0; i < lv.rows(); ++i)
                               (*gl)(i, i) += 2.0 * g[0] / lv(i, i);
                           }
                         });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  Tensor out(rows.size(), av.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= av.rows()) throw ShapeError("gather_rows: index out of range");
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(rows[r], c);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record("gather_rows", std::move(out), {a},
                         [a, idx = std::move(idx)](Tape& t, const Tensor&, const Tensor& g) {
                           Tensor* ga = t.adjoint(a);
                           if (!ga) return;
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(idx[r], c) += g(r, c);
                         });
}

Var pairwise_sqdist(Var a, Var b) {
  Tape& tape = tape_of(a, b, "pairwise_sqdist");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("pairwise_sqdist: feature widths differ " + av.shape_string() + " vs " +
                     bv.shape_string());
  }
  const std::size_t width = av.cols();
  Tensor out(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const double* ai = &av.data()[i * width];
    for (std::size_t j = 0; j < bv.rows(); ++j) {
      const double* bj = &bv.data()[j * width];
      double acc = 0.0;
      for (std::size_t c = 0; c < width; ++c) {
        const double d = ai[c] - bj[c];
        acc += d * d;
      }
      out(i, j) = acc;
    }
  }
  return tape.record("pairwise_sqdist", std::move(out), {a, b},
                     [a, b](Tape& t, const Tensor&, const Tensor& g) {
                       const auto gv = view(g);
                       const auto av = view(a.value());
                       const auto bv = view(b.value());
                       if (Tensor* ga = t.adjoint(a)) {
                         view(*ga) += 2.0 * (gv.rowwise().sum().asDiagonal() * av - gv * bv);
                       }
                       if (Tensor* gb = t.adjoint(b)) {
                         view(*gb) += 2.0 * (gv.colwise().sum().transpose().asDiagonal() * bv -
                                             gv.transpose() * av);
                       }
                     });
}

Var lower_softplus_diag(Var p) {
  const Tensor& pv = p.value();
  require_square(pv, "lower_softplus_diag");
  const std::size_t n = pv.rows();
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) out(i, j) = pv(i, j);
    out(i, i) = graphdkl::softplus(pv(i, i));
  }
  return p.tape().record("lower_softplus_diag", std::move(out), {p},
                         [p](Tape& t, const Tensor&, const Tensor& g) {
                           Tensor* gp = t.adjoint(p);
                           if (!gp) return;
                           const Tensor& pv = p.value();
                           for (std::size_t i = 0; i < pv.rows(); ++i) {
                             for (std::size_t j = 0; j < i; ++j) (*gp)(i, j) += g(i, j);
                             (*gp)(i, i) += g(i, i) * graphdkl::sigmoid(pv(i, i));
                           }
                         });
}

}  // namespace graphdkl::ops
