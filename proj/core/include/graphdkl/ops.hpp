#pragma once

#include <cstddef>
#include <span>

#include "graphdkl/tape.hpp"

// Differentiable primitives over rank-2 tensors. Every op records a node on the
// operands' tape together with its backward rule.
namespace graphdkl::ops {

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

/// a * s and a / s for a 1x1 Var s.
Var mul_scalar(Var a, Var s);
Var div_scalar(Var a, Var s);

/// Adds the 1 x C row `r` to every row of the R x C matrix `m`.
Var add_row(Var m, Var r);

Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var softplus(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
/// 1 x C column sums and R x 1 row sums.
Var col_sum(Var a);
Var row_sum(Var a);

/// Main diagonal of a square matrix as an n x 1 column.
Var diag(Var a);
Var add_diag(Var a, double value);

/// Lower Cholesky factor of a symmetric positive-definite matrix. Throws
/// NumericError when the factorization fails.
Var cholesky(Var a);
/// Solves L X = B for lower-triangular L.
Var solve_lower(Var l, Var b);
/// Solves L^T X = B for lower-triangular L.
Var solve_lower_t(Var l, Var b);
/// log det(L L^T) = 2 sum log L_ii.
Var logdet_chol(Var l);

Var gather_rows(Var a, std::span<const std::size_t> rows);

/// D[i, j] = ||a_i - b_j||^2.
Var pairwise_sqdist(Var a, Var b);

/// Strict lower triangle of `p` plus softplus of its diagonal; the result is a
/// valid Cholesky factor for any unconstrained square `p`.
Var lower_softplus_diag(Var p);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace graphdkl::ops

namespace graphdkl {
/// Numerically stable log(1 + exp(x)) and its inverse on (0, inf).
double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);
}  // namespace graphdkl
