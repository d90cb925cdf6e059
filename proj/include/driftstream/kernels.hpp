#pragma once

#include <cstddef>

namespace driftstream::kern {

// OpenMP compute kernels. Each one parallelizes over independent output
// elements and keeps every inner reduction serial with a fixed order, so the
// output is bit-identical to the serial reference at any thread count.
// All matrices are row-major.

/// Phi[i,j] = scale * cos(dot(W[j,:], Z[i,:]) + phase[j]); W is m x d, Z is n x d, Phi is n x m.
void rff_batch(const double* w, const double* phase, double scale, const double* z, double* phi,
               int n, int d, int m);

/// G = F^T F; F is n x m, G is m x m (both halves filled).
void gram(const double* f, double* g, int n, int m);

/// out = F^T y; F is n x m, y length n, out length m.
void tgemv(const double* f, const double* y, double* out, int n, int m);

/// In-place Cholesky of a symmetric positive definite n x n matrix; lower
/// factor L written in place (upper triangle zeroed). Returns false if a
/// non-positive pivot is hit. Serial: cost is negligible next to the batched
/// kernels and a fixed order keeps it reproducible.
bool cholesky_inplace(double* a, int n);

/// Solve L x = b (lower triangular).
void solve_lower(const double* l, const double* b, double* x, int n);

/// Solve L^T x = b.
void solve_lower_transpose(const double* l, const double* b, double* x, int n);

/// ||L^{-1} phi||^2, i.e. phi^T (L L^T)^{-1} phi. `work` must hold n doubles.
double quad_form_inv(const double* l, const double* phi, double* work, int n);

// Serial reference implementations, kept for the equivalence tests and the
// benchmark target.
namespace serial {
void rff_batch(const double* w, const double* phase, double scale, const double* z, double* phi,
               int n, int d, int m);
void gram(const double* f, double* g, int n, int m);
void tgemv(const double* f, const double* y, double* out, int n, int m);
}  // namespace serial

}  // namespace driftstream::kern
