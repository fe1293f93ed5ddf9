#pragma once

#include <cmath>
#include <cstddef>

// Dense kernels shared by the tape ops and the no-tape evaluator. Plain
// contiguous loops so the compiler can vectorize them; parallelism lives one
// level up (per example / per expression), not inside these calls.

namespace nlogic::kern {

// y = W x, W is r x c row-major.
inline void matvec(const double* W, const double* x, double* y, int r, int c) {
  for (int i = 0; i < r; ++i) {
    const double* row = W + static_cast<size_t>(i) * c;
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (int j = 0; j < c; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

// dx += W^T g.
inline void matvec_t_acc(const double* W, const double* g, double* dx, int r,
                         int c) {
  for (int i = 0; i < r; ++i) {
    const double* row = W + static_cast<size_t>(i) * c;
    const double gi = g[i];
    for (int j = 0; j < c; ++j) dx[j] += gi * row[j];
  }
}

// dW += g x^T.
inline void outer_acc(double* dW, const double* g, const double* x, int r,
                      int c) {
  for (int i = 0; i < r; ++i) {
    double* row = dW + static_cast<size_t>(i) * c;
    const double gi = g[i];
    for (int j = 0; j < c; ++j) row[j] += gi * x[j];
  }
}

inline void add(const double* a, const double* b, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

inline void acc(double* y, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] += a[i];
}

inline void axpy_acc(double* y, double alpha, const double* a, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * a[i];
}

inline double dot(const double* a, const double* b, int n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm_sq(const double* a, int n) { return dot(a, a, n); }

inline void relu(const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

// Numerically stable logistic; handles |x| up to the exp underflow range.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace nlogic::kern
