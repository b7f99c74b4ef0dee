#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "prolat/error.hpp"
#include "prolat/rng.hpp"

#ifdef PROLAT_HAVE_CBLAS
#include <cblas.h>
#ifdef PROLAT_HAVE_OPENBLAS
extern "C" void openblas_set_num_threads(int);
#endif
#endif

namespace prolat {

// Dense row-major matrix of 64-bit floats. Compute is double end to end;
// the wire format narrows to float32 at serialization only.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw ArgumentError("matrix dimensions must be non-negative");
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Matrix& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

namespace detail {
#if defined(PROLAT_HAVE_CBLAS) && defined(PROLAT_HAVE_OPENBLAS)
// Single-threaded BLAS: the training-step matrices are small enough that
// thread fan-out costs more than it buys, and it keeps runs reproducible.
inline void pin_blas_threads() {
  static const bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
}
#else
inline void pin_blas_threads() {}
#endif
}  // namespace detail

// c = a @ b, shapes (m x k)(k x n). `accumulate` adds into c instead.
inline void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false) {
  if (a.cols != b.rows) throw ArgumentError("matmul: inner dimensions differ");
  if (c.rows != a.rows || c.cols != b.cols) c = Matrix(a.rows, b.cols);
#ifdef PROLAT_HAVE_CBLAS
  detail::pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, a.rows, b.cols, a.cols, 1.0,
              a.data.data(), a.cols, b.data.data(), b.cols, accumulate ? 1.0 : 0.0,
              c.data.data(), c.cols);
#else
  if (!accumulate) c.fill(0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double av = ar[k];
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
#endif
}

// c = a^T @ b, shapes (k x m)(k x n) -> (m x n).
inline void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false) {
  if (a.rows != b.rows) throw ArgumentError("matmul_tn: inner dimensions differ");
  if (c.rows != a.cols || c.cols != b.cols) c = Matrix(a.cols, b.cols);
#ifdef PROLAT_HAVE_CBLAS
  detail::pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, a.cols, b.cols, a.rows, 1.0,
              a.data.data(), a.cols, b.data.data(), b.cols, accumulate ? 1.0 : 0.0,
              c.data.data(), c.cols);
#else
  if (!accumulate) c.fill(0.0);
  for (int k = 0; k < a.rows; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      double* cr = c.row(i);
      const double av = ar[i];
      for (int j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
#endif
}

// c = a @ b^T, shapes (m x k)(n x k) -> (m x n).
inline void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false) {
  if (a.cols != b.cols) throw ArgumentError("matmul_nt: inner dimensions differ");
  if (c.rows != a.rows || c.cols != b.rows) c = Matrix(a.rows, b.rows);
#ifdef PROLAT_HAVE_CBLAS
  detail::pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, a.rows, b.rows, a.cols, 1.0,
              a.data.data(), a.cols, b.data.data(), b.cols, accumulate ? 1.0 : 0.0,
              c.data.data(), c.cols);
#else
  if (!accumulate) c.fill(0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      cr[j] += s;
    }
  }
#endif
}

inline Matrix random_gaussian(int rows, int cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.gaussian() * scale;
  return m;
}

}  // namespace prolat
