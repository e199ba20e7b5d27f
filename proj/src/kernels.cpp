#include "milattn/kernels.hpp"

namespace milattn::kernels {

namespace {
// Work thresholds below which the OpenMP kernels stay serial. The model's
// desk-scale configs sit under these; the paper-scale dims (n=7168) are far
// above them.
constexpr int64_t kMinMatmulWork = 16384;
constexpr int64_t kMinElemWork = 32768;

// Row i of c: k-outer axpy over rows of b. Per output element the additions
// run in ascending k, the order the bitwise-equivalence contract pins.
inline void matmul_row(const double* arow, const double* b, double* crow, int q, int r) {
  for (int j = 0; j < r; ++j) crow[j] = 0.0;
  for (int k = 0; k < q; ++k) {
    const double aik = arow[k];
    const double* brow = b + static_cast<int64_t>(k) * r;
    for (int j = 0; j < r; ++j) crow[j] += aik * brow[j];
  }
}

// da row i += g row i times b^T; b rows stream sequentially.
inline void grad_a_row(const double* grow, const double* b, double* darow, int q, int r) {
  for (int k = 0; k < q; ++k) {
    const double* brow = b + static_cast<int64_t>(k) * r;
    double acc = 0.0;
    for (int j = 0; j < r; ++j) acc += grow[j] * brow[j];
    darow[k] += acc;
  }
}

// db row k += sum_i a[i][k] * g row i, i ascending per element.
inline void grad_b_row(const double* a, const double* g, double* dbrow, int p, int q, int r,
                       int k) {
  for (int i = 0; i < p; ++i) {
    const double aik = a[static_cast<int64_t>(i) * q + k];
    const double* grow = g + static_cast<int64_t>(i) * r;
    for (int j = 0; j < r; ++j) dbrow[j] += aik * grow[j];
  }
}

}  // namespace

namespace serial {

void matmul(const double* a, const double* b, double* c, int p, int q, int r) {
  for (int i = 0; i < p; ++i)
    matmul_row(a + static_cast<int64_t>(i) * q, b, c + static_cast<int64_t>(i) * r, q, r);
}

void matmul_acc_grad_a(double* da, const double* g, const double* b, int p, int q, int r) {
  for (int i = 0; i < p; ++i)
    grad_a_row(g + static_cast<int64_t>(i) * r, b, da + static_cast<int64_t>(i) * q, q, r);
}

void matmul_acc_grad_b(double* db, const double* a, const double* g, int p, int q, int r) {
  for (int k = 0; k < q; ++k) grad_b_row(a, g, db + static_cast<int64_t>(k) * r, p, q, r, k);
}

void add(const double* a, const double* b, double* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

}  // namespace serial

// Each output row is produced by exactly one thread with the reference's
// per-element operation order, so any thread count reproduces the serial
// result bit for bit.
void matmul(const double* a, const double* b, double* c, int p, int q, int r) {
  const int64_t work = static_cast<int64_t>(p) * q * r;
  if (p == 1) {
    matmul_row(a, b, c, q, r);  // one row: threading would only split the axpy
    return;
  }
#pragma omp parallel for schedule(static) if (work >= kMinMatmulWork)
  for (int i = 0; i < p; ++i)
    matmul_row(a + static_cast<int64_t>(i) * q, b, c + static_cast<int64_t>(i) * r, q, r);
}

void matmul_acc_grad_a(double* da, const double* g, const double* b, int p, int q, int r) {
  const int64_t work = static_cast<int64_t>(p) * q * r;
  if (p == 1) {
#pragma omp parallel for schedule(static) if (work >= kMinMatmulWork)
    for (int k = 0; k < q; ++k) {
      const double* brow = b + static_cast<int64_t>(k) * r;
      double acc = 0.0;
      for (int j = 0; j < r; ++j) acc += g[j] * brow[j];
      da[k] += acc;
    }
    return;
  }
#pragma omp parallel for schedule(static) if (work >= kMinMatmulWork)
  for (int i = 0; i < p; ++i)
    grad_a_row(g + static_cast<int64_t>(i) * r, b, da + static_cast<int64_t>(i) * q, q, r);
}

void matmul_acc_grad_b(double* db, const double* a, const double* g, int p, int q, int r) {
  const int64_t work = static_cast<int64_t>(p) * q * r;
#pragma omp parallel for schedule(static) if (work >= kMinMatmulWork)
  for (int k = 0; k < q; ++k) grad_b_row(a, g, db + static_cast<int64_t>(k) * r, p, q, r, k);
}

void add(const double* a, const double* b, double* c, int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kMinElemWork)
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* c, int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kMinElemWork)
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* c, int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kMinElemWork)
  for (int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

}  // namespace milattn::kernels
