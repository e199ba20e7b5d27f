#pragma once

#include <cstdint>

namespace milattn::kernels {

// Low-level numeric kernels behind the graph ops.
//
// kernels::serial holds the straightforward reference implementations used by
// the equivalence tests and the benchmark. The unqualified variants are the
// OpenMP ones used in production. Every parallel kernel assigns each output
// element to exactly one thread and keeps the reference's per-element
// operation order, so results are bit-identical for any thread count
// (the build also disables FP contraction; see the top-level CMakeLists).

namespace serial {

// c[p x r] = a[p x q] * b[q x r]
void matmul(const double* a, const double* b, double* c, int p, int q, int r);

// da[p x q] += g[p x r] * b^T   (gradient w.r.t. the left operand)
void matmul_acc_grad_a(double* da, const double* g, const double* b, int p, int q, int r);

// db[q x r] += a^T * g[p x r]   (gradient w.r.t. the right operand)
void matmul_acc_grad_b(double* db, const double* a, const double* g, int p, int q, int r);

void add(const double* a, const double* b, double* c, int64_t n);
void sub(const double* a, const double* b, double* c, int64_t n);
void mul(const double* a, const double* b, double* c, int64_t n);

}  // namespace serial

void matmul(const double* a, const double* b, double* c, int p, int q, int r);
void matmul_acc_grad_a(double* da, const double* g, const double* b, int p, int q, int r);
void matmul_acc_grad_b(double* db, const double* a, const double* g, int p, int q, int r);
void add(const double* a, const double* b, double* c, int64_t n);
void sub(const double* a, const double* b, double* c, int64_t n);
void mul(const double* a, const double* b, double* c, int64_t n);

}  // namespace milattn::kernels
