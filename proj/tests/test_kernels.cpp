#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "milattn/kernels.hpp"
#include "milattn/rng.hpp"

namespace k = milattn::kernels;

namespace {

std::vector<double> random_buffer(int64_t n, uint64_t seed) {
  milattn::Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

// The OpenMP kernels must reproduce the serial reference bit-for-bit at any
// thread count: each output element keeps the reference's operation order.
TEST_CASE("openmp kernels match the serial reference bitwise") {
  struct Dims {
    int p, q, r;
  };
  // Mix of tiny, unaligned, vector-shaped and above-threshold sizes.
  const Dims cases[] = {{1, 3, 2}, {5, 7, 3}, {1, 300, 200}, {64, 64, 64}, {33, 129, 65}};

  for (const Dims& d : cases) {
    auto a = random_buffer(static_cast<int64_t>(d.p) * d.q, 101 + d.p);
    auto b = random_buffer(static_cast<int64_t>(d.q) * d.r, 202 + d.q);
    auto g = random_buffer(static_cast<int64_t>(d.p) * d.r, 303 + d.r);

    std::vector<double> c_ref(static_cast<size_t>(d.p) * d.r);
    k::serial::matmul(a.data(), b.data(), c_ref.data(), d.p, d.q, d.r);

    std::vector<double> da_ref(a.size(), 0.5), db_ref(b.size(), 0.25);
    k::serial::matmul_acc_grad_a(da_ref.data(), g.data(), b.data(), d.p, d.q, d.r);
    k::serial::matmul_acc_grad_b(db_ref.data(), a.data(), g.data(), d.p, d.q, d.r);

    for (int threads : {1, 2, 4}) {
#ifdef _OPENMP
      omp_set_num_threads(threads);
#else
      (void)threads;
#endif
      std::vector<double> c(static_cast<size_t>(d.p) * d.r);
      k::matmul(a.data(), b.data(), c.data(), d.p, d.q, d.r);
      CHECK(same_bits(c, c_ref));

      std::vector<double> da(a.size(), 0.5), db(b.size(), 0.25);
      k::matmul_acc_grad_a(da.data(), g.data(), b.data(), d.p, d.q, d.r);
      k::matmul_acc_grad_b(db.data(), a.data(), g.data(), d.p, d.q, d.r);
      CHECK(same_bits(da, da_ref));
      CHECK(same_bits(db, db_ref));
    }
  }
}

TEST_CASE("elementwise kernels match the serial reference bitwise") {
  for (int64_t n : {7LL, 1000LL, 100000LL}) {
    auto a = random_buffer(n, 11);
    auto b = random_buffer(n, 13);
    std::vector<double> add_ref(static_cast<size_t>(n)), sub_ref(static_cast<size_t>(n)),
        mul_ref(static_cast<size_t>(n));
    k::serial::add(a.data(), b.data(), add_ref.data(), n);
    k::serial::sub(a.data(), b.data(), sub_ref.data(), n);
    k::serial::mul(a.data(), b.data(), mul_ref.data(), n);

    for (int threads : {1, 2}) {
#ifdef _OPENMP
      omp_set_num_threads(threads);
#else
      (void)threads;
#endif
      std::vector<double> out(static_cast<size_t>(n));
      k::add(a.data(), b.data(), out.data(), n);
      CHECK(same_bits(out, add_ref));
      k::sub(a.data(), b.data(), out.data(), n);
      CHECK(same_bits(out, sub_ref));
      k::mul(a.data(), b.data(), out.data(), n);
      CHECK(same_bits(out, mul_ref));
    }
  }
}

TEST_CASE("matmul correctness on a hand case") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4);
  k::matmul(a.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c == std::vector<double>{19, 22, 43, 50});

  // Gradient accumulators add on top of existing content.
  std::vector<double> da(4, 1.0), g{1, 0, 0, 1};
  k::matmul_acc_grad_a(da.data(), g.data(), b.data(), 2, 2, 2);
  // g * b^T = [5 7; 6 8], plus the preexisting ones.
  CHECK(da == std::vector<double>{6, 8, 7, 9});
}
