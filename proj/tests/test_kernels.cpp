#include <cmath>
#include <vector>

#include "doctest.h"
#include "hgrec/kernels.hpp"
#include "hgrec/rng.hpp"

using namespace hgrec;
namespace k = hgrec::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0,
                               double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct BackendGuard {
  k::Backend saved = k::active_backend();
  ~BackendGuard() { k::set_backend(saved); }
};

}  // namespace

TEST_CASE("backend dispatch reports a valid backend") {
  CHECK((k::active_backend() == k::Backend::Scalar ||
         k::active_backend() == k::Backend::Avx2));
  if (k::cpu_has_avx2()) CHECK(k::best_backend() == k::Backend::Avx2);
}

TEST_CASE("scalar and AVX2 elementwise kernels agree bit-exactly") {
  if (!k::cpu_has_avx2()) return;
  BackendGuard guard;
  Rng rng(77);
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 257u}) {
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    std::vector<double> out_s(n), out_v(n);

    k::set_backend(k::Backend::Scalar);
    k::add(out_s.data(), a.data(), b.data(), n);
    k::set_backend(k::Backend::Avx2);
    k::add(out_v.data(), a.data(), b.data(), n);
    CHECK(out_s == out_v);

    k::set_backend(k::Backend::Scalar);
    k::mul(out_s.data(), a.data(), b.data(), n);
    k::set_backend(k::Backend::Avx2);
    k::mul(out_v.data(), a.data(), b.data(), n);
    CHECK(out_s == out_v);

    k::set_backend(k::Backend::Scalar);
    k::sub(out_s.data(), a.data(), b.data(), n);
    k::set_backend(k::Backend::Avx2);
    k::sub(out_v.data(), a.data(), b.data(), n);
    CHECK(out_s == out_v);

    k::set_backend(k::Backend::Scalar);
    k::scale(out_s.data(), a.data(), 1.7, n);
    k::set_backend(k::Backend::Avx2);
    k::scale(out_v.data(), a.data(), 1.7, n);
    CHECK(out_s == out_v);

    k::set_backend(k::Backend::Scalar);
    k::relu(out_s.data(), a.data(), n);
    k::set_backend(k::Backend::Avx2);
    k::relu(out_v.data(), a.data(), n);
    CHECK(out_s == out_v);

    k::set_backend(k::Backend::Scalar);
    k::leaky_relu(out_s.data(), a.data(), 0.2, n);
    k::set_backend(k::Backend::Avx2);
    k::leaky_relu(out_v.data(), a.data(), 0.2, n);
    CHECK(out_s == out_v);
  }
}

TEST_CASE("scalar and AVX2 reductions agree within FMA rounding") {
  if (!k::cpu_has_avx2()) return;
  BackendGuard guard;
  Rng rng(78);
  for (std::size_t n : {1u, 5u, 127u, 1024u}) {
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    k::set_backend(k::Backend::Scalar);
    const double ds = k::dot(a.data(), b.data(), n);
    const double ss = k::sum(a.data(), n);
    k::set_backend(k::Backend::Avx2);
    const double dv = k::dot(a.data(), b.data(), n);
    const double sv = k::sum(a.data(), n);
    CHECK(std::abs(ds - dv) < 1e-12 * static_cast<double>(n));
    CHECK(std::abs(ss - sv) < 1e-12 * static_cast<double>(n));
  }
}

TEST_CASE("scalar and AVX2 matmul variants agree within rounding") {
  if (!k::cpu_has_avx2()) return;
  BackendGuard guard;
  Rng rng(79);
  const std::size_t m = 9, kk = 13, n = 11;
  auto a = random_vec(m * kk, rng);
  auto b = random_vec(kk * n, rng);
  auto bt = random_vec(n * kk, rng);
  auto at = random_vec(kk * m, rng);

  std::vector<double> cs(m * n), cv(m * n);
  k::set_backend(k::Backend::Scalar);
  k::matmul_nn(a.data(), b.data(), cs.data(), m, kk, n, false);
  k::set_backend(k::Backend::Avx2);
  k::matmul_nn(a.data(), b.data(), cv.data(), m, kk, n, false);
  CHECK(max_abs_diff(cs, cv) < 1e-13);

  k::set_backend(k::Backend::Scalar);
  k::matmul_nt(a.data(), bt.data(), cs.data(), m, kk, n, false);
  k::set_backend(k::Backend::Avx2);
  k::matmul_nt(a.data(), bt.data(), cv.data(), m, kk, n, false);
  CHECK(max_abs_diff(cs, cv) < 1e-13);

  k::set_backend(k::Backend::Scalar);
  k::matmul_tn(at.data(), b.data(), cs.data(), m, kk, n, false);
  k::set_backend(k::Backend::Avx2);
  k::matmul_tn(at.data(), b.data(), cv.data(), m, kk, n, false);
  CHECK(max_abs_diff(cs, cv) < 1e-13);
}

TEST_CASE("matmul accumulate adds into the output") {
  Rng rng(80);
  const std::size_t m = 3, kk = 4, n = 2;
  auto a = random_vec(m * kk, rng);
  auto b = random_vec(kk * n, rng);
  std::vector<double> c0(m * n, 0.5), c1(m * n);
  k::matmul_nn(a.data(), b.data(), c1.data(), m, kk, n, false);
  k::matmul_nn(a.data(), b.data(), c0.data(), m, kk, n, true);
  for (std::size_t i = 0; i < m * n; ++i)
    CHECK(c0[i] == doctest::Approx(c1[i] + 0.5).epsilon(1e-12));
}

TEST_CASE("matmul_nt and matmul_tn match explicit transposition") {
  Rng rng(81);
  const std::size_t m = 4, kk = 5, n = 3;
  auto a = random_vec(m * kk, rng);
  auto b = random_vec(kk * n, rng);
  // B^T stored (n x k)
  std::vector<double> bt(n * kk);
  for (std::size_t i = 0; i < kk; ++i)
    for (std::size_t j = 0; j < n; ++j) bt[j * kk + i] = b[i * n + j];
  // A^T stored (k x m)
  std::vector<double> at(kk * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < kk; ++j) at[j * m + i] = a[i * kk + j];

  std::vector<double> c_ref(m * n), c_nt(m * n), c_tn(m * n);
  k::matmul_nn(a.data(), b.data(), c_ref.data(), m, kk, n, false);
  k::matmul_nt(a.data(), bt.data(), c_nt.data(), m, kk, n, false);
  k::matmul_tn(at.data(), b.data(), c_tn.data(), m, kk, n, false);
  CHECK(max_abs_diff(c_ref, c_nt) < 1e-12);
  CHECK(max_abs_diff(c_ref, c_tn) < 1e-12);
}
