#include "hgrec/kernels.hpp"

#include <stdexcept>

namespace hgrec::kernels {

namespace scalar {
void add(double*, const double*, const double*, std::size_t);
void sub(double*, const double*, const double*, std::size_t);
void mul(double*, const double*, const double*, std::size_t);
void scale(double*, const double*, double, std::size_t);
void axpy(double, const double*, double*, std::size_t);
double dot(const double*, const double*, std::size_t);
double sum(const double*, std::size_t);
void relu(double*, const double*, std::size_t);
void leaky_relu(double*, const double*, double, std::size_t);
void relu_grad_acc(double*, const double*, const double*, std::size_t);
void leaky_relu_grad_acc(double*, const double*, const double*, double, std::size_t);
void matmul_nn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
void matmul_nt(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
void matmul_tn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define HGREC_HAVE_AVX2_TU 1
namespace avx2 {
void add(double*, const double*, const double*, std::size_t);
void sub(double*, const double*, const double*, std::size_t);
void mul(double*, const double*, const double*, std::size_t);
void scale(double*, const double*, double, std::size_t);
void axpy(double, const double*, double*, std::size_t);
double dot(const double*, const double*, std::size_t);
double sum(const double*, std::size_t);
void relu(double*, const double*, std::size_t);
void leaky_relu(double*, const double*, double, std::size_t);
void relu_grad_acc(double*, const double*, const double*, std::size_t);
void leaky_relu_grad_acc(double*, const double*, const double*, double, std::size_t);
void matmul_nn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
void matmul_nt(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
void matmul_tn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
}  // namespace avx2
#endif

namespace {

struct KernelTable {
  void (*add)(double*, const double*, const double*, std::size_t);
  void (*sub)(double*, const double*, const double*, std::size_t);
  void (*mul)(double*, const double*, const double*, std::size_t);
  void (*scale)(double*, const double*, double, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*relu)(double*, const double*, std::size_t);
  void (*leaky_relu)(double*, const double*, double, std::size_t);
  void (*relu_grad_acc)(double*, const double*, const double*, std::size_t);
  void (*leaky_relu_grad_acc)(double*, const double*, const double*, double, std::size_t);
  void (*matmul_nn)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
  void (*matmul_nt)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
  void (*matmul_tn)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
};

constexpr KernelTable kScalarTable = {
    scalar::add,           scalar::sub,
    scalar::mul,           scalar::scale,
    scalar::axpy,          scalar::dot,
    scalar::sum,           scalar::relu,
    scalar::leaky_relu,    scalar::relu_grad_acc,
    scalar::leaky_relu_grad_acc,
    scalar::matmul_nn,     scalar::matmul_nt,
    scalar::matmul_tn,
};

#ifdef HGREC_HAVE_AVX2_TU
constexpr KernelTable kAvx2Table = {
    avx2::add,           avx2::sub,
    avx2::mul,           avx2::scale,
    avx2::axpy,          avx2::dot,
    avx2::sum,           avx2::relu,
    avx2::leaky_relu,    avx2::relu_grad_acc,
    avx2::leaky_relu_grad_acc,
    avx2::matmul_nn,     avx2::matmul_nt,
    avx2::matmul_tn,
};
#endif

Backend g_backend = best_backend();
const KernelTable* g_table = nullptr;

const KernelTable* table_for(Backend b) {
#ifdef HGREC_HAVE_AVX2_TU
  if (b == Backend::Avx2) return &kAvx2Table;
#endif
  return &kScalarTable;
}

const KernelTable& table() {
  if (!g_table) g_table = table_for(g_backend);
  return *g_table;
}

}  // namespace

bool cpu_has_avx2() {
#ifdef HGREC_HAVE_AVX2_TU
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend best_backend() {
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !cpu_has_avx2())
    throw std::runtime_error("kernels: AVX2 backend not supported on this CPU");
  g_backend = b;
  g_table = table_for(b);
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "unknown";
}

void add(double* out, const double* a, const double* b, std::size_t n) {
  table().add(out, a, b, n);
}
void sub(double* out, const double* a, const double* b, std::size_t n) {
  table().sub(out, a, b, n);
}
void mul(double* out, const double* a, const double* b, std::size_t n) {
  table().mul(out, a, b, n);
}
void scale(double* out, const double* x, double alpha, std::size_t n) {
  table().scale(out, x, alpha, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table().axpy(alpha, x, y, n);
}
double dot(const double* a, const double* b, std::size_t n) {
  return table().dot(a, b, n);
}
double sum(const double* x, std::size_t n) { return table().sum(x, n); }
void relu(double* out, const double* x, std::size_t n) {
  table().relu(out, x, n);
}
void leaky_relu(double* out, const double* x, double slope, std::size_t n) {
  table().leaky_relu(out, x, slope, n);
}
void relu_grad_acc(double* dx, const double* x, const double* g, std::size_t n) {
  table().relu_grad_acc(dx, x, g, n);
}
void leaky_relu_grad_acc(double* dx, const double* x, const double* g,
                         double slope, std::size_t n) {
  table().leaky_relu_grad_acc(dx, x, g, slope, n);
}
void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  table().matmul_nn(a, b, c, m, k, n, accumulate);
}
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  table().matmul_nt(a, b, c, m, k, n, accumulate);
}
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  table().matmul_tn(a, b, c, m, k, n, accumulate);
}

}  // namespace hgrec::kernels
