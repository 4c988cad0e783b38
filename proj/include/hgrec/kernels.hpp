#pragma once

#include <cstddef>
#include <string>

// Dense f64 kernels behind the tensor engine. Every primitive has a scalar
// reference implementation and, where the hardware supports it, an AVX2/FMA
// variant. The backend is chosen once at startup from CPUID and can be
// overridden (tests run both and compare).
namespace hgrec::kernels {

enum class Backend { Scalar, Avx2 };

bool cpu_has_avx2();
Backend best_backend();
Backend active_backend();
void set_backend(Backend b);  // throws if b is unsupported on this CPU
std::string backend_name(Backend b);

// Elementwise; out may alias a or b.
void add(double* out, const double* a, const double* b, std::size_t n);
void sub(double* out, const double* a, const double* b, std::size_t n);
void mul(double* out, const double* a, const double* b, std::size_t n);
void scale(double* out, const double* x, double alpha, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);

void relu(double* out, const double* x, std::size_t n);
void leaky_relu(double* out, const double* x, double slope, std::size_t n);
// dx += g * d(activation)/dx, slope at 0 taken from the positive side
void relu_grad_acc(double* dx, const double* x, const double* g, std::size_t n);
void leaky_relu_grad_acc(double* dx, const double* x, const double* g,
                         double slope, std::size_t n);

// C (m x n) = A (m x k) * B (k x n); accumulate adds into C instead of overwriting.
void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
// C (m x n) = A (m x k) * B^T, B stored (n x k)
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);
// C (m x n) = A^T * B, A stored (k x m), B (k x n)
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate);

}  // namespace hgrec::kernels
