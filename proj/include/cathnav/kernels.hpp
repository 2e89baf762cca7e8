#pragma once

#include <cstddef>

// Dense double-precision primitives behind the network layers. Each has a
// scalar reference and an AVX2/FMA variant; the active one is picked once at
// startup from the CPU flags (CATHNAV_SIMD=scalar forces the reference).
namespace cathnav::kernels {

enum class Backend { Scalar, Avx2 };

const char* to_string(Backend b);
bool avx2_available();
Backend active_backend();
// Throws std::runtime_error if the backend is not supported on this CPU.
void set_backend(Backend b);

double dot(const double* a, const double* b, std::size_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);

}  // namespace cathnav::kernels
