#include <cstdlib>
#include <stdexcept>
#include <string>

#include "cathnav/kernels.hpp"

namespace cathnav::kernels {

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t);
using AxpyFn = void (*)(double, const double*, double*, std::size_t);

struct Table {
  Backend backend;
  DotFn dot;
  AxpyFn axpy;
};

Table make(Backend b) {
  if (b == Backend::Avx2) return {b, dot_avx2, axpy_avx2};
  return {b, dot_scalar, axpy_scalar};
}

Table initial() {
  const char* force = std::getenv("CATHNAV_SIMD");
  if (force && std::string(force) == "scalar") return make(Backend::Scalar);
  return make(avx2_available() ? Backend::Avx2 : Backend::Scalar);
}

Table& table() {
  static Table t = initial();
  return t;
}

}  // namespace

const char* to_string(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return table().backend; }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_available()) throw std::runtime_error("AVX2/FMA not supported on this CPU");
  table() = make(b);
}

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }

}  // namespace cathnav::kernels
