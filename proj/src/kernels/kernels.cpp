// Runtime backend selection for the SIMD kernels.

#include "voxfuse/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "voxfuse/errors.hpp"

namespace voxfuse::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const detail::Ops* pick(Backend b) {
  if (b == Backend::Auto) {
    b = Backend::Scalar;
    if (cpu_has_avx2()) b = Backend::Avx2;
    if (const char* env = std::getenv("VOXFUSE_SIMD")) {
      if (std::strcmp(env, "scalar") == 0) b = Backend::Scalar;
      if (std::strcmp(env, "avx2") == 0) b = Backend::Avx2;
    }
  }
  if (b == Backend::Avx2) {
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) return &detail::avx2_ops();
#endif
    throw ContractError("kernels: AVX2 backend not available on this machine");
  }
  return &detail::scalar_ops();
}

std::atomic<const detail::Ops*>& ops_slot() {
  static std::atomic<const detail::Ops*> slot{pick(Backend::Auto)};
  return slot;
}

const detail::Ops& ops() { return *ops_slot().load(std::memory_order_relaxed); }

}  // namespace

Backend active_backend() {
#if defined(__x86_64__) || defined(_M_X64)
  if (ops_slot().load() == &detail::avx2_ops()) return Backend::Avx2;
#endif
  return Backend::Scalar;
}

void set_backend(Backend b) { ops_slot().store(pick(b)); }

bool avx2_supported() { return cpu_has_avx2(); }

void affine_forward(const double* w, const double* b, const double* x,
                    double* y, std::size_t out_dim, std::size_t in_dim) {
  ops().affine_forward(w, b, x, y, out_dim, in_dim);
}

void bilinear_mix(const double* c00, const double* c10, const double* c01,
                  const double* c11, double fu, double fv, double* out,
                  std::size_t channels) {
  ops().bilinear_mix(c00, c10, c01, c11, fu, fv, out, channels);
}

void avgpool2x2(const double* src, std::size_t h, std::size_t w, std::size_t c,
                double* dst) {
  ops().avgpool2x2(src, h, w, c, dst);
}

void project_points(const double* proj, const double* xyz, std::size_t n,
                    double eps, double* uvd) {
  ops().project_points(proj, xyz, n, eps, uvd);
}

void mean_rows(const double* m, std::size_t rows, std::size_t cols,
               double* out) {
  ops().mean_rows(m, rows, cols, out);
}

}  // namespace voxfuse::kernels
