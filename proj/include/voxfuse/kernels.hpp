#pragma once

#include <cstddef>

// Data-parallel inner loops of the fusion pipeline. Every kernel has a scalar
// reference implementation and an AVX2 variant; which one runs is selected at
// runtime from cpuid (overridable via set_backend or the VOXFUSE_SIMD
// environment variable). The variants are equivalence-tested against each
// other in tests/test_kernels.cpp.

namespace voxfuse::kernels {

enum class Backend { Auto, Scalar, Avx2 };

/// Backend the kernel entry points dispatch to right now.
Backend active_backend();

/// Force a backend. Auto re-runs detection (cpuid + VOXFUSE_SIMD env var,
/// values "scalar" / "avx2"). Throws ContractError if the requested backend
/// is not available on this machine. Not thread-safe against concurrent
/// kernel calls; intended for startup and tests.
void set_backend(Backend b);

/// True when the CPU supports AVX2+FMA and the AVX2 variants were compiled in.
bool avx2_supported();

/// y = W x + b with row-major W (out_dim x in_dim).
void affine_forward(const double* w, const double* b, const double* x,
                    double* y, std::size_t out_dim, std::size_t in_dim);

/// Four-term bilinear combination over a channel vector:
/// out[c] = (1-fv)*((1-fu)*c00[c] + fu*c10[c]) + fv*((1-fu)*c01[c] + fu*c11[c])
void bilinear_mix(const double* c00, const double* c10, const double* c01,
                  const double* c11, double fu, double fv, double* out,
                  std::size_t channels);

/// 2x2 mean pooling of an h x w x c channel-interleaved map into
/// ceil(h/2) x ceil(w/2) x c. Odd borders average the cells that exist.
void avgpool2x2(const double* src, std::size_t h, std::size_t w, std::size_t c,
                double* dst);

/// Perspective projection of n points (xyz interleaved) through a row-major
/// 3x4 matrix. uvd[3i..3i+2] = (X/Z, Y/Z, Z) when Z > eps, else (0, 0, Z).
void project_points(const double* proj, const double* xyz, std::size_t n,
                    double eps, double* uvd);

/// Column means of a rows x cols row-major matrix. rows must be >= 1.
void mean_rows(const double* m, std::size_t rows, std::size_t cols,
               double* out);

namespace detail {

struct Ops {
  void (*affine_forward)(const double*, const double*, const double*, double*,
                         std::size_t, std::size_t);
  void (*bilinear_mix)(const double*, const double*, const double*,
                       const double*, double, double, double*, std::size_t);
  void (*avgpool2x2)(const double*, std::size_t, std::size_t, std::size_t,
                     double*);
  void (*project_points)(const double*, const double*, std::size_t, double,
                         double*);
  void (*mean_rows)(const double*, std::size_t, std::size_t, double*);
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif

}  // namespace detail

}  // namespace voxfuse::kernels
