// Scalar reference kernels. These define the semantics; the SIMD variants
// must match them (tested to 1e-12 relative in test_kernels.cpp).

#include <cstddef>

#include "voxfuse/kernels.hpp"

namespace voxfuse::kernels {
namespace {

void affine_forward_scalar(const double* w, const double* b, const double* x,
                           double* y, std::size_t out_dim, std::size_t in_dim) {
  for (std::size_t i = 0; i < out_dim; ++i) {
    double acc = 0.0;
    const double* row = w + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * x[j];
    y[i] = acc + b[i];
  }
}

void bilinear_mix_scalar(const double* c00, const double* c10,
                         const double* c01, const double* c11, double fu,
                         double fv, double* out, std::size_t channels) {
  const double w00 = (1.0 - fu) * (1.0 - fv);
  const double w10 = fu * (1.0 - fv);
  const double w01 = (1.0 - fu) * fv;
  const double w11 = fu * fv;
  for (std::size_t c = 0; c < channels; ++c) {
    out[c] = w00 * c00[c] + w10 * c10[c] + w01 * c01[c] + w11 * c11[c];
  }
}

void avgpool2x2_scalar(const double* src, std::size_t h, std::size_t w,
                       std::size_t c, double* dst) {
  const std::size_t hh = (h + 1) / 2;
  const std::size_t ww = (w + 1) / 2;
  for (std::size_t i = 0; i < hh; ++i) {
    for (std::size_t j = 0; j < ww; ++j) {
      const std::size_t i1 = 2 * i;
      const std::size_t j1 = 2 * j;
      const std::size_t ni = (i1 + 1 < h) ? 2 : 1;
      const std::size_t nj = (j1 + 1 < w) ? 2 : 1;
      const double inv = 1.0 / static_cast<double>(ni * nj);
      double* out = dst + (i * ww + j) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t di = 0; di < ni; ++di)
          for (std::size_t dj = 0; dj < nj; ++dj)
            acc += src[((i1 + di) * w + (j1 + dj)) * c + ch];
        out[ch] = acc * inv;
      }
    }
  }
}

void project_points_scalar(const double* p, const double* xyz, std::size_t n,
                           double eps, double* uvd) {
  for (std::size_t i = 0; i < n; ++i) {
    const double x = xyz[3 * i + 0];
    const double y = xyz[3 * i + 1];
    const double z = xyz[3 * i + 2];
    const double a = p[0] * x + p[1] * y + p[2] * z + p[3];
    const double b = p[4] * x + p[5] * y + p[6] * z + p[7];
    const double d = p[8] * x + p[9] * y + p[10] * z + p[11];
    if (d > eps) {
      uvd[3 * i + 0] = a / d;
      uvd[3 * i + 1] = b / d;
    } else {
      uvd[3 * i + 0] = 0.0;
      uvd[3 * i + 1] = 0.0;
    }
    uvd[3 * i + 2] = d;
  }
}

void mean_rows_scalar(const double* m, std::size_t rows, std::size_t cols,
                      double* out) {
  for (std::size_t c = 0; c < cols; ++c) out[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t c = 0; c < cols; ++c) out[c] *= inv;
}

}  // namespace

namespace detail {

const Ops& scalar_ops() {
  static const Ops ops = {affine_forward_scalar, bilinear_mix_scalar,
                          avgpool2x2_scalar, project_points_scalar,
                          mean_rows_scalar};
  return ops;
}

}  // namespace detail
}  // namespace voxfuse::kernels
