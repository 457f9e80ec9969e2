// AVX2 variants of the kernels. Compiled with -mavx2 -mfma on x86-64 only and
// reached exclusively through the runtime dispatcher, so no AVX2 instruction
// executes on machines without support.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstddef>

#include "voxfuse/kernels.hpp"

namespace voxfuse::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

void affine_forward_avx2(const double* w, const double* b, const double* x,
                         double* y, std::size_t out_dim, std::size_t in_dim) {
  const std::size_t vec_end = in_dim & ~std::size_t{3};
  for (std::size_t i = 0; i < out_dim; ++i) {
    const double* row = w + i * in_dim;
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j < vec_end; j += 4) {
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(row + j), _mm256_loadu_pd(x + j),
                            acc);
    }
    double sum = hsum(acc);
    for (; j < in_dim; ++j) sum += row[j] * x[j];
    y[i] = sum + b[i];
  }
}

void bilinear_mix_avx2(const double* c00, const double* c10, const double* c01,
                       const double* c11, double fu, double fv, double* out,
                       std::size_t channels) {
  const double w00 = (1.0 - fu) * (1.0 - fv);
  const double w10 = fu * (1.0 - fv);
  const double w01 = (1.0 - fu) * fv;
  const double w11 = fu * fv;
  const __m256d v00 = _mm256_set1_pd(w00);
  const __m256d v10 = _mm256_set1_pd(w10);
  const __m256d v01 = _mm256_set1_pd(w01);
  const __m256d v11 = _mm256_set1_pd(w11);
  const std::size_t vec_end = channels & ~std::size_t{3};
  std::size_t c = 0;
  for (; c < vec_end; c += 4) {
    __m256d acc = _mm256_mul_pd(v00, _mm256_loadu_pd(c00 + c));
    acc = _mm256_fmadd_pd(v10, _mm256_loadu_pd(c10 + c), acc);
    acc = _mm256_fmadd_pd(v01, _mm256_loadu_pd(c01 + c), acc);
    acc = _mm256_fmadd_pd(v11, _mm256_loadu_pd(c11 + c), acc);
    _mm256_storeu_pd(out + c, acc);
  }
  for (; c < channels; ++c) {
    out[c] = w00 * c00[c] + w10 * c10[c] + w01 * c01[c] + w11 * c11[c];
  }
}

void avgpool2x2_avx2(const double* src, std::size_t h, std::size_t w,
                     std::size_t c, double* dst) {
  const std::size_t hh = (h + 1) / 2;
  const std::size_t ww = (w + 1) / 2;
  const std::size_t vec_end = c & ~std::size_t{3};
  for (std::size_t i = 0; i < hh; ++i) {
    for (std::size_t j = 0; j < ww; ++j) {
      const std::size_t i1 = 2 * i;
      const std::size_t j1 = 2 * j;
      const std::size_t ni = (i1 + 1 < h) ? 2 : 1;
      const std::size_t nj = (j1 + 1 < w) ? 2 : 1;
      const double inv = 1.0 / static_cast<double>(ni * nj);
      const __m256d vinv = _mm256_set1_pd(inv);
      double* out = dst + (i * ww + j) * c;
      std::size_t ch = 0;
      for (; ch < vec_end; ch += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t di = 0; di < ni; ++di)
          for (std::size_t dj = 0; dj < nj; ++dj)
            acc = _mm256_add_pd(
                acc,
                _mm256_loadu_pd(src + ((i1 + di) * w + (j1 + dj)) * c + ch));
        _mm256_storeu_pd(out + ch, _mm256_mul_pd(acc, vinv));
      }
      for (; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t di = 0; di < ni; ++di)
          for (std::size_t dj = 0; dj < nj; ++dj)
            acc += src[((i1 + di) * w + (j1 + dj)) * c + ch];
        out[ch] = acc * inv;
      }
    }
  }
}

// Four points per iteration: deinterleave xyz into X/Y/Z lanes, run the
// three matrix rows as FMA chains, and divide 4-wide. Behind-camera lanes
// (depth <= eps) get their u, v masked to zero, matching the scalar kernel.
void project_points_avx2(const double* p, const double* xyz, std::size_t n,
                         double eps, double* uvd) {
  const std::size_t vec_end = n & ~std::size_t{3};
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d m0 = _mm256_set1_pd(p[0]), m1 = _mm256_set1_pd(p[1]),
                m2 = _mm256_set1_pd(p[2]), m3 = _mm256_set1_pd(p[3]);
  const __m256d m4 = _mm256_set1_pd(p[4]), m5 = _mm256_set1_pd(p[5]),
                m6 = _mm256_set1_pd(p[6]), m7 = _mm256_set1_pd(p[7]);
  const __m256d m8 = _mm256_set1_pd(p[8]), m9 = _mm256_set1_pd(p[9]),
                m10 = _mm256_set1_pd(p[10]), m11 = _mm256_set1_pd(p[11]);
  for (std::size_t i = 0; i < vec_end; i += 4) {
    const __m256d p0 = _mm256_loadu_pd(xyz + 3 * i);      // x0 y0 z0 x1
    const __m256d p1 = _mm256_loadu_pd(xyz + 3 * i + 4);  // y1 z1 x2 y2
    const __m256d p2 = _mm256_loadu_pd(xyz + 3 * i + 8);  // z2 x3 y3 z3
    const __m256d t0 = _mm256_permute2f128_pd(p0, p1, 0x30);  // x0 y0 x2 y2
    const __m256d t1 = _mm256_permute2f128_pd(p0, p2, 0x21);  // z0 x1 z2 x3
    const __m256d t2 = _mm256_permute2f128_pd(p1, p2, 0x30);  // y1 z1 y3 z3
    const __m256d x = _mm256_shuffle_pd(t0, t1, 0b1010);
    const __m256d y = _mm256_shuffle_pd(t0, t2, 0b0101);
    const __m256d z = _mm256_shuffle_pd(t1, t2, 0b1010);

    __m256d a = _mm256_fmadd_pd(m0, x, m3);
    a = _mm256_fmadd_pd(m1, y, a);
    a = _mm256_fmadd_pd(m2, z, a);
    __m256d b = _mm256_fmadd_pd(m4, x, m7);
    b = _mm256_fmadd_pd(m5, y, b);
    b = _mm256_fmadd_pd(m6, z, b);
    __m256d d = _mm256_fmadd_pd(m8, x, m11);
    d = _mm256_fmadd_pd(m9, y, d);
    d = _mm256_fmadd_pd(m10, z, d);

    const __m256d front = _mm256_cmp_pd(d, veps, _CMP_GT_OQ);
    const __m256d u = _mm256_and_pd(_mm256_div_pd(a, d), front);
    const __m256d v = _mm256_and_pd(_mm256_div_pd(b, d), front);

    // interleave back into (u, v, d) triples
    const __m256d s0 = _mm256_shuffle_pd(u, v, 0b0000);  // u0 v0 u2 v2
    const __m256d s1 = _mm256_shuffle_pd(d, u, 0b1010);  // d0 u1 d2 u3
    const __m256d s2 = _mm256_shuffle_pd(v, d, 0b1111);  // v1 d1 v3 d3
    _mm256_storeu_pd(uvd + 3 * i, _mm256_permute2f128_pd(s0, s1, 0x20));
    _mm256_storeu_pd(uvd + 3 * i + 4, _mm256_permute2f128_pd(s2, s0, 0x30));
    _mm256_storeu_pd(uvd + 3 * i + 8, _mm256_permute2f128_pd(s1, s2, 0x31));
  }
  for (std::size_t i = vec_end; i < n; ++i) {
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

void mean_rows_avx2(const double* m, std::size_t rows, std::size_t cols,
                    double* out) {
  const std::size_t vec_end = cols & ~std::size_t{3};
  std::size_t c = 0;
  for (; c < vec_end; c += 4) _mm256_storeu_pd(out + c, _mm256_setzero_pd());
  for (; c < cols; ++c) out[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    c = 0;
    for (; c < vec_end; c += 4) {
      _mm256_storeu_pd(
          out + c,
          _mm256_add_pd(_mm256_loadu_pd(out + c), _mm256_loadu_pd(row + c)));
    }
    for (; c < cols; ++c) out[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  const __m256d vinv = _mm256_set1_pd(inv);
  c = 0;
  for (; c < vec_end; c += 4)
    _mm256_storeu_pd(out + c, _mm256_mul_pd(_mm256_loadu_pd(out + c), vinv));
  for (; c < cols; ++c) out[c] *= inv;
}

}  // namespace

namespace detail {

const Ops& avx2_ops() {
  static const Ops ops = {affine_forward_avx2, bilinear_mix_avx2,
                          avgpool2x2_avx2, project_points_avx2, mean_rows_avx2};
  return ops;
}

}  // namespace detail
}  // namespace voxfuse::kernels

#endif  // x86-64
