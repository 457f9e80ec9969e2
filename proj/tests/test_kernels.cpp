#include <doctest.h>

#include <cmath>
#include <vector>

#include "voxfuse/errors.hpp"
#include "voxfuse/kernels.hpp"
#include "voxfuse/rng.hpp"

#include "testutil.hpp"

using namespace voxfuse;
namespace k = voxfuse::kernels;

namespace {

std::vector<double> random_vec(SplitMix64& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b,
                 double rel = 1e-12) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1.0});
    CHECK(std::abs(a[i] - b[i]) <= rel * scale);
  }
}

// Runs fn under both backends and checks the outputs agree.
template <typename Fn>
void equivalence(Fn&& fn) {
  if (!k::avx2_supported()) return;  // scalar-only machine: nothing to compare
  k::set_backend(k::Backend::Scalar);
  const std::vector<double> scalar = fn();
  k::set_backend(k::Backend::Avx2);
  const std::vector<double> simd = fn();
  k::set_backend(k::Backend::Auto);
  check_close(scalar, simd);
}

}  // namespace

TEST_CASE("kernels: backend selection") {
  k::set_backend(k::Backend::Scalar);
  CHECK(k::active_backend() == k::Backend::Scalar);
  if (k::avx2_supported()) {
    k::set_backend(k::Backend::Avx2);
    CHECK(k::active_backend() == k::Backend::Avx2);
  } else {
    CHECK_THROWS_AS(k::set_backend(k::Backend::Avx2), ContractError);
  }
  k::set_backend(k::Backend::Auto);
}

TEST_CASE("kernels: affine_forward equivalence over odd shapes") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto out_dim = static_cast<std::size_t>(rng.uniform_int(1, 33));
    const auto in_dim = static_cast<std::size_t>(rng.uniform_int(1, 70));
    const auto w = random_vec(rng, out_dim * in_dim);
    const auto b = random_vec(rng, out_dim);
    const auto x = random_vec(rng, in_dim);
    equivalence([&] {
      std::vector<double> y(out_dim);
      k::affine_forward(w.data(), b.data(), x.data(), y.data(), out_dim,
                        in_dim);
      return y;
    });
  }
}

TEST_CASE("kernels: affine_forward matches a plain loop") {
  SplitMix64 rng(12);
  const std::size_t out_dim = 5, in_dim = 13;
  const auto w = random_vec(rng, out_dim * in_dim);
  const auto b = random_vec(rng, out_dim);
  const auto x = random_vec(rng, in_dim);
  std::vector<double> y(out_dim);
  k::affine_forward(w.data(), b.data(), x.data(), y.data(), out_dim, in_dim);
  for (std::size_t i = 0; i < out_dim; ++i) {
    double want = b[i];
    for (std::size_t j = 0; j < in_dim; ++j) want += w[i * in_dim + j] * x[j];
    CHECK(y[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("kernels: bilinear_mix equivalence and exact corners") {
  SplitMix64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const auto c = static_cast<std::size_t>(rng.uniform_int(1, 19));
    const auto c00 = random_vec(rng, c);
    const auto c10 = random_vec(rng, c);
    const auto c01 = random_vec(rng, c);
    const auto c11 = random_vec(rng, c);
    const double fu = rng.uniform(), fv = rng.uniform();
    equivalence([&] {
      std::vector<double> out(c);
      k::bilinear_mix(c00.data(), c10.data(), c01.data(), c11.data(), fu, fv,
                      out.data(), c);
      return out;
    });
    // corner weights collapse to a single cell
    std::vector<double> out(c);
    k::bilinear_mix(c00.data(), c10.data(), c01.data(), c11.data(), 0.0, 0.0,
                    out.data(), c);
    check_close(out, c00, 0.0);
    k::bilinear_mix(c00.data(), c10.data(), c01.data(), c11.data(), 1.0, 1.0,
                    out.data(), c);
    check_close(out, c11, 0.0);
  }
}

TEST_CASE("kernels: avgpool2x2 equivalence incl. odd borders") {
  SplitMix64 rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 17));
    const auto w = static_cast<std::size_t>(rng.uniform_int(1, 17));
    const auto c = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const auto src = random_vec(rng, h * w * c);
    equivalence([&] {
      std::vector<double> dst(((h + 1) / 2) * ((w + 1) / 2) * c);
      k::avgpool2x2(src.data(), h, w, c, dst.data());
      return dst;
    });
  }
}

TEST_CASE("kernels: project_points equivalence and behind-camera handling") {
  SplitMix64 rng(15);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 65));
    const auto proj = random_vec(rng, 12);
    auto xyz = random_vec(rng, 3 * n, -10.0, 10.0);
    equivalence([&] {
      std::vector<double> uvd(3 * n);
      k::project_points(proj.data(), xyz.data(), n, 1e-6, uvd.data());
      return uvd;
    });
  }
  // depth at or below eps produces no division
  const std::vector<double> pinhole = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  const std::vector<double> pts = {1.0, 2.0, -3.0};
  std::vector<double> uvd(3);
  k::project_points(pinhole.data(), pts.data(), 1, 1e-6, uvd.data());
  CHECK(uvd[0] == 0.0);
  CHECK(uvd[1] == 0.0);
  CHECK(uvd[2] == -3.0);
}

TEST_CASE("kernels: mean_rows equivalence") {
  SplitMix64 rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 12));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(1, 23));
    const auto m = random_vec(rng, rows * cols);
    equivalence([&] {
      std::vector<double> out(cols);
      k::mean_rows(m.data(), rows, cols, out.data());
      return out;
    });
  }
}
