#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "voxfuse/errors.hpp"
#include "voxfuse/voxel.hpp"

#include "testutil.hpp"

using namespace voxfuse;
using voxel::VoxelGridConfig;
using voxel::VoxelIndex;

namespace {

VoxelGridConfig small_grid() {
  VoxelGridConfig cfg;
  cfg.range_min = {0.0, -8.0, -2.0};
  cfg.range_max = {16.0, 8.0, 2.0};
  cfg.voxel_size = {0.5, 0.5, 0.5};
  cfg.num_scales = 4;
  return cfg;
}

kitti::PointCloud random_cloud(SplitMix64& rng, int n,
                               const VoxelGridConfig& cfg) {
  kitti::PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    kitti::Point p;
    p.x = static_cast<float>(rng.uniform(cfg.range_min.x - 1, cfg.range_max.x + 1));
    p.y = static_cast<float>(rng.uniform(cfg.range_min.y - 1, cfg.range_max.y + 1));
    p.z = static_cast<float>(rng.uniform(cfg.range_min.z - 1, cfg.range_max.z + 1));
    p.intensity = static_cast<float>(rng.uniform(0.0, 1.0));
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace

TEST_CASE("voxelize: single point lands in voxel (0,0,0) with its own feature") {
  const VoxelGridConfig cfg = small_grid();
  kitti::PointCloud cloud;
  cloud.points.push_back({0.25f, -7.75f, -1.75f, 0.25f});
  const auto grid = voxel::voxelize(cloud, cfg);
  REQUIRE(grid.levels[0].count() == 1);
  CHECK(grid.levels[0].indices[0] == VoxelIndex{0, 0, 0});
  const double* f = grid.levels[0].feature(0);
  CHECK(f[0] == doctest::Approx(0.25));
  CHECK(f[1] == doctest::Approx(-7.75));
  CHECK(f[2] == doctest::Approx(-1.75));
  CHECK(f[3] == doctest::Approx(0.25));
}

TEST_CASE("voxelize: two points in one voxel average") {
  const VoxelGridConfig cfg = small_grid();
  kitti::PointCloud cloud;
  cloud.points.push_back({0.10f, 0.10f, 0.10f, 0.2f});
  cloud.points.push_back({0.40f, 0.30f, 0.20f, 0.8f});
  const auto grid = voxel::voxelize(cloud, cfg);
  REQUIRE(grid.levels[0].count() == 1);
  const double* f = grid.levels[0].feature(0);
  CHECK(f[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(f[1] == doctest::Approx(0.20).epsilon(1e-6));
  CHECK(f[2] == doctest::Approx(0.15).epsilon(1e-5));
  CHECK(f[3] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("voxelize: empty cloud gives an empty grid") {
  const auto grid = voxel::voxelize(kitti::PointCloud{}, small_grid());
  CHECK(grid.levels[0].count() == 0);
}

TEST_CASE("voxelize: matches a brute-force bucketing oracle") {
  const VoxelGridConfig cfg = small_grid();
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cloud = random_cloud(rng, 800, cfg);
    voxel::VoxelizeStats stats;
    const auto grid = voxel::voxelize(cloud, cfg, &stats);

    // oracle: naive map bucketing with plain accumulation
    std::map<std::array<int, 3>, std::pair<std::array<double, 4>, int>> oracle;
    const auto ext = cfg.extent(0);
    std::size_t dropped = 0;
    for (const auto& p : cloud.points) {
      const int i = static_cast<int>(std::floor((p.x - cfg.range_min.x) / 0.5));
      const int j = static_cast<int>(std::floor((p.y - cfg.range_min.y) / 0.5));
      const int l = static_cast<int>(std::floor((p.z - cfg.range_min.z) / 0.5));
      if (i < 0 || j < 0 || l < 0 || i >= ext[0] || j >= ext[1] || l >= ext[2]) {
        ++dropped;
        continue;
      }
      auto& [sums, count] = oracle[{i, j, l}];
      sums[0] += p.x;
      sums[1] += p.y;
      sums[2] += p.z;
      sums[3] += p.intensity;
      ++count;
    }
    CHECK(stats.dropped == dropped);
    REQUIRE(grid.levels[0].count() == oracle.size());
    for (std::size_t n = 0; n < grid.levels[0].count(); ++n) {
      const VoxelIndex idx = grid.levels[0].indices[n];
      const auto it = oracle.find({idx.i, idx.j, idx.l});
      REQUIRE(it != oracle.end());
      const double* f = grid.levels[0].feature(n);
      for (int c = 0; c < 4; ++c)
        CHECK(f[c] ==
              doctest::Approx(it->second.first[c] / it->second.second)
                  .epsilon(1e-9));
    }
  }
}

TEST_CASE("voxelize: independent of point order") {
  const VoxelGridConfig cfg = small_grid();
  SplitMix64 rng(31);
  auto cloud = random_cloud(rng, 600, cfg);
  const auto grid_a = voxel::voxelize(cloud, cfg);
  std::reverse(cloud.points.begin(), cloud.points.end());
  const auto grid_b = voxel::voxelize(cloud, cfg);
  REQUIRE(grid_a.levels[0].count() == grid_b.levels[0].count());
  for (std::size_t n = 0; n < grid_a.levels[0].count(); ++n) {
    CHECK(grid_a.levels[0].indices[n] == grid_b.levels[0].indices[n]);
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(std::abs(grid_a.levels[0].feature(n)[c] -
                     grid_b.levels[0].feature(n)[c]) < 1e-9);
  }
}

TEST_CASE("downsample_dilate: empty stays empty") {
  voxel::Level empty;
  empty.channels = 4;
  const auto out = voxel::downsample_dilate(empty, {8, 8, 8});
  CHECK(out.count() == 0);
}

TEST_CASE("downsample_dilate: interior voxel spreads to the 8-cell block") {
  voxel::Level level;
  level.channels = 1;
  level.indices.push_back({4, 4, 4});
  level.features = {2.5};
  const auto out = voxel::downsample_dilate(level, {8, 8, 8});
  REQUIRE(out.count() == 8);
  std::set<std::array<int, 3>> got;
  for (const auto& v : out.indices) got.insert({v.i, v.j, v.l});
  for (int i : {1, 2})
    for (int j : {1, 2})
      for (int l : {1, 2}) CHECK(got.count({i, j, l}) == 1);
  for (std::size_t n = 0; n < out.count(); ++n)
    CHECK(out.feature(n)[0] == doctest::Approx(2.5));
}

TEST_CASE("downsample_dilate: corner voxel cannot leave the grid") {
  voxel::Level level;
  level.channels = 1;
  level.indices.push_back({0, 0, 0});
  level.features = {1.0};
  const auto out = voxel::downsample_dilate(level, {8, 8, 8});
  REQUIRE(out.count() == 1);
  CHECK(out.indices[0] == VoxelIndex{0, 0, 0});
}

TEST_CASE("scales: monotone coverage and dilation growth") {
  const VoxelGridConfig cfg = small_grid();
  SplitMix64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    auto grid = voxel::voxelize(random_cloud(rng, 500, cfg), cfg);
    voxel::build_scales(grid);
    REQUIRE(grid.levels.size() == 4);
    for (int k = 0; k + 1 < 4; ++k) {
      std::set<std::array<int, 3>> next_occ;
      for (const auto& v : grid.levels[k + 1].indices)
        next_occ.insert({v.i, v.j, v.l});
      std::set<std::array<int, 3>> floors;
      for (const auto& v : grid.levels[k].indices) {
        const std::array<int, 3> f{v.i / 2, v.j / 2, v.l / 2};
        floors.insert(f);
        CHECK(next_occ.count(f) == 1);  // monotone coverage
      }
      CHECK(grid.levels[k + 1].count() >= floors.size());  // growth
    }
  }
  // strict growth with an interior occupied voxel
  kitti::PointCloud one;
  one.points.push_back({4.3f, 0.2f, 0.2f, 0.5f});
  auto grid = voxel::voxelize(one, cfg);
  voxel::build_scales(grid);
  CHECK(grid.levels[1].count() > 1);
}

TEST_CASE("voxel_centers: formula cases and in-range property") {
  VoxelGridConfig cfg;
  cfg.range_min = {0.0, -40.0, -3.0};
  cfg.range_max = {70.4, 40.0, 1.0};
  cfg.voxel_size = {0.05, 0.05, 0.1};
  const auto c0 = voxel::voxel_center(cfg, {0, 0, 0}, 0);
  CHECK(c0.x == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(c0.y == doctest::Approx(-39.975).epsilon(1e-12));
  CHECK(c0.z == doctest::Approx(-2.95).epsilon(1e-12));
  const auto c1 = voxel::voxel_center(cfg, {0, 0, 0}, 1);
  CHECK(c1.x == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(c1.y == doctest::Approx(-39.95).epsilon(1e-12));
  CHECK(c1.z == doctest::Approx(-2.9).epsilon(1e-12));

  const VoxelGridConfig small = small_grid();
  SplitMix64 rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    auto grid = voxel::voxelize(random_cloud(rng, 400, small), small);
    voxel::build_scales(grid);
    for (int k = 0; k < 4; ++k) {
      for (const auto& c : voxel::voxel_centers(grid, k)) {
        CHECK(c.x >= small.range_min.x);
        CHECK(c.y >= small.range_min.y);
        CHECK(c.z >= small.range_min.z);
        CHECK(c.x <= small.range_max.x);
        CHECK(c.y <= small.range_max.y);
        CHECK(c.z <= small.range_max.z);
      }
    }
  }
}

TEST_CASE("voxel grid config validation") {
  VoxelGridConfig cfg = small_grid();
  cfg.voxel_size = {0.3, 0.5, 0.5};  // 16/0.3 is not integral
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_grid();
  cfg.num_scales = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_grid();
  cfg.range_max.x = cfg.range_min.x;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}
