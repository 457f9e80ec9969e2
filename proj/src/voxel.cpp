#include "voxfuse/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "voxfuse/errors.hpp"

namespace voxfuse::voxel {

namespace {

// Packs a voxel index into a hash key. Extents stay far below 2^21 per axis.
std::uint64_t pack(const VoxelIndex& v) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.i)) << 42) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.j) & 0x1fffff)
          << 21) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.l) & 0x1fffff));
}

struct KahanAccumulator {
  std::array<double, 4> sum{};
  std::array<double, 4> comp{};
  std::size_t count = 0;

  void add(const std::array<double, 4>& v) {
    for (int c = 0; c < 4; ++c) {
      const double y = v[c] - comp[c];
      const double t = sum[c] + y;
      comp[c] = (t - sum[c]) - y;
      sum[c] = t;
    }
    ++count;
  }
};

}  // namespace

void VoxelGridConfig::validate() const {
  if (!(range_max.x > range_min.x && range_max.y > range_min.y &&
        range_max.z > range_min.z))
    throw ContractError("voxel grid: range_max must exceed range_min");
  if (!(voxel_size.x > 0.0 && voxel_size.y > 0.0 && voxel_size.z > 0.0))
    throw ContractError("voxel grid: voxel_size must be positive");
  if (num_scales < 1)
    throw ContractError("voxel grid: num_scales must be at least 1");
  const double ex = (range_max.x - range_min.x) / voxel_size.x;
  const double ey = (range_max.y - range_min.y) / voxel_size.y;
  const double ez = (range_max.z - range_min.z) / voxel_size.z;
  for (double e : {ex, ey, ez}) {
    if (std::abs(e - std::round(e)) > 1e-6)
      throw ContractError("voxel grid: extents must be integral at scale 0");
  }
}

std::array<int, 3> VoxelGridConfig::extent(int scale) const {
  std::array<int, 3> e{
      static_cast<int>(std::round((range_max.x - range_min.x) / voxel_size.x)),
      static_cast<int>(std::round((range_max.y - range_min.y) / voxel_size.y)),
      static_cast<int>(std::round((range_max.z - range_min.z) / voxel_size.z))};
  for (int s = 0; s < scale; ++s)
    for (int a = 0; a < 3; ++a) e[a] = (e[a] + 1) / 2;
  return e;
}

SparseVoxelGrid voxelize(const kitti::PointCloud& cloud,
                         const VoxelGridConfig& cfg, VoxelizeStats* stats) {
  cfg.validate();
  const auto ext = cfg.extent(0);
  std::unordered_map<std::uint64_t, KahanAccumulator> buckets;
  buckets.reserve(cloud.size());
  VoxelizeStats local;
  for (const kitti::Point& p : cloud.points) {
    const double fx = (p.x - cfg.range_min.x) / cfg.voxel_size.x;
    const double fy = (p.y - cfg.range_min.y) / cfg.voxel_size.y;
    const double fz = (p.z - cfg.range_min.z) / cfg.voxel_size.z;
    const int i = static_cast<int>(std::floor(fx));
    const int j = static_cast<int>(std::floor(fy));
    const int l = static_cast<int>(std::floor(fz));
    if (i < 0 || j < 0 || l < 0 || i >= ext[0] || j >= ext[1] || l >= ext[2]) {
      ++local.dropped;
      continue;
    }
    ++local.used;
    buckets[pack({i, j, l})].add({p.x, p.y, p.z, p.intensity});
  }

  std::vector<std::pair<VoxelIndex, const KahanAccumulator*>> cells;
  cells.reserve(buckets.size());
  for (const auto& [key, acc] : buckets) {
    cells.push_back({VoxelIndex{static_cast<int>(key >> 42),
                                static_cast<int>((key >> 21) & 0x1fffff),
                                static_cast<int>(key & 0x1fffff)},
                     &acc});
  }
  std::sort(cells.begin(), cells.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  SparseVoxelGrid grid;
  grid.config = cfg;
  grid.levels.resize(1);
  Level& level = grid.levels[0];
  level.channels = 4;
  level.indices.reserve(cells.size());
  level.features.reserve(cells.size() * 4);
  for (const auto& [idx, acc] : cells) {
    level.indices.push_back(idx);
    const double inv = 1.0 / static_cast<double>(acc->count);
    for (int c = 0; c < 4; ++c) level.features.push_back(acc->sum[c] * inv);
  }
  if (stats) *stats = local;
  return grid;
}

Level downsample_dilate(const Level& level,
                        const std::array<int, 3>& next_extent) {
  struct Accum {
    std::vector<double> sum;
    std::size_t count = 0;
  };
  std::unordered_map<std::uint64_t, Accum> targets;
  targets.reserve(level.count() * 2);

  auto floor_div2 = [](int v) { return (v >= 0) ? v / 2 : (v - 1) / 2; };

  for (std::size_t n = 0; n < level.count(); ++n) {
    const VoxelIndex& v = level.indices[n];
    // Distinct per-axis targets of floor((v + d)/2), d in {-1,0,1}: at most 2.
    std::array<std::array<int, 2>, 3> axis{};
    std::array<int, 3> axis_n{};
    const std::array<int, 3> comps{v.i, v.j, v.l};
    for (int a = 0; a < 3; ++a) {
      int prev = INT32_MIN;
      for (int d = -1; d <= 1; ++d) {
        const int t = floor_div2(comps[a] + d);
        if (t == prev) continue;
        if (t < 0 || t >= next_extent[a]) {
          prev = t;
          continue;
        }
        axis[a][axis_n[a]++] = t;
        prev = t;
      }
    }
    const double* feat = level.feature(n);
    for (int ai = 0; ai < axis_n[0]; ++ai) {
      for (int aj = 0; aj < axis_n[1]; ++aj) {
        for (int al = 0; al < axis_n[2]; ++al) {
          const VoxelIndex t{axis[0][ai], axis[1][aj], axis[2][al]};
          Accum& acc = targets[pack(t)];
          if (acc.sum.empty()) acc.sum.assign(level.channels, 0.0);
          for (std::size_t c = 0; c < level.channels; ++c)
            acc.sum[c] += feat[c];
          ++acc.count;
        }
      }
    }
  }

  std::vector<std::uint64_t> keys;
  keys.reserve(targets.size());
  for (const auto& [key, _] : targets) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  Level out;
  out.channels = level.channels;
  out.indices.reserve(keys.size());
  out.features.reserve(keys.size() * level.channels);
  for (const std::uint64_t key : keys) {
    out.indices.push_back(VoxelIndex{static_cast<int>(key >> 42),
                                     static_cast<int>((key >> 21) & 0x1fffff),
                                     static_cast<int>(key & 0x1fffff)});
    const Accum& acc = targets.at(key);
    const double inv = 1.0 / static_cast<double>(acc.count);
    for (std::size_t c = 0; c < out.channels; ++c)
      out.features.push_back(acc.sum[c] * inv);
  }
  return out;
}

void build_scales(SparseVoxelGrid& grid) {
  grid.levels.resize(1);
  for (int k = 1; k < grid.config.num_scales; ++k) {
    grid.levels.push_back(
        downsample_dilate(grid.levels[k - 1], grid.config.extent(k)));
  }
}

geom::Vec3 voxel_center(const VoxelGridConfig& cfg, const VoxelIndex& idx,
                        int scale) {
  const double s = static_cast<double>(1 << scale);
  return {cfg.range_min.x + (idx.i + 0.5) * cfg.voxel_size.x * s,
          cfg.range_min.y + (idx.j + 0.5) * cfg.voxel_size.y * s,
          cfg.range_min.z + (idx.l + 0.5) * cfg.voxel_size.z * s};
}

std::vector<geom::Vec3> voxel_centers(const SparseVoxelGrid& grid, int scale) {
  if (scale < 0 || scale >= static_cast<int>(grid.levels.size()))
    throw ContractError("voxel grid: scale " + std::to_string(scale) +
                        " does not exist");
  const Level& level = grid.levels[scale];
  std::vector<geom::Vec3> out;
  out.reserve(level.count());
  for (const VoxelIndex& idx : level.indices)
    out.push_back(voxel_center(grid.config, idx, scale));
  return out;
}

}  // namespace voxfuse::voxel
