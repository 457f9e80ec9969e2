#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "voxfuse/geom.hpp"
#include "voxfuse/kitti.hpp"

namespace voxfuse::voxel {

struct VoxelGridConfig {
  geom::Vec3 range_min{0.0, -40.0, -3.0};
  geom::Vec3 range_max{70.4, 40.0, 1.0};
  geom::Vec3 voxel_size{0.05, 0.05, 0.1};  // scale-0 size
  int num_scales = 4;

  /// Throws ContractError unless range_max > range_min, voxel_size > 0,
  /// 1 <= num_scales, and the scale-0 extents come out integral.
  void validate() const;

  /// Grid extents at a scale; ceil-halved per scale (the output support of a
  /// stride-2, kernel-3, pad-1 convolution).
  std::array<int, 3> extent(int scale) const;
};

struct VoxelIndex {
  int i = 0, j = 0, l = 0;  // along x, y, z

  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

/// Occupied voxels of one scale. Indices are sorted lexicographically and
/// unique; features is an indices.size() x channels row-major matrix.
struct Level {
  std::vector<VoxelIndex> indices;
  std::vector<double> features;
  std::size_t channels = 0;

  std::size_t count() const { return indices.size(); }
  const double* feature(std::size_t n) const {
    return features.data() + n * channels;
  }
};

struct SparseVoxelGrid {
  VoxelGridConfig config;
  std::vector<Level> levels;
};

struct VoxelizeStats {
  std::size_t used = 0;
  std::size_t dropped = 0;  // points outside the range, dropped silently
};

/// Scale-0 occupancy and features. A voxel is occupied when it contains at
/// least one in-range point; its feature is the mean of the points'
/// (x, y, z, intensity), accumulated with compensated summation so the result
/// does not depend on point order. Produces a grid with only level 0 filled.
SparseVoxelGrid voxelize(const kitti::PointCloud& cloud,
                         const VoxelGridConfig& cfg,
                         VoxelizeStats* stats = nullptr);

/// Occupancy of scale k+1 from scale k: every occupied voxel v spreads to
/// floor((v + d) / 2) for d in {-1,0,1}^3, intersected with the next scale's
/// extents, the output support of a 3x3x3 stride-2 regular sparse
/// convolution. Features are the mean over contributing source voxels
/// (channel count is preserved).
Level downsample_dilate(const Level& level,
                        const std::array<int, 3>& next_extent);

/// Fills levels 1..num_scales-1 by repeated downsample_dilate.
void build_scales(SparseVoxelGrid& grid);

geom::Vec3 voxel_center(const VoxelGridConfig& cfg, const VoxelIndex& idx,
                        int scale);

/// Centers of all occupied voxels at a scale:
/// range_min + (index + 0.5) * voxel_size * 2^scale.
std::vector<geom::Vec3> voxel_centers(const SparseVoxelGrid& grid, int scale);

}  // namespace voxfuse::voxel
