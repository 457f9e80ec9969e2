#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voxfuse/geom.hpp"
#include "voxfuse/image_features.hpp"
#include "voxfuse/nn.hpp"
#include "voxfuse/voxel.hpp"

namespace voxfuse::fusion {

/// Per-scale result of voxel-image fusion. fused keeps the voxel channel
/// count; image_feats holds the sampled per-voxel image features (zeros when
/// the projection missed the image); valid flags projections that landed on
/// the image in front of the camera.
struct FusedLevel {
  std::size_t channels = 0;        // == voxel channels at this scale
  std::size_t image_channels = 0;  // == pyramid channels
  std::vector<double> fused;       // count x channels
  std::vector<double> image_feats; // count x image_channels
  std::vector<std::uint8_t> valid; // count

  std::size_t count() const { return valid.size(); }
};

struct FusedGrid {
  std::vector<FusedLevel> levels;
};

/// Fuses one scale: every occupied voxel's center is projected onto the image
/// plane; voxels that land on the image sample the finest pyramid level
/// bilinearly, the rest get a zero image-feature vector; the fusion net maps
/// concat(voxel_feature, image_feature) back to the voxel channel width.
/// Requires net input dim = C_k + pyramid channels and output dim = C_k.
FusedLevel fuse_scale(const voxel::SparseVoxelGrid& grid, int scale,
                      const img::FeaturePyramid& pyramid,
                      const geom::CalibrationSet& calib,
                      const nn::DenseNet& net);

/// fuse_scale over every built scale with a shared fusion net (the voxel
/// channel count is constant across scales here, so one net suffices).
FusedGrid fuse_all(const voxel::SparseVoxelGrid& grid,
                   const img::FeaturePyramid& pyramid,
                   const geom::CalibrationSet& calib, const nn::DenseNet& net);

/// Per-scale fusion nets, one per built scale.
FusedGrid fuse_all(const voxel::SparseVoxelGrid& grid,
                   const img::FeaturePyramid& pyramid,
                   const geom::CalibrationSet& calib,
                   std::span<const nn::DenseNet> nets);

/// How many distinct image positions the voxel centers of each scale hit,
/// and cumulatively across scales 0..k. Positions behind the camera or off
/// the image do not count.
struct CoverageStats {
  std::vector<std::size_t> per_scale;
  std::vector<std::size_t> cumulative;
};

CoverageStats sample_coverage(const voxel::SparseVoxelGrid& grid,
                              const geom::CalibrationSet& calib, int image_w,
                              int image_h);

}  // namespace voxfuse::fusion
