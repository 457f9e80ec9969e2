#pragma once

#include <filesystem>
#include <vector>

#include "voxfuse/kitti.hpp"

namespace voxfuse::img {

/// One pyramid level. data is height x width x channels, row-major,
/// channel-interleaved. stride is the input-image pixels per cell (2^level);
/// cell (i, j) is centered at ((j + 0.5) * stride, (i + 0.5) * stride) in
/// input-image coordinates.
struct FeatureMap {
  int height = 0, width = 0, channels = 0, stride = 1;
  std::vector<double> data;

  double at(int i, int j, int c) const {
    return data[(static_cast<std::size_t>(i) * width + j) * channels + c];
  }
  const double* cell(int i, int j) const {
    return data.data() + (static_cast<std::size_t>(i) * width + j) * channels;
  }
};

/// Multi-resolution stack; levels[0] is the finest. Every level halves height
/// and width (ceiling division) and shares the channel count.
struct FeaturePyramid {
  std::vector<FeatureMap> levels;
  int source_height = 0, source_width = 0;

  const FeatureMap& finest() const { return levels.front(); }
};

inline constexpr int kPyramidChannels = 6;

/// Procedural feature extractor standing in for a learned backbone. Level 0
/// has per-pixel channels [R, G, B, gray, |dgray/du|, |dgray/dv|], all scaled
/// to [0, 1] (gray is the RGB mean; gradients are Sobel responses over the
/// replicated border, normalized by the kernel's maximum response). Coarser
/// levels are built by repeated 2x2 average pooling. Requires height and
/// width >= 2.
FeaturePyramid build_pyramid(const kitti::ImageRaster& image,
                             int num_levels = 5);

/// 2x2 mean pooling to the next level (ceiling dims, stride doubled).
FeatureMap avgpool_half(const FeatureMap& map);

/// Samples a map at input-image coordinates (u, v): converts to cell
/// coordinates ((u, v)/stride - 0.5), clamps into the cell grid, and
/// bilinearly interpolates the 4 surrounding cells per channel. Total for any
/// finite input (out-of-bounds queries replicate the border).
std::vector<double> bilinear_sample(const FeatureMap& map, double u, double v);
void bilinear_sample_into(const FeatureMap& map, double u, double v,
                          double* out);

/// Feature-tensor file exchange: 16-byte header of little-endian uint32
/// (height, width, channels, level), then height*width*channels little-endian
/// float32 values. stride is reconstructed as 2^level.
FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const FeatureMap& map,
                      const std::filesystem::path& path);

/// Assembles an externally computed pyramid from per-level tensor files
/// (sorted by level; levels must chain by ceiling halving and share channels).
FeaturePyramid pyramid_from_files(
    const std::vector<std::filesystem::path>& paths);

}  // namespace voxfuse::img
