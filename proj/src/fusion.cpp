#include "voxfuse/fusion.hpp"

#include <set>
#include <utility>

#include "voxfuse/errors.hpp"
#include "voxfuse/kernels.hpp"

namespace voxfuse::fusion {

namespace {

// Voxel centers of one scale projected in a single batch through the
// data-parallel kernel. uvd holds (u, v, depth) triples.
std::vector<double> project_centers(const voxel::SparseVoxelGrid& grid,
                                    int scale, const geom::Mat34& proj) {
  const voxel::Level& level = grid.levels[scale];
  std::vector<double> xyz;
  xyz.reserve(level.count() * 3);
  for (const voxel::VoxelIndex& idx : level.indices) {
    const geom::Vec3 c = voxel::voxel_center(grid.config, idx, scale);
    xyz.push_back(c.x);
    xyz.push_back(c.y);
    xyz.push_back(c.z);
  }
  std::vector<double> uvd(level.count() * 3);
  kernels::project_points(proj.m.data(), xyz.data(), level.count(),
                          geom::kBehindCameraEps, uvd.data());
  return uvd;
}

bool on_image(const double* uvd, double image_w, double image_h) {
  return uvd[2] > geom::kBehindCameraEps && uvd[0] >= 0.0 &&
         uvd[0] < image_w && uvd[1] >= 0.0 && uvd[1] < image_h;
}

}  // namespace

FusedLevel fuse_scale(const voxel::SparseVoxelGrid& grid, int scale,
                      const img::FeaturePyramid& pyramid,
                      const geom::CalibrationSet& calib,
                      const nn::DenseNet& net) {
  if (scale < 0 || scale >= static_cast<int>(grid.levels.size()))
    throw ContractError("fuse_scale: scale " + std::to_string(scale) +
                        " does not exist");
  const voxel::Level& level = grid.levels[scale];
  const img::FeatureMap& finest = pyramid.finest();
  const std::size_t c_vox = level.channels;
  const std::size_t c_img = static_cast<std::size_t>(finest.channels);
  if (net.input_dim() != c_vox + c_img)
    throw ContractError("fuse_scale: net input dim " +
                        std::to_string(net.input_dim()) + ", want " +
                        std::to_string(c_vox + c_img));
  if (net.output_dim() != c_vox)
    throw ContractError("fuse_scale: net output dim " +
                        std::to_string(net.output_dim()) + ", want " +
                        std::to_string(c_vox));

  const std::vector<double> uvd =
      project_centers(grid, scale, calib.image_from_lidar());
  const double image_w = pyramid.source_width;
  const double image_h = pyramid.source_height;

  FusedLevel out;
  out.channels = c_vox;
  out.image_channels = c_img;
  out.fused.resize(level.count() * c_vox);
  out.image_feats.assign(level.count() * c_img, 0.0);
  out.valid.assign(level.count(), 0);

  std::vector<double> input(c_vox + c_img);
  for (std::size_t n = 0; n < level.count(); ++n) {
    double* img_feat = out.image_feats.data() + n * c_img;
    if (on_image(&uvd[3 * n], image_w, image_h)) {
      img::bilinear_sample_into(finest, uvd[3 * n], uvd[3 * n + 1], img_feat);
      out.valid[n] = 1;
    }
    const double* vox_feat = level.feature(n);
    std::copy(vox_feat, vox_feat + c_vox, input.begin());
    std::copy(img_feat, img_feat + c_img, input.begin() + c_vox);
    const std::vector<double> fused = nn::forward(net, input);
    std::copy(fused.begin(), fused.end(), out.fused.begin() + n * c_vox);
  }
  return out;
}

FusedGrid fuse_all(const voxel::SparseVoxelGrid& grid,
                   const img::FeaturePyramid& pyramid,
                   const geom::CalibrationSet& calib, const nn::DenseNet& net) {
  FusedGrid out;
  for (int k = 0; k < static_cast<int>(grid.levels.size()); ++k)
    out.levels.push_back(fuse_scale(grid, k, pyramid, calib, net));
  return out;
}

FusedGrid fuse_all(const voxel::SparseVoxelGrid& grid,
                   const img::FeaturePyramid& pyramid,
                   const geom::CalibrationSet& calib,
                   std::span<const nn::DenseNet> nets) {
  if (nets.size() != grid.levels.size())
    throw ContractError("fuse_all: need one net per scale, got " +
                        std::to_string(nets.size()) + " for " +
                        std::to_string(grid.levels.size()) + " scales");
  FusedGrid out;
  for (int k = 0; k < static_cast<int>(grid.levels.size()); ++k)
    out.levels.push_back(fuse_scale(grid, k, pyramid, calib, nets[k]));
  return out;
}

CoverageStats sample_coverage(const voxel::SparseVoxelGrid& grid,
                              const geom::CalibrationSet& calib, int image_w,
                              int image_h) {
  const geom::Mat34 proj = calib.image_from_lidar();
  CoverageStats stats;
  std::set<std::pair<double, double>> cumulative;
  for (int k = 0; k < static_cast<int>(grid.levels.size()); ++k) {
    const std::vector<double> uvd = project_centers(grid, k, proj);
    std::set<std::pair<double, double>> scale_positions;
    for (std::size_t n = 0; n < grid.levels[k].count(); ++n) {
      if (!on_image(&uvd[3 * n], image_w, image_h)) continue;
      scale_positions.emplace(uvd[3 * n], uvd[3 * n + 1]);
      cumulative.emplace(uvd[3 * n], uvd[3 * n + 1]);
    }
    stats.per_scale.push_back(scale_positions.size());
    stats.cumulative.push_back(cumulative.size());
  }
  return stats;
}

}  // namespace voxfuse::fusion
