#include "voxfuse/image_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "voxfuse/errors.hpp"
#include "voxfuse/kernels.hpp"

namespace voxfuse::img {

namespace {

double gray_at(const kitti::ImageRaster& image, int i, int j) {
  i = std::clamp(i, 0, image.height - 1);
  j = std::clamp(j, 0, image.width - 1);
  const std::uint8_t* px = image.pixel(i, j);
  return (px[0] + px[1] + px[2]) / (3.0 * 255.0);
}

}  // namespace

FeaturePyramid build_pyramid(const kitti::ImageRaster& image, int num_levels) {
  if (image.height < 2 || image.width < 2)
    throw ContractError("feature pyramid: image must be at least 2x2");
  if (num_levels < 1)
    throw ContractError("feature pyramid: need at least one level");

  FeatureMap base;
  base.height = image.height;
  base.width = image.width;
  base.channels = kPyramidChannels;
  base.stride = 1;
  base.data.resize(static_cast<std::size_t>(base.height) * base.width *
                   base.channels);

  // Sobel responses on [0,1] gray peak at 4.
  constexpr double kSobelNorm = 1.0 / 4.0;
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      const std::uint8_t* px = image.pixel(i, j);
      double* cell =
          base.data.data() +
          (static_cast<std::size_t>(i) * base.width + j) * base.channels;
      cell[0] = px[0] / 255.0;
      cell[1] = px[1] / 255.0;
      cell[2] = px[2] / 255.0;
      cell[3] = (px[0] + px[1] + px[2]) / (3.0 * 255.0);
      const double tl = gray_at(image, i - 1, j - 1);
      const double tc = gray_at(image, i - 1, j);
      const double tr = gray_at(image, i - 1, j + 1);
      const double ml = gray_at(image, i, j - 1);
      const double mr = gray_at(image, i, j + 1);
      const double bl = gray_at(image, i + 1, j - 1);
      const double bc = gray_at(image, i + 1, j);
      const double br = gray_at(image, i + 1, j + 1);
      const double gu = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      const double gv = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
      cell[4] = std::abs(gu) * kSobelNorm;
      cell[5] = std::abs(gv) * kSobelNorm;
    }
  }

  FeaturePyramid pyr;
  pyr.source_height = image.height;
  pyr.source_width = image.width;
  pyr.levels.push_back(std::move(base));
  for (int k = 1; k < num_levels; ++k)
    pyr.levels.push_back(avgpool_half(pyr.levels.back()));
  return pyr;
}

FeatureMap avgpool_half(const FeatureMap& map) {
  FeatureMap out;
  out.height = (map.height + 1) / 2;
  out.width = (map.width + 1) / 2;
  out.channels = map.channels;
  out.stride = map.stride * 2;
  out.data.resize(static_cast<std::size_t>(out.height) * out.width *
                  out.channels);
  kernels::avgpool2x2(map.data.data(), map.height, map.width, map.channels,
                      out.data.data());
  return out;
}

void bilinear_sample_into(const FeatureMap& map, double u, double v,
                          double* out) {
  const double gu =
      std::clamp(u / map.stride - 0.5, 0.0, static_cast<double>(map.width - 1));
  const double gv = std::clamp(v / map.stride - 0.5, 0.0,
                               static_cast<double>(map.height - 1));
  const int j0 = static_cast<int>(std::floor(gu));
  const int i0 = static_cast<int>(std::floor(gv));
  const int j1 = std::min(j0 + 1, map.width - 1);
  const int i1 = std::min(i0 + 1, map.height - 1);
  const double fu = gu - j0;
  const double fv = gv - i0;
  kernels::bilinear_mix(map.cell(i0, j0), map.cell(i0, j1), map.cell(i1, j0),
                        map.cell(i1, j1), fu, fv, out, map.channels);
}

std::vector<double> bilinear_sample(const FeatureMap& map, double u, double v) {
  std::vector<double> out(map.channels);
  bilinear_sample_into(map, u, v, out.data());
  return out;
}

namespace {

std::uint32_t read_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

}  // namespace

FeatureMap load_feature_map(const std::filesystem::path& path) {
  const auto bytes = kitti::read_file(path);
  if (bytes.size() < 16)
    throw FormatError("feature tensor " + path.string() + ": truncated header");
  FeatureMap map;
  map.height = static_cast<int>(read_u32le(bytes.data()));
  map.width = static_cast<int>(read_u32le(bytes.data() + 4));
  map.channels = static_cast<int>(read_u32le(bytes.data() + 8));
  const std::uint32_t level = read_u32le(bytes.data() + 12);
  if (map.height <= 0 || map.width <= 0 || map.channels <= 0 || level > 16)
    throw FormatError("feature tensor " + path.string() + ": bad header");
  map.stride = 1 << level;
  const std::size_t n =
      static_cast<std::size_t>(map.height) * map.width * map.channels;
  if (bytes.size() != 16 + n * 4)
    throw FormatError("feature tensor " + path.string() + ": payload size " +
                      std::to_string(bytes.size() - 16) + ", want " +
                      std::to_string(n * 4));
  map.data.resize(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    float f;
    std::memcpy(&f, bytes.data() + 16 + idx * 4, 4);
    map.data[idx] = static_cast<double>(f);
  }
  return map;
}

void save_feature_map(const FeatureMap& map,
                      const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + map.data.size() * 4);
  write_u32le(bytes, static_cast<std::uint32_t>(map.height));
  write_u32le(bytes, static_cast<std::uint32_t>(map.width));
  write_u32le(bytes, static_cast<std::uint32_t>(map.channels));
  std::uint32_t level = 0;
  while ((1 << level) < map.stride) ++level;
  write_u32le(bytes, level);
  for (double v : map.data) {
    const float f = static_cast<float>(v);
    std::uint8_t raw[4];
    std::memcpy(raw, &f, 4);
    bytes.insert(bytes.end(), raw, raw + 4);
  }
  kitti::write_file(path, bytes);
}

FeaturePyramid pyramid_from_files(
    const std::vector<std::filesystem::path>& paths) {
  if (paths.empty())
    throw ContractError("feature pyramid: no tensor files given");
  FeaturePyramid pyr;
  for (const auto& p : paths) pyr.levels.push_back(load_feature_map(p));
  std::sort(pyr.levels.begin(), pyr.levels.end(),
            [](const FeatureMap& a, const FeatureMap& b) {
              return a.stride < b.stride;
            });
  pyr.source_height = pyr.levels.front().height * pyr.levels.front().stride;
  pyr.source_width = pyr.levels.front().width * pyr.levels.front().stride;
  for (std::size_t k = 0; k + 1 < pyr.levels.size(); ++k) {
    const FeatureMap& a = pyr.levels[k];
    const FeatureMap& b = pyr.levels[k + 1];
    if (b.height != (a.height + 1) / 2 || b.width != (a.width + 1) / 2 ||
        b.channels != a.channels || b.stride != a.stride * 2)
      throw FormatError("feature pyramid: level " + std::to_string(k + 1) +
                        " does not chain from level " + std::to_string(k));
  }
  return pyr;
}

}  // namespace voxfuse::img
