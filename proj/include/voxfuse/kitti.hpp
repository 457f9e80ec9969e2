#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxfuse/geom.hpp"

namespace voxfuse::kitti {

struct Point {
  float x = 0.f, y = 0.f, z = 0.f, intensity = 0.f;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

enum class ObjectClass { Car, Pedestrian, Cyclist, DontCare, Other };

ObjectClass class_from_name(std::string_view name);
std::string_view class_name(ObjectClass c);

/// One line of a KITTI label file (15 whitespace-separated fields).
struct LabelRecord {
  std::string name;  // verbatim class token, kept for lossless re-emission
  ObjectClass cls = ObjectClass::Other;
  double truncation = 0.0;   // [0, 1]
  int occlusion = 0;         // {0,1,2,3}
  double alpha = 0.0;        // observation angle
  geom::Box2D bbox;          // image rectangle, pixels
  double height = 0.0, width = 0.0, length = 0.0;  // meters, camera dims
  geom::Vec3 location;       // bottom-face center, camera frame, meters
  double rotation_y = 0.0;   // yaw about the camera y axis, (-pi, pi]

  bool dont_care() const { return cls == ObjectClass::DontCare; }
};

/// 8-bit RGB raster, row-major, channel-interleaved.
struct ImageRaster {
  int height = 0, width = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  const std::uint8_t* pixel(int i, int j) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(i) * width + j);
  }
  std::uint8_t* pixel(int i, int j) {
    return rgb.data() + 3 * (static_cast<std::size_t>(i) * width + j);
  }
};

/// One KITTI frame.
struct Scene {
  std::string id;
  PointCloud cloud;
  ImageRaster image;
  std::vector<LabelRecord> labels;
  geom::CalibrationSet calib;
  std::string calib_text;  // verbatim source text, re-emitted by write_scene

  void validate() const;  // throws ContractError on broken invariants
};

// --- parsing / serialization ------------------------------------------------

/// KITTI velodyne blob: little-endian float32 quadruples (x, y, z, intensity).
/// Throws FormatError when the length is not a multiple of 16 or a value is
/// non-finite (the message names the offending point index). Intensities are
/// clamped into [0, 1].
PointCloud parse_point_cloud(std::span<const std::uint8_t> blob);
std::vector<std::uint8_t> write_point_cloud(const PointCloud& cloud);

/// KITTI calib text. Requires keys P2, R0_rect, Tr_velo_to_cam; composes
/// cam_from_lidar = lift4(R0_rect) * lift4(Tr_velo_to_cam) and takes
/// img_from_cam = P2. Fails loudly (FormatError) on missing keys, malformed
/// floats (message carries the line number), or a non-orthonormal rotation
/// block (checked to 1e-6).
geom::CalibrationSet parse_calibration(const std::string& text);
std::string write_calibration(const geom::CalibrationSet& calib);

/// KITTI label text, 15 fields per non-empty line. DontCare entries are
/// retained and flagged. Throws FormatError with the line number on a wrong
/// field count or a malformed number.
std::vector<LabelRecord> parse_labels(const std::string& text);

/// Loses nothing but float formatting: values are printed as the shortest
/// decimal that parses back exactly.
std::string write_labels(const std::vector<LabelRecord>& labels);

/// Portable pixmap, binary 8-bit (P6) only.
ImageRaster parse_ppm(std::span<const std::uint8_t> bytes);
ImageRaster read_ppm(const std::filesystem::path& path);
void write_ppm(const ImageRaster& image, const std::filesystem::path& path);

/// Dataset layout: root/velodyne/ID.bin, root/image_2/ID.ppm,
/// root/label_2/ID.txt, root/calib/ID.txt.
Scene load_scene(const std::filesystem::path& root, const std::string& id);
void write_scene(const Scene& scene, const std::filesystem::path& root);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// --- label <-> LiDAR box conversion ------------------------------------------

/// KITTI convention: label location is the bottom-face center in the camera
/// frame, dims are (h, w, l), and rotation_y spins about camera y. The two
/// helpers are exact inverses of each other; the yaw mapping assumes a
/// gravity-aligned camera (LiDAR up maps to camera -y), as in KITTI.
geom::Box3D box3d_from_label(const LabelRecord& label,
                             const geom::CalibrationSet& calib);
LabelRecord label_from_box3d(const geom::Box3D& box, ObjectClass cls,
                             const geom::CalibrationSet& calib,
                             const geom::Box2D& bbox);

// --- sample database ---------------------------------------------------------

/// One augmentation source object. Points are in canonical pose (box center
/// at the origin, yaw zero); `box` holds the original scene placement.
struct SampleEntry {
  std::string class_name;
  ObjectClass cls = ObjectClass::Other;
  PointCloud points;
  geom::Box3D box;
  ImageRaster patch;
  geom::Box2D patch_box;  // original image rectangle
};

struct SampleDatabase {
  std::vector<SampleEntry> entries;

  std::vector<int> entries_of_class(ObjectClass c) const;
};

/// Layout: root/index.json plus one subdirectory per class holding the
/// per-entry point blobs (.bin) and image patches (.ppm). Loading verifies
/// that every entry's points lie inside its box in canonical pose.
SampleDatabase load_sample_database(const std::filesystem::path& root);
void save_sample_database(const SampleDatabase& db,
                          const std::filesystem::path& root);

}  // namespace voxfuse::kitti
