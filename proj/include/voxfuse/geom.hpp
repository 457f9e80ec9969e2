#pragma once

#include <array>
#include <cmath>
#include <optional>

namespace voxfuse::geom {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

/// Row-major 4x4 homogeneous transform.
struct Mat4 {
  std::array<double, 16> m{};

  static Mat4 identity();
  Mat4 operator*(const Mat4& o) const;
  Vec3 transform_point(const Vec3& p) const;
  /// Inverse of a rigid transform (orthonormal rotation + translation).
  Mat4 rigid_inverse() const;
};

/// Row-major 3x4 projection matrix, pixel units.
struct Mat34 {
  std::array<double, 12> m{};

  static Mat34 canonical_pinhole();  // [I | 0]
  /// this * rhs, treating rhs as a homogeneous 4x4.
  Mat34 compose(const Mat4& rhs) const;
};

/// Sensor calibration: a rigid LiDAR->camera transform (rectified camera
/// frame) and the camera->image projection.
struct CalibrationSet {
  Mat4 cam_from_lidar = Mat4::identity();
  Mat34 img_from_cam = Mat34::canonical_pinhole();

  /// Composed 3x4 pixel-from-LiDAR matrix.
  Mat34 image_from_lidar() const { return img_from_cam.compose(cam_from_lidar); }
};

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

/// Oriented box in the LiDAR frame; yaw rotates about the up (+z) axis.
struct Box3D {
  Vec3 center;
  Vec3 dims;  // (dx, dy, dz), valid boxes have all > 0
  double yaw = 0.0;

  double volume() const { return dims.x * dims.y * dims.z; }
};

/// Axis-aligned image rectangle, pixels.
struct Box2D {
  double u_min = 0.0, v_min = 0.0, u_max = 0.0, v_max = 0.0;

  double width() const { return u_max - u_min; }
  double height() const { return v_max - v_min; }
  double area() const { return width() * height(); }
};

struct ImagePoint {
  double u = 0.0, v = 0.0, depth = 0.0;
};

/// Points at or behind this camera-frame depth have no image position.
inline constexpr double kBehindCameraEps = 1e-6;

/// Projects a LiDAR-frame point onto the image plane. The homogeneous
/// composition img_from_cam * cam_from_lidar * p is divided by its third
/// coordinate; that coordinate (camera depth) is returned undivided.
/// nullopt when depth <= kBehindCameraEps.
std::optional<ImagePoint> lidar_to_image(const Vec3& p,
                                         const CalibrationSet& calib);

/// Same, against a precomposed pixel-from-LiDAR matrix (batch callers).
std::optional<ImagePoint> lidar_to_image(const Vec3& p,
                                         const Mat34& image_from_lidar);

/// The 8 corners of a box. Corner k offsets the center by
/// R(yaw) * (sx*dx/2, sy*dy/2, sz*dz/2) with sx = (k&1) ? +1 : -1,
/// sy = (k&2) ? +1 : -1, sz = (k&4) ? +1 : -1.
std::array<Vec3, 8> box3d_corners(const Box3D& b);

/// Axis-aligned bounds of the projected box corners, clipped to the image.
/// Behind-camera corners are dropped; nullopt when fewer than 2 corners
/// survive or the clipped rectangle has zero area.
std::optional<Box2D> project_box3d_to_2d(const Box3D& b,
                                         const CalibrationSet& calib,
                                         int image_w, int image_h);

/// IoU of the two yaw-rotated ground-plane footprints, by convex polygon
/// clipping (Sutherland-Hodgman) and shoelace areas. Degenerate footprint -> 0.
double bev_iou(const Box3D& a, const Box3D& b);

/// Standard axis-aligned rectangle IoU. Zero-area rectangle -> 0.
double iou_2d(const Box2D& a, const Box2D& b);

/// 3D IoU for upright boxes: BEV intersection area times vertical overlap,
/// over the union volume. Degenerate box -> 0.
double iou_3d(const Box3D& a, const Box3D& b);

/// Footprint corners in the ground plane, counter-clockwise.
std::array<std::array<double, 2>, 4> bev_corners(const Box3D& b);

/// True when p lies inside the (closed) oriented box.
bool point_in_box3d(const Vec3& p, const Box3D& b);

}  // namespace voxfuse::geom
