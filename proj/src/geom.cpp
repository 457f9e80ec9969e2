#include "voxfuse/geom.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace voxfuse::geom {

Mat4 Mat4::identity() {
  Mat4 r;
  r.m[0] = r.m[5] = r.m[10] = r.m[15] = 1.0;
  return r;
}

Mat4 Mat4::operator*(const Mat4& o) const {
  Mat4 r;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += m[i * 4 + k] * o.m[k * 4 + j];
      r.m[i * 4 + j] = acc;
    }
  }
  return r;
}

Vec3 Mat4::transform_point(const Vec3& p) const {
  return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
          m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
          m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
}

Mat4 Mat4::rigid_inverse() const {
  Mat4 r = Mat4::identity();
  // R^T block
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i * 4 + j] = m[j * 4 + i];
  // -R^T t
  for (int i = 0; i < 3; ++i) {
    r.m[i * 4 + 3] = -(r.m[i * 4 + 0] * m[3] + r.m[i * 4 + 1] * m[7] +
                       r.m[i * 4 + 2] * m[11]);
  }
  return r;
}

Mat34 Mat34::canonical_pinhole() {
  Mat34 r;
  r.m[0] = r.m[5] = r.m[10] = 1.0;
  return r;
}

Mat34 Mat34::compose(const Mat4& rhs) const {
  Mat34 r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += m[i * 4 + k] * rhs.m[k * 4 + j];
      r.m[i * 4 + j] = acc;
    }
  }
  return r;
}

double normalize_angle(double a) {
  const double two_pi = 2.0 * M_PI;
  a = std::fmod(a, two_pi);
  if (a <= -M_PI) a += two_pi;
  if (a > M_PI) a -= two_pi;
  return a;
}

std::optional<ImagePoint> lidar_to_image(const Vec3& p,
                                         const Mat34& image_from_lidar) {
  const auto& m = image_from_lidar.m;
  const double a = m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3];
  const double b = m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7];
  const double d = m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11];
  if (d <= kBehindCameraEps) return std::nullopt;
  return ImagePoint{a / d, b / d, d};
}

std::optional<ImagePoint> lidar_to_image(const Vec3& p,
                                         const CalibrationSet& calib) {
  return lidar_to_image(p, calib.image_from_lidar());
}

std::array<Vec3, 8> box3d_corners(const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  std::array<Vec3, 8> out;
  for (int k = 0; k < 8; ++k) {
    const double ox = ((k & 1) ? 0.5 : -0.5) * b.dims.x;
    const double oy = ((k & 2) ? 0.5 : -0.5) * b.dims.y;
    const double oz = ((k & 4) ? 0.5 : -0.5) * b.dims.z;
    out[k] = {b.center.x + c * ox - s * oy, b.center.y + s * ox + c * oy,
              b.center.z + oz};
  }
  return out;
}

std::optional<Box2D> project_box3d_to_2d(const Box3D& b,
                                         const CalibrationSet& calib,
                                         int image_w, int image_h) {
  const Mat34 proj = calib.image_from_lidar();
  double u_min = 0.0, v_min = 0.0, u_max = 0.0, v_max = 0.0;
  int visible = 0;
  for (const Vec3& corner : box3d_corners(b)) {
    const auto ip = lidar_to_image(corner, proj);
    if (!ip) continue;
    if (visible == 0) {
      u_min = u_max = ip->u;
      v_min = v_max = ip->v;
    } else {
      u_min = std::min(u_min, ip->u);
      u_max = std::max(u_max, ip->u);
      v_min = std::min(v_min, ip->v);
      v_max = std::max(v_max, ip->v);
    }
    ++visible;
  }
  if (visible < 2) return std::nullopt;
  Box2D box{std::max(u_min, 0.0), std::max(v_min, 0.0),
            std::min(u_max, static_cast<double>(image_w)),
            std::min(v_max, static_cast<double>(image_h))};
  if (box.width() <= 0.0 || box.height() <= 0.0) return std::nullopt;
  return box;
}

namespace {

using Pt = std::array<double, 2>;

double shoelace_area(const std::vector<Pt>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Pt& a = poly[i];
    const Pt& b = poly[(i + 1) % n];
    acc += a[0] * b[1] - b[0] * a[1];
  }
  return 0.5 * std::abs(acc);
}

// Sutherland-Hodgman clip of a polygon against the half-plane left of the
// directed edge a->b (clip polygon must be counter-clockwise).
void clip_edge(std::vector<Pt>& poly, const Pt& a, const Pt& b,
               std::vector<Pt>& scratch) {
  scratch.clear();
  const std::size_t n = poly.size();
  if (n == 0) return;
  const double ex = b[0] - a[0];
  const double ey = b[1] - a[1];
  auto side = [&](const Pt& p) {
    return ex * (p[1] - a[1]) - ey * (p[0] - a[0]);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Pt& cur = poly[i];
    const Pt& nxt = poly[(i + 1) % n];
    const double sc = side(cur);
    const double sn = side(nxt);
    if (sc >= 0.0) scratch.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      scratch.push_back(
          {cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
    }
  }
  poly.swap(scratch);
}

double convex_intersection_area(const std::array<Pt, 4>& a,
                                const std::array<Pt, 4>& b) {
  std::vector<Pt> poly(a.begin(), a.end());
  std::vector<Pt> scratch;
  scratch.reserve(8);
  for (int i = 0; i < 4; ++i) {
    clip_edge(poly, b[i], b[(i + 1) % 4], scratch);
    if (poly.empty()) return 0.0;
  }
  return shoelace_area(poly);
}

// Footprint area through the same shoelace route as the intersection, so a
// box intersected with itself reproduces its own area bit for bit.
double footprint_area(const std::array<Pt, 4>& corners) {
  return shoelace_area(std::vector<Pt>(corners.begin(), corners.end()));
}

// Interval overlap written as min(2ha, 2hb, ha + hb - |za - zb|): exact when
// the intervals coincide, unlike min(hi) - max(lo).
double interval_overlap(double za, double ha, double zb, double hb) {
  return std::min({2.0 * ha, 2.0 * hb, ha + hb - std::abs(za - zb)});
}

}  // namespace

std::array<Pt, 4> bev_corners(const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double hx = 0.5 * b.dims.x;
  const double hy = 0.5 * b.dims.y;
  // CCW: (+,+), (-,+), (-,-), (+,-) stays CCW under rotation
  const std::array<Pt, 4> local{{{hx, hy}, {-hx, hy}, {-hx, -hy}, {hx, -hy}}};
  std::array<Pt, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.center.x + c * local[i][0] - s * local[i][1],
              b.center.y + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double area_a = footprint_area(ca);
  const double area_b = footprint_area(cb);
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double inter = convex_intersection_area(ca, cb);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_2d(const Box2D& a, const Box2D& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double iw =
      std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min);
  const double ih =
      std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double vol_a = footprint_area(ca) * a.dims.z;
  const double vol_b = footprint_area(cb) * b.dims.z;
  if (vol_a <= 0.0 || vol_b <= 0.0) return 0.0;
  const double dz = interval_overlap(a.center.z, 0.5 * a.dims.z, b.center.z,
                                     0.5 * b.dims.z);
  if (dz <= 0.0) return 0.0;
  const double inter = convex_intersection_area(ca, cb) * dz;
  const double uni = vol_a + vol_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool point_in_box3d(const Vec3& p, const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double dx = p.x - b.center.x;
  const double dy = p.y - b.center.y;
  const double dz = p.z - b.center.z;
  // rotate into the box frame (by -yaw)
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.dims.x && std::abs(ly) <= 0.5 * b.dims.y &&
         std::abs(dz) <= 0.5 * b.dims.z;
}

}  // namespace voxfuse::geom
