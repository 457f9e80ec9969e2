#include "voxfuse/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxfuse/errors.hpp"

namespace voxfuse::augment {

namespace {

bool occluded(const geom::Box3D& a3, const geom::Box2D& a2,
              const geom::Box3D& b3, const geom::Box2D& b2,
              const OgsConfig& cfg) {
  const bool bev = geom::bev_iou(a3, b3) > cfg.tau1;
  const bool image = geom::iou_2d(a2, b2) > cfg.tau2;
  return cfg.rule == OcclusionRule::AnyPlane ? (bev || image) : (bev && image);
}

// Pairwise conflict tables; counts are row sums over alive entries.
struct ConflictTables {
  std::vector<std::vector<char>> sample_sample;  // n x n, diagonal false
  std::vector<int> sample_gt;                    // conflicts with any-G count
};

ConflictTables build_tables(std::span<const SampledObject> samples,
                            std::span<const OccluderBox> gts,
                            const OgsConfig& cfg) {
  const std::size_t n = samples.size();
  ConflictTables t;
  t.sample_sample.assign(n, std::vector<char>(n, 0));
  t.sample_gt.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool c = occluded(samples[i].box3d, samples[i].box2d,
                              samples[j].box3d, samples[j].box2d, cfg);
      t.sample_sample[i][j] = t.sample_sample[j][i] = c ? 1 : 0;
    }
    for (const OccluderBox& g : gts) {
      if (occluded(samples[i].box3d, samples[i].box2d, g.box3d, g.box2d, cfg))
        ++t.sample_gt[i];
    }
  }
  return t;
}

}  // namespace

void OgsConfig::validate() const {
  if (!(tau1 >= 0.0 && tau1 < 1.0 && tau2 >= 0.0 && tau2 < 1.0))
    throw ContractError("ogs: occlusion thresholds must lie in [0, 1)");
}

std::vector<int> occlusion_counts(std::span<const SampledObject> samples,
                                  std::span<const OccluderBox> gts,
                                  const OgsConfig& cfg) {
  cfg.validate();
  const ConflictTables t = build_tables(samples, gts, cfg);
  std::vector<int> counts(samples.size(), 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    counts[i] = t.sample_gt[i];
    for (std::size_t j = 0; j < samples.size(); ++j)
      counts[i] += t.sample_sample[i][j];
  }
  return counts;
}

std::vector<SampledObject> ogs_select(std::span<const SampledObject> samples,
                                      std::span<const OccluderBox> gts,
                                      const OgsConfig& cfg) {
  cfg.validate();
  const std::size_t n = samples.size();
  const ConflictTables t = build_tables(samples, gts, cfg);

  std::vector<char> alive(n, 1);
  std::vector<int> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    counts[i] = t.sample_gt[i];
    for (std::size_t j = 0; j < n; ++j) counts[i] += t.sample_sample[i][j];
  }

  for (std::size_t round = 0; round < n; ++round) {
    int worst = -1;
    int worst_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alive[i] && counts[i] > worst_count) {
        worst_count = counts[i];
        worst = static_cast<int>(i);
      }
    }
    if (worst < 0) break;  // nothing occluded
    alive[worst] = 0;
    // deleting the row/column updates the remaining counts incrementally
    for (std::size_t i = 0; i < n; ++i)
      if (alive[i] && t.sample_sample[i][worst]) --counts[i];
  }

  std::vector<SampledObject> out;
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) out.push_back(samples[i]);
  return out;
}

std::vector<SampledObject> vanilla_select(
    std::span<const SampledObject> samples, std::span<const OccluderBox> gts,
    const OgsConfig& cfg) {
  cfg.validate();
  std::vector<SampledObject> out;
  for (const SampledObject& s : samples) {
    bool conflict = false;
    for (const OccluderBox& g : gts) {
      if (occluded(s.box3d, s.box2d, g.box3d, g.box2d, cfg)) {
        conflict = true;
        break;
      }
    }
    for (const SampledObject& kept : out) {
      if (conflict) break;
      if (occluded(s.box3d, s.box2d, kept.box3d, kept.box2d, cfg))
        conflict = true;
    }
    if (!conflict) out.push_back(s);
  }
  return out;
}

std::vector<SampledObject> draw_samples(const kitti::SampleDatabase& db,
                                        const kitti::Scene& scene,
                                        const OgsConfig& cfg, SplitMix64& rng) {
  std::vector<SampledObject> out;
  for (const auto& [class_name, want] : cfg.max_samples) {
    if (want <= 0) continue;
    const kitti::ObjectClass cls = kitti::class_from_name(class_name);
    std::vector<int> ids = db.entries_of_class(cls);
    // Fisher-Yates with the caller's stream
    for (std::size_t i = ids.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(ids[i - 1], ids[j]);
    }
    int taken = 0;
    for (int id : ids) {
      if (taken >= want) break;
      const kitti::SampleEntry& entry = db.entries[static_cast<std::size_t>(id)];
      const auto b2 = geom::project_box3d_to_2d(
          entry.box, scene.calib, scene.image.width, scene.image.height);
      if (!b2) continue;
      out.push_back(SampledObject{entry.box, *b2, id, static_cast<int>(cls)});
      ++taken;
    }
  }
  return out;
}

kitti::Scene paste_samples(const kitti::Scene& scene,
                           std::span<const SampledObject> retained,
                           const kitti::SampleDatabase& db) {
  kitti::Scene out = scene;
  if (retained.empty()) return out;

  // Clear original points that end up inside a pasted box.
  std::vector<kitti::Point> kept;
  kept.reserve(out.cloud.size());
  for (const kitti::Point& p : out.cloud.points) {
    bool inside = false;
    for (const SampledObject& s : retained) {
      if (geom::point_in_box3d({p.x, p.y, p.z}, s.box3d)) {
        inside = true;
        break;
      }
    }
    if (!inside) kept.push_back(p);
  }
  out.cloud.points = std::move(kept);

  // Append object points in scene pose.
  for (const SampledObject& s : retained) {
    const kitti::SampleEntry& entry =
        db.entries[static_cast<std::size_t>(s.entry_id)];
    const double c = std::cos(s.box3d.yaw);
    const double sn = std::sin(s.box3d.yaw);
    for (const kitti::Point& p : entry.points.points) {
      kitti::Point q;
      q.x = static_cast<float>(c * p.x - sn * p.y + s.box3d.center.x);
      q.y = static_cast<float>(sn * p.x + c * p.y + s.box3d.center.y);
      q.z = static_cast<float>(p.z + s.box3d.center.z);
      q.intensity = p.intensity;
      out.cloud.points.push_back(q);
    }
  }

  // Composite patches far-to-near so closer objects overdraw.
  std::vector<std::size_t> order(retained.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto da = retained[a].box3d.center;
    const auto db_ = retained[b].box3d.center;
    return da.x * da.x + da.y * da.y > db_.x * db_.x + db_.y * db_.y;
  });
  for (const std::size_t idx : order) {
    const SampledObject& s = retained[idx];
    const kitti::SampleEntry& entry =
        db.entries[static_cast<std::size_t>(s.entry_id)];
    if (entry.patch.width <= 0 || entry.patch.height <= 0) continue;
    const int u0 = static_cast<int>(std::floor(s.box2d.u_min));
    const int v0 = static_cast<int>(std::floor(s.box2d.v_min));
    const int u1 = static_cast<int>(std::ceil(s.box2d.u_max));
    const int v1 = static_cast<int>(std::ceil(s.box2d.v_max));
    const int dst_w = u1 - u0;
    const int dst_h = v1 - v0;
    if (dst_w <= 0 || dst_h <= 0) continue;
    for (int v = std::max(v0, 0); v < std::min(v1, out.image.height); ++v) {
      // nearest-neighbor resample of the patch into the placement rectangle
      const int pv = std::min(
          entry.patch.height - 1,
          static_cast<int>((v - v0 + 0.5) * entry.patch.height / dst_h));
      for (int u = std::max(u0, 0); u < std::min(u1, out.image.width); ++u) {
        const int pu = std::min(
            entry.patch.width - 1,
            static_cast<int>((u - u0 + 0.5) * entry.patch.width / dst_w));
        const std::uint8_t* src = entry.patch.pixel(pv, pu);
        std::uint8_t* dst = out.image.pixel(v, u);
        dst[0] = src[0];
        dst[1] = src[1];
        dst[2] = src[2];
      }
    }
  }

  // Append labels in retained order.
  for (const SampledObject& s : retained) {
    geom::Box2D bbox = s.box2d;
    bbox.u_min = std::clamp(bbox.u_min, 0.0, double(out.image.width));
    bbox.u_max = std::clamp(bbox.u_max, 0.0, double(out.image.width));
    bbox.v_min = std::clamp(bbox.v_min, 0.0, double(out.image.height));
    bbox.v_max = std::clamp(bbox.v_max, 0.0, double(out.image.height));
    out.labels.push_back(kitti::label_from_box3d(
        s.box3d, static_cast<kitti::ObjectClass>(s.class_id), out.calib, bbox));
  }
  return out;
}

void flip_y(kitti::PointCloud& cloud) {
  for (kitti::Point& p : cloud.points) p.y = -p.y;
}

void global_rotate(kitti::PointCloud& cloud, double angle) {
  const float c = static_cast<float>(std::cos(angle));
  const float s = static_cast<float>(std::sin(angle));
  for (kitti::Point& p : cloud.points) {
    const float x = p.x, y = p.y;
    p.x = c * x - s * y;
    p.y = s * x + c * y;
  }
}

void global_scale(kitti::PointCloud& cloud, double factor) {
  const float f = static_cast<float>(factor);
  for (kitti::Point& p : cloud.points) {
    p.x *= f;
    p.y *= f;
    p.z *= f;
  }
}

}  // namespace voxfuse::augment
