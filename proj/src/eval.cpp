#include "voxfuse/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "voxfuse/errors.hpp"

namespace voxfuse::eval {

std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Moderate: return "moderate";
    case Difficulty::Hard: return "hard";
    case Difficulty::Ignored: break;
  }
  return "ignored";
}

void EvalConfig::validate() const {
  if (recall_positions != 11 && recall_positions != 40)
    throw ContractError("eval: recall_positions must be 11 or 40");
  for (const auto& [cls, thresh] : iou_threshold) {
    if (!(thresh > 0.0 && thresh <= 1.0))
      throw ContractError("eval: IoU thresholds must lie in (0, 1]");
  }
}

PRCurve merge(std::span<const PRCurve> curves) {
  PRCurve out;
  for (const PRCurve& c : curves) {
    out.gt_count += c.gt_count;
    out.hits.insert(out.hits.end(), c.hits.begin(), c.hits.end());
  }
  std::stable_sort(out.hits.begin(), out.hits.end(),
                   [](const ScoredHit& a, const ScoredHit& b) {
                     return a.score > b.score;
                   });
  return out;
}

PRCurve match_detections(std::span<const ScoredBox> dets,
                         std::span<const geom::Box3D> gts, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });

  PRCurve curve;
  curve.gt_count = gts.size();
  curve.hits.reserve(dets.size());
  std::vector<char> taken(gts.size(), 0);
  for (const std::size_t di : order) {
    double best = iou_thresh;
    int best_gt = -1;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi]) continue;
      const double iou = geom::iou_3d(dets[di].box, gts[gi]);
      if (iou >= best) {
        best = iou;
        best_gt = static_cast<int>(gi);
      }
    }
    if (best_gt >= 0) taken[static_cast<std::size_t>(best_gt)] = 1;
    curve.hits.push_back({dets[di].score, best_gt >= 0});
  }
  return curve;
}

std::optional<double> average_precision(const PRCurve& curve, int positions) {
  if (positions != 11 && positions != 40)
    throw ContractError("average_precision: positions must be 11 or 40");
  if (curve.gt_count == 0) return std::nullopt;

  // precision/recall at every operating point (cut after hit k)
  const std::size_t n = curve.hits.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (curve.hits[k].tp) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(curve.gt_count);
  }
  // max precision over suffixes by recall: sweep from the back
  std::vector<double> max_prec_from(n);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    running = std::max(running, precision[k]);
    max_prec_from[k] = running;
  }

  auto interp_at = [&](double r) {
    // first operating point with recall >= r; recall is nondecreasing
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it == recall.end()) return 0.0;
    return max_prec_from[static_cast<std::size_t>(it - recall.begin())];
  };

  double acc = 0.0;
  if (positions == 11) {
    for (int k = 0; k <= 10; ++k) acc += interp_at(k / 10.0);
    return acc / 11.0;
  }
  for (int k = 1; k <= 40; ++k) acc += interp_at(k / 40.0);
  return acc / 40.0;
}

Difficulty assign_difficulty(const kitti::LabelRecord& label,
                             const DifficultyRules& rules) {
  const double height = label.bbox.height();
  for (int d = 0; d < 3; ++d) {
    if (height >= rules.min_box_height[d] &&
        label.occlusion <= rules.max_occlusion[d] &&
        label.truncation <= rules.max_truncation[d])
      return static_cast<Difficulty>(d);
  }
  return Difficulty::Ignored;
}

std::optional<double> roi_recall(std::span<const geom::Box3D> rois,
                                 std::span<const geom::Box3D> gts, double tau) {
  if (!(tau > 0.0 && tau <= 1.0))
    throw ContractError("roi_recall: tau must lie in (0, 1]");
  if (gts.empty()) return std::nullopt;
  std::size_t covered = 0;
  for (const geom::Box3D& gt : gts) {
    for (const geom::Box3D& roi : rois) {
      if (geom::iou_3d(roi, gt) >= tau) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(gts.size());
}

std::vector<ScoredBox> nms_3d(std::span<const ScoredBox> dets,
                              double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<ScoredBox> kept;
  for (const std::size_t di : order) {
    bool suppressed = false;
    for (const ScoredBox& k : kept) {
      if (geom::iou_3d(dets[di].box, k.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[di]);
  }
  return kept;
}

namespace {

double overlap_over_det_area(const geom::Box2D& det, const geom::Box2D& zone) {
  const double area = det.area();
  if (area <= 0.0) return 0.0;
  const double iw = std::min(det.u_max, zone.u_max) -
                    std::max(det.u_min, zone.u_min);
  const double ih = std::min(det.v_max, zone.v_max) -
                    std::max(det.v_min, zone.v_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih / area;
}

// One scene, one class, one difficulty level: matched curve with ignore
// handling (harder ground truths and DontCare zones swallow detections).
PRCurve match_scene(const SceneGroundTruth& scene,
                    std::span<const ClassedDetection> dets,
                    kitti::ObjectClass cls, Difficulty level,
                    const EvalConfig& cfg) {
  const double thresh = cfg.iou_threshold.at(cls);

  std::vector<geom::Box3D> valid_gts;
  std::vector<geom::Box3D> ignored_gts;
  std::vector<geom::Box2D> dontcare;
  for (const kitti::LabelRecord& label : scene.labels) {
    if (label.dont_care()) {
      dontcare.push_back(label.bbox);
      continue;
    }
    if (label.cls != cls) continue;
    const Difficulty d = assign_difficulty(label, cfg.difficulty);
    if (static_cast<int>(d) <= static_cast<int>(level))
      valid_gts.push_back(kitti::box3d_from_label(label, scene.calib));
    else
      ignored_gts.push_back(kitti::box3d_from_label(label, scene.calib));
  }

  std::vector<ScoredBox> class_dets;
  for (const ClassedDetection& det : dets)
    if (det.cls == cls) class_dets.push_back({det.box, det.score});

  std::vector<std::size_t> order(class_dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return class_dets[a].score > class_dets[b].score;
  });

  PRCurve curve;
  curve.gt_count = valid_gts.size();
  std::vector<char> taken(valid_gts.size(), 0);
  for (const std::size_t di : order) {
    const ScoredBox& det = class_dets[di];
    double best = thresh;
    int best_gt = -1;
    for (std::size_t gi = 0; gi < valid_gts.size(); ++gi) {
      if (taken[gi]) continue;
      const double iou = geom::iou_3d(det.box, valid_gts[gi]);
      if (iou >= best) {
        best = iou;
        best_gt = static_cast<int>(gi);
      }
    }
    if (best_gt >= 0) {
      taken[static_cast<std::size_t>(best_gt)] = 1;
      curve.hits.push_back({det.score, true});
      continue;
    }
    bool drop = false;
    for (const geom::Box3D& ig : ignored_gts) {
      if (geom::iou_3d(det.box, ig) >= thresh) {
        drop = true;
        break;
      }
    }
    if (!drop && !dontcare.empty()) {
      const auto det2d = geom::project_box3d_to_2d(det.box, scene.calib, 10000,
                                                   10000);
      if (det2d) {
        for (const geom::Box2D& zone : dontcare) {
          if (overlap_over_det_area(*det2d, zone) > 0.5) {
            drop = true;
            break;
          }
        }
      }
    }
    if (!drop) curve.hits.push_back({det.score, false});
  }
  return curve;
}

std::string format_value(const std::optional<double>& v) {
  if (!v) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), *v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<ResultRow> evaluate_scenes(
    std::span<const SceneGroundTruth> scenes,
    const std::map<std::string, std::vector<ClassedDetection>>& detections,
    const EvalConfig& cfg) {
  cfg.validate();
  static const std::vector<ClassedDetection> kNoDetections;
  auto dets_of = [&](const std::string& id) -> const std::vector<ClassedDetection>& {
    const auto it = detections.find(id);
    return it == detections.end() ? kNoDetections : it->second;
  };

  std::vector<ResultRow> rows;
  const std::array<kitti::ObjectClass, 3> classes{kitti::ObjectClass::Car,
                                                  kitti::ObjectClass::Pedestrian,
                                                  kitti::ObjectClass::Cyclist};
  for (const kitti::ObjectClass cls : classes) {
    for (int d = 0; d < 3; ++d) {
      std::vector<PRCurve> curves;
      curves.reserve(scenes.size());
      for (const SceneGroundTruth& scene : scenes) {
        curves.push_back(match_scene(scene, dets_of(scene.id), cls,
                                     static_cast<Difficulty>(d), cfg));
      }
      const PRCurve total = merge(curves);
      rows.push_back(ResultRow{
          std::string(kitti::class_name(cls)),
          std::string(difficulty_name(static_cast<Difficulty>(d))), "ap_3d",
          cfg.recall_positions, average_precision(total, cfg.recall_positions)});
    }

    // RoI recall over all non-ignored ground truths of the class,
    // matched within each scene
    for (const double tau : {0.5, 0.7}) {
      std::size_t covered = 0, total = 0;
      for (const SceneGroundTruth& scene : scenes) {
        std::vector<geom::Box3D> gts;
        for (const kitti::LabelRecord& label : scene.labels) {
          if (label.dont_care() || label.cls != cls) continue;
          if (assign_difficulty(label, cfg.difficulty) == Difficulty::Ignored)
            continue;
          gts.push_back(kitti::box3d_from_label(label, scene.calib));
        }
        std::vector<geom::Box3D> rois;
        for (const ClassedDetection& det : dets_of(scene.id))
          if (det.cls == cls) rois.push_back(det.box);
        const auto frac = roi_recall(rois, gts, tau);
        if (frac) covered += static_cast<std::size_t>(
            std::llround(*frac * static_cast<double>(gts.size())));
        total += gts.size();
      }
      char name[32];
      std::snprintf(name, sizeof(name), "roi_recall_%.1f", tau);
      rows.push_back(ResultRow{
          std::string(kitti::class_name(cls)), "all", name, 0,
          total == 0 ? std::optional<double>{}
                     : std::optional<double>{static_cast<double>(covered) /
                                             static_cast<double>(total)}});
    }
  }
  return rows;
}

std::string to_csv(std::span<const ResultRow> rows) {
  std::string out = "class,difficulty,metric,positions,value\n";
  for (const ResultRow& row : rows) {
    out += row.cls + "," + row.difficulty + "," + row.metric + "," +
           std::to_string(row.positions) + "," + format_value(row.value) + "\n";
  }
  return out;
}

}  // namespace voxfuse::eval
