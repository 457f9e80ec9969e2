#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxfuse/geom.hpp"
#include "voxfuse/kitti.hpp"

namespace voxfuse::eval {

enum class Difficulty { Easy = 0, Moderate = 1, Hard = 2, Ignored = 3 };

std::string_view difficulty_name(Difficulty d);

/// KITTI bucket rules, configurable: minimum 2D box height (pixels), maximum
/// occlusion level, maximum truncation, indexed easy/moderate/hard.
struct DifficultyRules {
  std::array<double, 3> min_box_height{40.0, 25.0, 25.0};
  std::array<int, 3> max_occlusion{0, 1, 2};
  std::array<double, 3> max_truncation{0.15, 0.30, 0.50};
};

struct EvalConfig {
  std::map<kitti::ObjectClass, double> iou_threshold{
      {kitti::ObjectClass::Car, 0.7},
      {kitti::ObjectClass::Pedestrian, 0.5},
      {kitti::ObjectClass::Cyclist, 0.5}};
  int recall_positions = 11;  // 11 or 40
  DifficultyRules difficulty;

  void validate() const;  // throws ContractError
};

struct ScoredHit {
  double score = 0.0;
  bool tp = false;
};

/// Operating points of a detector on (part of) a dataset. hits is sorted by
/// descending score (ties keep input order); gt_count is the number of
/// matchable ground-truth boxes.
struct PRCurve {
  std::vector<ScoredHit> hits;
  std::size_t gt_count = 0;
};

PRCurve merge(std::span<const PRCurve> curves);

struct ScoredBox {
  geom::Box3D box;
  double score = 0.0;
};

/// Greedy matching by descending score: each detection takes the unmatched
/// ground truth of highest 3D IoU at or above the threshold (one detection
/// per ground truth); everything else is a false positive.
PRCurve match_detections(std::span<const ScoredBox> dets,
                         std::span<const geom::Box3D> gts, double iou_thresh);

/// Interpolated average precision at 11 ({0, .1, ..., 1}) or 40
/// ({1/40, ..., 1}) recall anchors: the mean over anchors of the maximum
/// precision among operating points with recall >= anchor (0 when
/// unreachable). nullopt when gt_count is zero (undefined, distinct from 0).
std::optional<double> average_precision(const PRCurve& curve, int positions);

/// The easiest bucket whose height/occlusion/truncation limits all pass.
Difficulty assign_difficulty(const kitti::LabelRecord& label,
                             const DifficultyRules& rules = {});

/// Fraction of ground truths covered by at least one RoI with
/// iou_3d >= tau. nullopt when gts is empty.
std::optional<double> roi_recall(std::span<const geom::Box3D> rois,
                                 std::span<const geom::Box3D> gts, double tau);

/// Greedy 3D NMS: keep by descending score, suppress remaining boxes with
/// iou_3d strictly above the threshold against any kept box.
std::vector<ScoredBox> nms_3d(std::span<const ScoredBox> dets,
                              double iou_thresh);

// --- dataset-level aggregation -------------------------------------------------

struct SceneGroundTruth {
  std::string id;
  std::vector<kitti::LabelRecord> labels;
  geom::CalibrationSet calib;
};

struct ClassedDetection {
  kitti::ObjectClass cls = kitti::ObjectClass::Car;
  geom::Box3D box;
  double score = 0.0;
};

struct ResultRow {
  std::string cls;
  std::string difficulty;
  std::string metric;  // "ap_3d", "roi_recall_0.5", "roi_recall_0.7"
  int positions = 0;   // 0 for recall rows
  std::optional<double> value;  // empty when undefined (no ground truth)
};

/// KITTI-protocol evaluation over scenes. Buckets are cumulative (easier
/// ground truths stay valid at harder levels); ground truths harder than the
/// evaluated level and DontCare regions are ignore zones: detections matching
/// them are dropped from the curve instead of counting as false positives
/// (DontCare overlap is intersection-over-detection-area > 0.5 on the
/// projected 2D box). Detections of scenes absent from `scenes` are ignored.
std::vector<ResultRow> evaluate_scenes(
    std::span<const SceneGroundTruth> scenes,
    const std::map<std::string, std::vector<ClassedDetection>>& detections,
    const EvalConfig& cfg);

/// CSV with header class,difficulty,metric,positions,value ("nan" when
/// undefined).
std::string to_csv(std::span<const ResultRow> rows);

}  // namespace voxfuse::eval
