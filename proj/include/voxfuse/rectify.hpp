#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxfuse/geom.hpp"
#include "voxfuse/nn.hpp"
#include "voxfuse/rng.hpp"

namespace voxfuse::rectify {

/// Small row-major matrix of pooled-source RoI features.
struct FeatMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  const double* row(std::size_t r) const { return data.data() + r * cols; }
};

/// A paired 3D/2D region-of-interest candidate. Rectification only ever
/// writes s_rect; the box geometry and the raw scores are never modified.
struct DetectionCandidate {
  geom::Box3D box3d;
  geom::Box2D box2d;  // box3d projected onto the image plane
  double s3d = 0.0;   // [0, 1]
  double s2d = 0.0;   // [0, 1]
  FeatMatrix feat3d;
  FeatMatrix feat2d;
  std::optional<double> s_rect;
  int class_id = 0;
};

/// Two-net rectification head: score_lift maps the raw score pair to a
/// higher-dimensional embedding; rectifier maps
/// concat(pooled3d, pooled2d, lifted_scores) to one sigmoid output.
struct FcrHead {
  nn::DenseNet score_lift;
  nn::DenseNet rectifier;

  void validate() const;  // final rectifier activation must be sigmoid
};

/// One hidden relu layer of width `hidden` in each net; score lift is
/// 2 -> hidden -> lift_dim, rectifier is (c3+c2+lift_dim) -> hidden -> 1.
FcrHead make_fcr_head(std::size_t c3, std::size_t c2, std::size_t lift_dim,
                      std::size_t hidden, SplitMix64& rng);

struct Pooled {
  std::vector<double> mean;
  bool empty = false;  // rows == 0: mean is all zeros
};

/// Average pooling over the rows, yielding one channel vector.
Pooled pool_roi_features(const FeatMatrix& feat);

/// The rectified confidence: pool both feature matrices, lift the score
/// pair, and run the rectifier on the concatenation. Pure; the caller stores
/// the result. Always in (0, 1).
double rectify(const DetectionCandidate& cand, const FcrHead& head);

/// rectify over a whole set, filling s_rect in place.
void rectify_all(std::vector<DetectionCandidate>& cands, const FcrHead& head);

// --- synthetic candidate generation ------------------------------------------

/// Stand-in for a detector's RoI head: ground-truth boxes plus jittered and
/// pure-noise candidates with independently corrupted 3D/2D scores.
/// Score recipe: s3d = clamp01(best iou3d + score_noise_3d * N(0,1)),
/// s2d the same from the projected boxes' iou2d with independent noise.
/// Feature recipe (deterministic in the true IoU, plus noise):
///   feat3d[r][c] = (0.5 + 0.5 sin(0.7(c+1) + 0.3 r)) * iou3d + feat_noise*N
///   feat2d[r][c] = (0.5 + 0.5 cos(0.7(c+1) + 0.3 r)) * iou2d + feat_noise*N
struct SyntheticConfig {
  int n_gt = 12;
  int jitter_per_gt = 6;
  int noise_boxes = 30;
  double center_jitter = 0.5;   // meters, std
  double dim_jitter = 0.06;     // relative, std
  double yaw_jitter = 0.10;     // radians, std
  double score_noise_3d = 0.28;
  double score_noise_2d = 0.28;
  double feat_noise = 0.12;
  std::size_t feat3d_rows = 4, feat3d_cols = 16;
  std::size_t feat2d_rows = 4, feat2d_cols = 16;
  int image_w = 1242, image_h = 375;
};

struct SyntheticSet {
  std::vector<DetectionCandidate> candidates;
  std::vector<geom::Box3D> gts;
  std::vector<geom::Box2D> gts_2d;
  geom::CalibrationSet calib;
};

/// Deterministic in (config, seed); candidate count is
/// n_gt * jitter_per_gt + noise_boxes.
SyntheticSet make_candidates(const SyntheticConfig& cfg, std::uint64_t seed);

/// y = 1 iff iou_3d against some ground truth reaches the threshold.
std::vector<int> positive_labels(const SyntheticSet& set,
                                 double iou_threshold = 0.7);

// --- training -----------------------------------------------------------------

/// Minimizes binary cross-entropy between s_rect and the labels with
/// deterministic full-batch gradient descent. Returns the mean loss per
/// epoch, evaluated before each update (epochs entries). Throws
/// ContractError on an empty candidate set or a label count mismatch.
std::vector<double> train_fcr(const std::vector<DetectionCandidate>& cands,
                              const std::vector<int>& labels, FcrHead& head,
                              int epochs, double lr);

// --- candidate set exchange ----------------------------------------------------

struct CandidateRecord {
  std::string scene_id;  // empty for synthetic sets
  std::string class_name;
  DetectionCandidate cand;
};

void save_candidates(const std::vector<CandidateRecord>& records,
                     const std::filesystem::path& path);
std::vector<CandidateRecord> load_candidates(const std::filesystem::path& path);

}  // namespace voxfuse::rectify
