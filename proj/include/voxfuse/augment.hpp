#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "voxfuse/geom.hpp"
#include "voxfuse/kitti.hpp"
#include "voxfuse/rng.hpp"

namespace voxfuse::augment {

/// A database object placed into a target scene. box2d is the image patch
/// placement: the projection of box3d under the target scene's calibration.
struct SampledObject {
  geom::Box3D box3d;
  geom::Box2D box2d;
  int entry_id = -1;  // index into the sample database
  int class_id = 0;   // kitti::ObjectClass value
};

/// A box that can occlude samples (ground truth or another sample).
struct OccluderBox {
  geom::Box3D box3d;
  geom::Box2D box2d;
};

/// Two boxes conflict when their BEV IoU exceeds tau1 or their image IoU
/// exceeds tau2 (AnyPlane, the default), or only when both do (BothPlanes).
enum class OcclusionRule { AnyPlane, BothPlanes };

struct OgsConfig {
  double tau1 = 0.05;  // BEV-plane occlusion threshold
  double tau2 = 0.5;   // image-plane occlusion threshold
  OcclusionRule rule = OcclusionRule::AnyPlane;
  std::map<std::string, int> max_samples;  // per class name, for draw_samples

  void validate() const;  // taus in [0, 1)
};

/// For each sampled object, the number of DISTINCT other boxes (other samples
/// and every ground truth) it is occluded with. Self-pairs excluded.
std::vector<int> occlusion_counts(std::span<const SampledObject> samples,
                                  std::span<const OccluderBox> gts,
                                  const OgsConfig& cfg);

/// Iteratively removes the most heavily occluded sampled object (ties break
/// to the lowest index) and recounts, until no sample is occluded. Keeps the
/// survivors in input order. Terminates in at most |samples| rounds.
std::vector<SampledObject> ogs_select(std::span<const SampledObject> samples,
                                      std::span<const OccluderBox> gts,
                                      const OgsConfig& cfg);

/// The plain cross-modal baseline: greedy in input order, a sample is kept
/// only when it conflicts with no already-kept sample and no ground truth.
std::vector<SampledObject> vanilla_select(
    std::span<const SampledObject> samples, std::span<const OccluderBox> gts,
    const OgsConfig& cfg);

/// Draws up to max_samples[class] database entries per class (shuffled by the
/// rng), placing each at its original pose; entries whose box does not
/// project into the scene's image are skipped.
std::vector<SampledObject> draw_samples(const kitti::SampleDatabase& db,
                                        const kitti::Scene& scene,
                                        const OgsConfig& cfg, SplitMix64& rng);

/// Pastes retained objects into the scene: object points are transformed to
/// their scene pose and appended, original points inside any pasted box are
/// removed, image patches are composited at box2d (far-to-near, clipped to
/// the image), and labels are appended.
kitti::Scene paste_samples(const kitti::Scene& scene,
                           std::span<const SampledObject> retained,
                           const kitti::SampleDatabase& db);

// Plain whole-cloud transforms for standard augmentation recipes.
void flip_y(kitti::PointCloud& cloud);
void global_rotate(kitti::PointCloud& cloud, double angle);
void global_scale(kitti::PointCloud& cloud, double factor);

}  // namespace voxfuse::augment
