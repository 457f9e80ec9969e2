#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxfuse/augment.hpp"
#include "voxfuse/eval.hpp"
#include "voxfuse/rectify.hpp"
#include "voxfuse/voxel.hpp"

namespace voxfuse::pipeline {

/// FCR demo knobs on top of the synthetic candidate generator.
struct FcrDemoConfig {
  rectify::SyntheticConfig synth;
  int epochs = 200;
  double lr = 0.5;
  std::size_t lift_dim = 16;
  std::size_t hidden = 64;
};

/// One JSON file drives every command; flags may override seed, out_dir and
/// jobs. config_hash identifies the parsed content (canonical dump), so
/// formatting and key order do not matter.
struct RunConfig {
  std::filesystem::path dataset_root;
  std::vector<std::string> scene_ids;
  std::filesystem::path sample_db;
  augment::OgsConfig ogs;
  voxel::VoxelGridConfig voxel;
  eval::EvalConfig eval;
  FcrDemoConfig fcr;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  int jobs = 1;
  std::uint64_t config_hash = 0;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::filesystem::path& path);

/// Exit codes shared by all commands: 0 success, 1 partial failure (some
/// scenes failed, run continued), 2 usage or input error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;

/// Draws samples per scene, runs both selection strategies, pastes the
/// occlusion-aware survivors, writes augmented KITTI-format scenes plus a
/// manifest (JSON) and per-scene report (CSV) with retained-count means.
int cmd_augment(const RunConfig& cfg, std::ostream& log);

/// Renders scale-colored projected voxel centers and ground-truth box
/// wireframes over the scene image (PPM out).
int cmd_project(const RunConfig& cfg, const std::string& scene_id,
                std::ostream& log);

/// Evaluates a candidate-format detections file against the dataset labels:
/// AP per class and difficulty plus RoI recall at 0.5/0.7, as CSV.
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& detections,
             std::ostream& log);

/// Fully synthetic: generates candidates, trains the rectification head, and
/// reports the loss trace plus held-out AP of the raw and rectified scores.
int cmd_fcr_demo(const RunConfig& cfg, std::ostream& log);

/// Per-scene, per-scale occupancy and image-coverage statistics (CSV).
int cmd_voxel_stats(const RunConfig& cfg, std::ostream& log);

}  // namespace voxfuse::pipeline
