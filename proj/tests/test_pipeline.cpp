#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "voxfuse/errors.hpp"
#include "voxfuse/pipeline.hpp"

#include "testutil.hpp"

using namespace voxfuse;
namespace fs = std::filesystem;

namespace {

// Relative path -> file bytes, for whole-tree comparisons.
std::map<std::string, std::vector<std::uint8_t>> read_tree(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    out[fs::relative(entry.path(), root).string()] =
        kitti::read_file(entry.path());
  }
  return out;
}

struct MiniWorld {
  testutil::TempDir tmp{"pipeline"};
  fs::path dataset;
  fs::path db_dir;
  std::vector<std::string> ids;

  explicit MiniWorld(int n_scenes, std::uint64_t seed = 900) {
    dataset = tmp.path() / "data";
    db_dir = tmp.path() / "db";
    for (int i = 0; i < n_scenes; ++i) {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "%06d", i);
      ids.push_back(buf);
    }
    testutil::write_mini_dataset(dataset, ids, seed);
    kitti::save_sample_database(testutil::make_mini_db(14, seed + 1), db_dir);
  }

  pipeline::RunConfig config(const fs::path& out) const {
    pipeline::RunConfig cfg = pipeline::default_run_config();
    cfg.dataset_root = dataset;
    cfg.scene_ids = ids;
    cfg.sample_db = db_dir;
    cfg.out_dir = out;
    cfg.seed = 7;
    cfg.ogs.max_samples = {{"Car", 8}};
    cfg.voxel.range_min = {0.0, -16.0, -2.0};
    cfg.voxel.range_max = {64.0, 16.0, 2.0};
    cfg.voxel.voxel_size = {0.5, 0.5, 0.5};
    cfg.eval.difficulty.min_box_height = {6.0, 3.0, 2.0};
    return cfg;
  }
};

}  // namespace

TEST_CASE("cmd_augment: empty scene list succeeds with an empty manifest") {
  testutil::TempDir tmp("aug_empty");
  pipeline::RunConfig cfg = pipeline::default_run_config();
  cfg.out_dir = tmp.path() / "out";
  std::ostringstream log;
  CHECK(pipeline::cmd_augment(cfg, log) == pipeline::kExitOk);
  const auto manifest = nlohmann::json::parse(
      kitti::read_text_file(cfg.out_dir / "augment_manifest.json"));
  CHECK(manifest.at("scenes").empty());
  CHECK(manifest.at("failed_scenes").empty());
}

TEST_CASE("cmd_augment: missing sample database is a usage error") {
  MiniWorld world(2);
  pipeline::RunConfig cfg = world.config(world.tmp.path() / "out");
  cfg.sample_db = world.tmp.path() / "nope";
  std::ostringstream log;
  CHECK(pipeline::cmd_augment(cfg, log) == pipeline::kExitUsage);
  CHECK(log.str().find("sample database") != std::string::npos);
}

TEST_CASE("cmd_augment: identical config and seed give byte-identical output") {
  MiniWorld world(6);
  std::ostringstream log;
  const auto cfg1 = world.config(world.tmp.path() / "out1");
  const auto cfg2 = world.config(world.tmp.path() / "out2");
  REQUIRE(pipeline::cmd_augment(cfg1, log) == pipeline::kExitOk);
  REQUIRE(pipeline::cmd_augment(cfg2, log) == pipeline::kExitOk);
  const auto tree1 = read_tree(world.tmp.path() / "out1");
  const auto tree2 = read_tree(world.tmp.path() / "out2");
  REQUIRE(tree1.size() == tree2.size());
  REQUIRE(!tree1.empty());
  for (const auto& [rel, bytes] : tree1) {
    REQUIRE(tree2.count(rel) == 1);
    CHECK(tree2.at(rel) == bytes);
  }
  // parallel execution must not change the result
  auto cfg_jobs = world.config(world.tmp.path() / "out3");
  cfg_jobs.jobs = 4;
  REQUIRE(pipeline::cmd_augment(cfg_jobs, log) == pipeline::kExitOk);
  const auto tree3 = read_tree(world.tmp.path() / "out3");
  for (const auto& [rel, bytes] : tree1) CHECK(tree3.at(rel) == bytes);
}

TEST_CASE("cmd_augment: manifest shows the occlusion-aware method retaining more") {
  MiniWorld world(30);
  const auto cfg = world.config(world.tmp.path() / "out");
  std::ostringstream log;
  REQUIRE(pipeline::cmd_augment(cfg, log) == pipeline::kExitOk);
  const auto manifest = nlohmann::json::parse(
      kitti::read_text_file(cfg.out_dir / "augment_manifest.json"));
  const double mean_ogs =
      manifest.at("mean_retained").at("ogs").value("Car", 0.0);
  const double mean_vanilla =
      manifest.at("mean_retained").at("vanilla").value("Car", 0.0);
  CHECK(mean_ogs > mean_vanilla);
  CHECK(manifest.at("seed").get<std::uint64_t>() == 7);

  // augmented scenes parse back and carry the pasted labels
  const auto scene =
      kitti::load_scene(cfg.out_dir / "augmented", world.ids[0]);
  CHECK(scene.labels.size() >= 3);  // originals plus whatever was pasted
}

TEST_CASE("cmd_augment: a broken scene is logged and the run continues") {
  MiniWorld world(3);
  auto cfg = world.config(world.tmp.path() / "out");
  cfg.scene_ids.push_back("999999");  // no such files
  std::ostringstream log;
  CHECK(pipeline::cmd_augment(cfg, log) == pipeline::kExitPartial);
  CHECK(log.str().find("999999") != std::string::npos);
  const auto manifest = nlohmann::json::parse(
      kitti::read_text_file(cfg.out_dir / "augment_manifest.json"));
  CHECK(manifest.at("failed_scenes").size() == 1);
  CHECK(manifest.at("scenes").size() == 3);
}

TEST_CASE("cmd_project: draws into a copy of the scene image") {
  MiniWorld world(1);
  // a bare scene: one known point, no labels
  kitti::Scene bare = testutil::make_mini_scene("000100", 1, 0, 0);
  bare.cloud.points.push_back({20.0f, 0.0f, -1.0f, 0.5f});
  kitti::write_scene(bare, world.dataset);

  auto cfg = world.config(world.tmp.path() / "out");
  std::ostringstream log;
  REQUIRE(pipeline::cmd_project(cfg, "000100", log) == pipeline::kExitOk);
  const auto image =
      kitti::read_ppm(cfg.out_dir / "projection_000100.ppm");
  CHECK(image.width == 160);
  CHECK(image.height == 96);
  // the single point must appear at its projection (+- 1 px rasterization)
  const auto ip = geom::lidar_to_image({20.0, 0.0, -1.0}, bare.calib);
  REQUIRE(ip);
  bool found = false;
  for (int dv = -1; dv <= 1; ++dv) {
    for (int du = -1; du <= 1; ++du) {
      const int u = static_cast<int>(std::lround(ip->u)) + du;
      const int v = static_cast<int>(std::lround(ip->v)) + dv;
      if (u < 0 || v < 0 || u >= 160 || v >= 96) continue;
      const std::uint8_t* px = image.pixel(v, u);
      if (px[0] == 230 && px[1] == 60 && px[2] == 60) found = true;
    }
  }
  CHECK(found);

  // empty scene: output equals the input image
  kitti::Scene empty_scene = testutil::make_mini_scene("000101", 2, 0, 0);
  kitti::write_scene(empty_scene, world.dataset);
  REQUIRE(pipeline::cmd_project(cfg, "000101", log) == pipeline::kExitOk);
  const auto unchanged =
      kitti::read_ppm(cfg.out_dir / "projection_000101.ppm");
  CHECK(unchanged.rgb == empty_scene.image.rgb);

  CHECK(pipeline::cmd_project(cfg, "does_not_exist", log) ==
        pipeline::kExitUsage);
}

TEST_CASE("cmd_eval: verbatim detections score 1.0, empty score 0.0") {
  MiniWorld world(4);
  auto cfg = world.config(world.tmp.path() / "out");
  std::ostringstream log;

  // detections straight from the labels
  std::vector<rectify::CandidateRecord> records;
  for (const auto& id : world.ids) {
    const auto scene = kitti::load_scene(world.dataset, id);
    for (const auto& label : scene.labels) {
      rectify::CandidateRecord rec;
      rec.scene_id = id;
      rec.class_name = label.name;
      rec.cand.box3d = kitti::box3d_from_label(label, scene.calib);
      rec.cand.box2d = label.bbox;
      rec.cand.s3d = 0.9;
      records.push_back(std::move(rec));
    }
  }
  const fs::path dets = world.tmp.path() / "dets.json";
  rectify::save_candidates(records, dets);
  REQUIRE(pipeline::cmd_eval(cfg, dets, log) == pipeline::kExitOk);
  const std::string csv =
      kitti::read_text_file(cfg.out_dir / "eval_results.csv");
  CHECK(csv.find("Car,easy,ap_3d,11,1") != std::string::npos);
  CHECK(csv.find("Car,moderate,ap_3d,11,1") != std::string::npos);
  CHECK(csv.find("Car,hard,ap_3d,11,1") != std::string::npos);

  // empty detections file
  rectify::save_candidates({}, world.tmp.path() / "empty.json");
  REQUIRE(pipeline::cmd_eval(cfg, world.tmp.path() / "empty.json", log) ==
          pipeline::kExitOk);
  const std::string empty_csv =
      kitti::read_text_file(cfg.out_dir / "eval_results.csv");
  CHECK(empty_csv.find("Car,easy,ap_3d,11,0\n") != std::string::npos);

  // schema violation names the record
  kitti::write_text_file(world.tmp.path() / "bad.json",
                         "{\"candidates\": [{\"scene_id\": \"x\"}]}");
  std::ostringstream log2;
  CHECK(pipeline::cmd_eval(cfg, world.tmp.path() / "bad.json", log2) ==
        pipeline::kExitUsage);
  CHECK(log2.str().find("record 0") != std::string::npos);
}

TEST_CASE("cmd_fcr_demo: report shape and determinism") {
  testutil::TempDir tmp("fcr");
  pipeline::RunConfig cfg = pipeline::default_run_config();
  cfg.out_dir = tmp.path() / "out";
  cfg.seed = 3;
  cfg.fcr.epochs = 25;
  cfg.fcr.synth.n_gt = 6;
  cfg.fcr.synth.jitter_per_gt = 4;
  cfg.fcr.synth.noise_boxes = 12;
  std::ostringstream log;
  REQUIRE(pipeline::cmd_fcr_demo(cfg, log) == pipeline::kExitOk);

  const std::string csv = kitti::read_text_file(cfg.out_dir / "fcr_report.csv");
  std::size_t rows = 0;
  for (char ch : csv) rows += (ch == '\n');
  CHECK(rows == 1 + 25 + 1);  // header + epochs + summary

  const auto manifest = nlohmann::json::parse(
      kitti::read_text_file(cfg.out_dir / "fcr_manifest.json"));
  CHECK(manifest.at("seed").get<std::uint64_t>() == 3);
  CHECK(manifest.at("epochs").get<int>() == 25);
  CHECK(manifest.at("ap_srect").get<double>() >= 0.0);

  // same seed, same report
  pipeline::RunConfig cfg2 = cfg;
  cfg2.out_dir = tmp.path() / "out2";
  REQUIRE(pipeline::cmd_fcr_demo(cfg2, log) == pipeline::kExitOk);
  CHECK(kitti::read_text_file(cfg2.out_dir / "fcr_report.csv") == csv);

  // zero epochs: the untrained head is the constant-score baseline
  pipeline::RunConfig cfg0 = cfg;
  cfg0.out_dir = tmp.path() / "out0";
  cfg0.fcr.epochs = 0;
  REQUIRE(pipeline::cmd_fcr_demo(cfg0, log) == pipeline::kExitOk);
  const std::string csv0 =
      kitti::read_text_file(cfg0.out_dir / "fcr_report.csv");
  std::size_t rows0 = 0;
  for (char ch : csv0) rows0 += (ch == '\n');
  CHECK(rows0 == 2);  // header + summary only
}

TEST_CASE("cmd_voxel_stats: per-scale rows with growing cumulative coverage") {
  MiniWorld world(2);
  const auto cfg = world.config(world.tmp.path() / "out");
  std::ostringstream log;
  REQUIRE(pipeline::cmd_voxel_stats(cfg, log) == pipeline::kExitOk);
  const std::string csv =
      kitti::read_text_file(cfg.out_dir / "voxel_stats.csv");
  // 1 header + 4 scales x 2 scenes
  std::size_t rows = 0;
  for (char ch : csv) rows += (ch == '\n');
  CHECK(rows == 1 + 8);
  CHECK(csv.find("000000,0,") != std::string::npos);
  CHECK(csv.find("000001,3,") != std::string::npos);
}

TEST_CASE("run config files parse with overrides and hash stability") {
  testutil::TempDir tmp("cfg");
  const std::string text = R"json({
    "dataset_root": "somewhere",
    "scene_ids": ["000000", "000001"],
    "seed": 42,
    "jobs": 3,
    "ogs": {"tau1": 0.1, "tau2": 0.4, "rule": "and", "max_samples": {"Car": 5}},
    "voxel": {"num_scales": 3},
    "eval": {"recall_positions": 40},
    "fcr": {"epochs": 17, "lr": 0.25}
  })json";
  kitti::write_text_file(tmp.path() / "cfg.json", text);
  const auto cfg = pipeline::load_run_config(tmp.path() / "cfg.json");
  CHECK(cfg.dataset_root == "somewhere");
  CHECK(cfg.scene_ids.size() == 2);
  CHECK(cfg.seed == 42);
  CHECK(cfg.jobs == 3);
  CHECK(cfg.ogs.tau1 == doctest::Approx(0.1));
  CHECK(cfg.ogs.rule == augment::OcclusionRule::BothPlanes);
  CHECK(cfg.ogs.max_samples.at("Car") == 5);
  CHECK(cfg.voxel.num_scales == 3);
  CHECK(cfg.eval.recall_positions == 40);
  CHECK(cfg.fcr.epochs == 17);
  CHECK(cfg.fcr.lr == doctest::Approx(0.25));

  // formatting does not change the hash; content does
  kitti::write_text_file(tmp.path() / "cfg2.json",
                         nlohmann::json::parse(text).dump(4));
  CHECK(pipeline::load_run_config(tmp.path() / "cfg2.json").config_hash ==
        cfg.config_hash);
  auto changed = nlohmann::json::parse(text);
  changed["seed"] = 43;
  kitti::write_text_file(tmp.path() / "cfg3.json", changed.dump());
  CHECK(pipeline::load_run_config(tmp.path() / "cfg3.json").config_hash !=
        cfg.config_hash);

  CHECK_THROWS_AS(pipeline::load_run_config(tmp.path() / "missing.json"),
                  IoError);
  kitti::write_text_file(tmp.path() / "broken.json", "{nope");
  CHECK_THROWS_AS(pipeline::load_run_config(tmp.path() / "broken.json"),
                  FormatError);
}
