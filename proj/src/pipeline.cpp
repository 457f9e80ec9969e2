#include "voxfuse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "voxfuse/errors.hpp"
#include "voxfuse/fusion.hpp"
#include "voxfuse/rng.hpp"

namespace voxfuse::pipeline {

namespace {

// Plain (key-sorted) json: canonical dumps for hashing, deterministic output.
using json = nlohmann::json;

geom::Vec3 vec3_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

void parse_into(RunConfig& cfg, const json& j) {
  if (j.contains("dataset_root"))
    cfg.dataset_root = j.at("dataset_root").get<std::string>();
  if (j.contains("scene_ids"))
    cfg.scene_ids = j.at("scene_ids").get<std::vector<std::string>>();
  if (j.contains("sample_db"))
    cfg.sample_db = j.at("sample_db").get<std::string>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
  if (j.contains("ogs")) {
    const json& o = j.at("ogs");
    if (o.contains("tau1")) cfg.ogs.tau1 = o.at("tau1").get<double>();
    if (o.contains("tau2")) cfg.ogs.tau2 = o.at("tau2").get<double>();
    if (o.contains("rule")) {
      const auto rule = o.at("rule").get<std::string>();
      if (rule == "or")
        cfg.ogs.rule = augment::OcclusionRule::AnyPlane;
      else if (rule == "and")
        cfg.ogs.rule = augment::OcclusionRule::BothPlanes;
      else
        throw FormatError("config: ogs.rule must be 'or' or 'and'");
    }
    if (o.contains("max_samples"))
      cfg.ogs.max_samples =
          o.at("max_samples").get<std::map<std::string, int>>();
  }
  if (j.contains("voxel")) {
    const json& v = j.at("voxel");
    if (v.contains("range_min"))
      cfg.voxel.range_min = vec3_from_json(v.at("range_min"));
    if (v.contains("range_max"))
      cfg.voxel.range_max = vec3_from_json(v.at("range_max"));
    if (v.contains("voxel_size"))
      cfg.voxel.voxel_size = vec3_from_json(v.at("voxel_size"));
    if (v.contains("num_scales"))
      cfg.voxel.num_scales = v.at("num_scales").get<int>();
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    if (e.contains("recall_positions"))
      cfg.eval.recall_positions = e.at("recall_positions").get<int>();
    if (e.contains("iou_thresholds")) {
      for (const auto& [name, thresh] :
           e.at("iou_thresholds").get<std::map<std::string, double>>()) {
        cfg.eval.iou_threshold[kitti::class_from_name(name)] = thresh;
      }
    }
    if (e.contains("difficulty")) {
      const json& d = e.at("difficulty");
      auto& rules = cfg.eval.difficulty;
      for (int i = 0; i < 3; ++i) {
        if (d.contains("min_box_height"))
          rules.min_box_height[i] = d.at("min_box_height").at(i).get<double>();
        if (d.contains("max_occlusion"))
          rules.max_occlusion[i] = d.at("max_occlusion").at(i).get<int>();
        if (d.contains("max_truncation"))
          rules.max_truncation[i] = d.at("max_truncation").at(i).get<double>();
      }
    }
  }
  if (j.contains("fcr")) {
    const json& f = j.at("fcr");
    auto& s = cfg.fcr.synth;
    if (f.contains("epochs")) cfg.fcr.epochs = f.at("epochs").get<int>();
    if (f.contains("lr")) cfg.fcr.lr = f.at("lr").get<double>();
    if (f.contains("lift_dim"))
      cfg.fcr.lift_dim = f.at("lift_dim").get<std::size_t>();
    if (f.contains("hidden")) cfg.fcr.hidden = f.at("hidden").get<std::size_t>();
    if (f.contains("n_gt")) s.n_gt = f.at("n_gt").get<int>();
    if (f.contains("jitter_per_gt"))
      s.jitter_per_gt = f.at("jitter_per_gt").get<int>();
    if (f.contains("noise_boxes")) s.noise_boxes = f.at("noise_boxes").get<int>();
    if (f.contains("score_noise_3d"))
      s.score_noise_3d = f.at("score_noise_3d").get<double>();
    if (f.contains("score_noise_2d"))
      s.score_noise_2d = f.at("score_noise_2d").get<double>();
    if (f.contains("feat_noise")) s.feat_noise = f.at("feat_noise").get<double>();
  }
}

std::uint64_t scene_seed(const RunConfig& cfg, const std::string& id) {
  return cfg.seed ^ fnv1a64(id);
}

// Bounded worker pool over scene indices; results land in per-index slots so
// aggregation order never depends on scheduling.
void for_each_index(std::size_t n, int jobs,
                    const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const int workers = std::min<int>(jobs, static_cast<int>(n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
        fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::string hash_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::vector<augment::OccluderBox> scene_occluders(const kitti::Scene& scene) {
  std::vector<augment::OccluderBox> out;
  for (const kitti::LabelRecord& label : scene.labels) {
    if (label.dont_care()) continue;
    out.push_back(augment::OccluderBox{
        kitti::box3d_from_label(label, scene.calib), label.bbox});
  }
  return out;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.ogs.max_samples = {{"Car", 12}, {"Pedestrian", 6}, {"Cyclist", 6}};
  cfg.config_hash = fnv1a64(json::object().dump());
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(kitti::read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  RunConfig cfg = default_run_config();
  try {
    parse_into(cfg, j);
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  cfg.config_hash = fnv1a64(j.dump());
  return cfg;
}

int cmd_augment(const RunConfig& cfg, std::ostream& log) {
  kitti::SampleDatabase db;
  if (!cfg.scene_ids.empty()) {
    try {
      db = kitti::load_sample_database(cfg.sample_db);
    } catch (const Error& e) {
      log << "augment: cannot load sample database: " << e.what() << "\n";
      return kExitUsage;
    }
  }

  struct SceneResult {
    std::map<std::string, int> requested, ogs_kept, vanilla_kept;
    std::string error;
  };
  std::vector<SceneResult> results(cfg.scene_ids.size());

  for_each_index(cfg.scene_ids.size(), cfg.jobs, [&](std::size_t i) {
    const std::string& id = cfg.scene_ids[i];
    SceneResult& res = results[i];
    try {
      const kitti::Scene scene = kitti::load_scene(cfg.dataset_root, id);
      SplitMix64 rng(scene_seed(cfg, id));
      const auto drawn = augment::draw_samples(db, scene, cfg.ogs, rng);
      const auto occluders = scene_occluders(scene);
      const auto kept_ogs = augment::ogs_select(drawn, occluders, cfg.ogs);
      const auto kept_vanilla =
          augment::vanilla_select(drawn, occluders, cfg.ogs);
      auto count_by_class = [](std::span<const augment::SampledObject> v,
                               std::map<std::string, int>& into) {
        for (const auto& s : v)
          ++into[std::string(kitti::class_name(
              static_cast<kitti::ObjectClass>(s.class_id)))];
      };
      count_by_class(drawn, res.requested);
      count_by_class(kept_ogs, res.ogs_kept);
      count_by_class(kept_vanilla, res.vanilla_kept);
      kitti::Scene augmented = augment::paste_samples(scene, kept_ogs, db);
      kitti::write_scene(augmented, cfg.out_dir / "augmented");
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  });

  // aggregate in scene order
  json scenes = json::array();
  std::map<std::string, double> sum_ogs, sum_vanilla;
  std::vector<std::string> failed;
  std::string report_csv = "scene_id,class,requested,ogs_retained,vanilla_retained\n";
  for (std::size_t i = 0; i < cfg.scene_ids.size(); ++i) {
    const SceneResult& res = results[i];
    const std::string& id = cfg.scene_ids[i];
    if (!res.error.empty()) {
      failed.push_back(id);
      log << "augment: scene " << id << " failed: " << res.error << "\n";
      continue;
    }
    json entry{{"id", id},
               {"requested", res.requested},
               {"ogs_retained", res.ogs_kept},
               {"vanilla_retained", res.vanilla_kept}};
    scenes.push_back(entry);
    for (const auto& [cls, n] : res.requested) {
      const auto it_o = res.ogs_kept.find(cls);
      const auto it_v = res.vanilla_kept.find(cls);
      const int kept_o = it_o == res.ogs_kept.end() ? 0 : it_o->second;
      const int kept_v = it_v == res.vanilla_kept.end() ? 0 : it_v->second;
      sum_ogs[cls] += kept_o;
      sum_vanilla[cls] += kept_v;
      report_csv += id + "," + cls + "," + std::to_string(n) + "," +
                    std::to_string(kept_o) + "," + std::to_string(kept_v) + "\n";
    }
  }

  const double n_ok =
      static_cast<double>(cfg.scene_ids.size() - failed.size());
  json mean_ogs = json::object(), mean_vanilla = json::object();
  if (n_ok > 0) {
    for (const auto& [cls, total] : sum_ogs) mean_ogs[cls] = total / n_ok;
    for (const auto& [cls, total] : sum_vanilla)
      mean_vanilla[cls] = total / n_ok;
  }
  const json manifest{{"command", "augment"},
                      {"seed", cfg.seed},
                      {"config_hash", hash_hex(cfg.config_hash)},
                      {"tau1", cfg.ogs.tau1},
                      {"tau2", cfg.ogs.tau2},
                      {"rule", cfg.ogs.rule == augment::OcclusionRule::AnyPlane
                                   ? "or"
                                   : "and"},
                      {"scenes", scenes},
                      {"mean_retained",
                       {{"ogs", mean_ogs}, {"vanilla", mean_vanilla}}},
                      {"failed_scenes", failed}};
  kitti::write_text_file(cfg.out_dir / "augment_manifest.json",
                         manifest.dump(2) + "\n");
  kitti::write_text_file(cfg.out_dir / "augment_report.csv", report_csv);
  return failed.empty() ? kExitOk : kExitPartial;
}

namespace {

void put_pixel(kitti::ImageRaster& img, int u, int v, const std::uint8_t rgb[3]) {
  if (u < 0 || v < 0 || u >= img.width || v >= img.height) return;
  std::uint8_t* px = img.pixel(v, u);
  px[0] = rgb[0];
  px[1] = rgb[1];
  px[2] = rgb[2];
}

void draw_line(kitti::ImageRaster& img, double u0, double v0, double u1,
               double v1, const std::uint8_t rgb[3]) {
  const double du = u1 - u0, dv = v1 - v0;
  const int steps =
      1 + static_cast<int>(std::max(std::abs(du), std::abs(dv)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    put_pixel(img, static_cast<int>(std::lround(u0 + t * du)),
              static_cast<int>(std::lround(v0 + t * dv)), rgb);
  }
}

}  // namespace

int cmd_project(const RunConfig& cfg, const std::string& scene_id,
                std::ostream& log) {
  kitti::Scene scene;
  try {
    scene = kitti::load_scene(cfg.dataset_root, scene_id);
  } catch (const Error& e) {
    log << "project: cannot load scene " << scene_id << ": " << e.what()
        << "\n";
    return kExitUsage;
  }

  voxel::SparseVoxelGrid grid = voxel::voxelize(scene.cloud, cfg.voxel);
  voxel::build_scales(grid);

  kitti::ImageRaster canvas = scene.image;
  static constexpr std::uint8_t kScaleColors[4][3] = {
      {230, 60, 60}, {60, 200, 60}, {70, 110, 245}, {230, 210, 50}};
  const geom::Mat34 proj = scene.calib.image_from_lidar();
  for (int k = 0; k < static_cast<int>(grid.levels.size()); ++k) {
    const auto centers = voxel::voxel_centers(grid, k);
    for (const geom::Vec3& c : centers) {
      const auto ip = geom::lidar_to_image(c, proj);
      if (!ip) continue;  // behind the camera
      put_pixel(canvas, static_cast<int>(std::lround(ip->u)),
                static_cast<int>(std::lround(ip->v)), kScaleColors[k % 4]);
    }
  }

  static constexpr std::uint8_t kBoxColor[3] = {255, 255, 255};
  static constexpr int kEdges[12][2] = {{0, 1}, {1, 3}, {3, 2}, {2, 0},
                                        {4, 5}, {5, 7}, {7, 6}, {6, 4},
                                        {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  for (const kitti::LabelRecord& label : scene.labels) {
    if (label.dont_care()) continue;
    const geom::Box3D box = kitti::box3d_from_label(label, scene.calib);
    const auto corners = geom::box3d_corners(box);
    std::array<std::optional<geom::ImagePoint>, 8> pts;
    for (int c = 0; c < 8; ++c) pts[c] = geom::lidar_to_image(corners[c], proj);
    for (const auto& e : kEdges) {
      if (!pts[e[0]] || !pts[e[1]]) continue;
      draw_line(canvas, pts[e[0]]->u, pts[e[0]]->v, pts[e[1]]->u, pts[e[1]]->v,
                kBoxColor);
    }
  }

  kitti::write_ppm(canvas, cfg.out_dir / ("projection_" + scene_id + ".ppm"));
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& detections,
             std::ostream& log) {
  std::vector<rectify::CandidateRecord> records;
  try {
    records = rectify::load_candidates(detections);
  } catch (const Error& e) {
    log << "eval: " << e.what() << "\n";
    return kExitUsage;
  }

  std::map<std::string, std::vector<eval::ClassedDetection>> dets;
  for (const auto& rec : records) {
    dets[rec.scene_id].push_back(eval::ClassedDetection{
        kitti::class_from_name(rec.class_name), rec.cand.box3d,
        rec.cand.s_rect.value_or(rec.cand.s3d)});
  }

  std::vector<eval::SceneGroundTruth> scenes;
  for (const std::string& id : cfg.scene_ids) {
    try {
      eval::SceneGroundTruth gt;
      gt.id = id;
      gt.labels = kitti::parse_labels(kitti::read_text_file(
          cfg.dataset_root / "label_2" / (id + ".txt")));
      gt.calib = kitti::parse_calibration(kitti::read_text_file(
          cfg.dataset_root / "calib" / (id + ".txt")));
      scenes.push_back(std::move(gt));
    } catch (const Error& e) {
      log << "eval: scene " << id << ": " << e.what() << "\n";
      return kExitUsage;
    }
  }

  const auto rows = eval::evaluate_scenes(scenes, dets, cfg.eval);
  const std::string csv = eval::to_csv(rows);
  kitti::write_text_file(cfg.out_dir / "eval_results.csv", csv);
  log << csv;
  return kExitOk;
}

int cmd_fcr_demo(const RunConfig& cfg, std::ostream& log) {
  SplitMix64 seeder(cfg.seed);
  const std::uint64_t train_seed = seeder.next();
  const std::uint64_t heldout_seed = seeder.next();
  const std::uint64_t head_seed = seeder.next();

  const auto train_set = rectify::make_candidates(cfg.fcr.synth, train_seed);
  const auto heldout = rectify::make_candidates(cfg.fcr.synth, heldout_seed);
  const auto train_labels = rectify::positive_labels(train_set);

  SplitMix64 head_rng(head_seed);
  rectify::FcrHead head = rectify::make_fcr_head(
      cfg.fcr.synth.feat3d_cols, cfg.fcr.synth.feat2d_cols, cfg.fcr.lift_dim,
      cfg.fcr.hidden, head_rng);
  const auto trace = rectify::train_fcr(train_set.candidates, train_labels,
                                        head, cfg.fcr.epochs, cfg.fcr.lr);

  auto heldout_ap = [&](auto&& score_of) {
    std::vector<eval::ScoredBox> dets;
    dets.reserve(heldout.candidates.size());
    for (const auto& cand : heldout.candidates)
      dets.push_back({cand.box3d, score_of(cand)});
    const auto curve = eval::match_detections(dets, heldout.gts, 0.7);
    return eval::average_precision(curve, cfg.eval.recall_positions).value_or(0.0);
  };
  const double ap_s3d =
      heldout_ap([](const rectify::DetectionCandidate& c) { return c.s3d; });
  const double ap_s2d =
      heldout_ap([](const rectify::DetectionCandidate& c) { return c.s2d; });
  std::vector<rectify::DetectionCandidate> rectified = heldout.candidates;
  rectify::rectify_all(rectified, head);
  std::vector<eval::ScoredBox> dets;
  for (const auto& cand : rectified) dets.push_back({cand.box3d, *cand.s_rect});
  const double ap_srect =
      eval::average_precision(eval::match_detections(dets, heldout.gts, 0.7),
                              cfg.eval.recall_positions)
          .value_or(0.0);

  std::string csv = "kind,epoch,loss,ap_s3d,ap_s2d,ap_srect\n";
  for (std::size_t e = 0; e < trace.size(); ++e) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "loss,%zu,%.17g,,,\n", e, trace[e]);
    csv += buf;
  }
  {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "summary,,,%.17g,%.17g,%.17g\n", ap_s3d,
                  ap_s2d, ap_srect);
    csv += buf;
  }
  kitti::write_text_file(cfg.out_dir / "fcr_report.csv", csv);
  nn::save_net(head.score_lift, cfg.out_dir / "fcr_score_lift.json");
  nn::save_net(head.rectifier, cfg.out_dir / "fcr_rectifier.json");

  const json manifest{
      {"command", "fcr-demo"},
      {"seed", cfg.seed},
      {"config_hash", hash_hex(cfg.config_hash)},
      {"epochs", cfg.fcr.epochs},
      {"lr", cfg.fcr.lr},
      {"ap_s3d", ap_s3d},
      {"ap_s2d", ap_s2d},
      {"ap_srect", ap_srect},
      {"final_loss", trace.empty() ? 0.0 : trace.back()}};
  kitti::write_text_file(cfg.out_dir / "fcr_manifest.json",
                         manifest.dump(2) + "\n");
  log << "fcr-demo: ap(s3d)=" << ap_s3d << " ap(s2d)=" << ap_s2d
      << " ap(s_rect)=" << ap_srect << "\n";
  return kExitOk;
}

int cmd_voxel_stats(const RunConfig& cfg, std::ostream& log) {
  struct Row {
    std::string csv;
    std::string error;
  };
  std::vector<Row> rows(cfg.scene_ids.size());
  for_each_index(cfg.scene_ids.size(), cfg.jobs, [&](std::size_t i) {
    const std::string& id = cfg.scene_ids[i];
    try {
      const kitti::Scene scene = kitti::load_scene(cfg.dataset_root, id);
      voxel::VoxelizeStats stats;
      voxel::SparseVoxelGrid grid = voxel::voxelize(scene.cloud, cfg.voxel, &stats);
      voxel::build_scales(grid);
      const auto coverage = fusion::sample_coverage(
          grid, scene.calib, scene.image.width, scene.image.height);
      std::string out;
      for (std::size_t k = 0; k < grid.levels.size(); ++k) {
        out += id + "," + std::to_string(k) + "," +
               std::to_string(grid.levels[k].count()) + "," +
               std::to_string(coverage.per_scale[k]) + "," +
               std::to_string(coverage.cumulative[k]) + "," +
               std::to_string(stats.dropped) + "\n";
      }
      rows[i].csv = std::move(out);
    } catch (const std::exception& e) {
      rows[i].error = e.what();
    }
  });

  std::string csv =
      "scene_id,scale,occupied,image_positions,cumulative_positions,dropped_points\n";
  bool any_failed = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].error.empty()) {
      any_failed = true;
      log << "voxel-stats: scene " << cfg.scene_ids[i] << " failed: "
          << rows[i].error << "\n";
      continue;
    }
    csv += rows[i].csv;
  }
  kitti::write_text_file(cfg.out_dir / "voxel_stats.csv", csv);
  log << csv;
  return any_failed ? kExitPartial : kExitOk;
}

}  // namespace voxfuse::pipeline
