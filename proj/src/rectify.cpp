#include "voxfuse/rectify.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "voxfuse/errors.hpp"
#include "voxfuse/kernels.hpp"
#include "voxfuse/kitti.hpp"

namespace voxfuse::rectify {

namespace {

using json = nlohmann::ordered_json;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// KITTI-style synthetic rig: LiDAR (x fwd, y left, z up) to camera
// (x right, y down, z fwd), pinhole f=721.5377 on a 1242x375 image.
geom::CalibrationSet synthetic_calib(int image_w, int image_h) {
  geom::CalibrationSet calib;
  calib.cam_from_lidar.m = {0, -1, 0, 0,  //
                            0, 0, -1, 0,  //
                            1, 0, 0, 0,   //
                            0, 0, 0, 1};
  const double f = 721.5377;
  calib.img_from_cam.m = {f, 0, image_w / 2.0, 0,  //
                          0, f, image_h / 2.0, 0,  //
                          0, 0, 1, 0};
  return calib;
}

geom::Box3D random_car_box(SplitMix64& rng) {
  geom::Box3D b;
  b.center = {rng.uniform(10.0, 55.0), rng.uniform(-8.0, 8.0),
              rng.uniform(-1.2, -0.6)};
  b.dims = {rng.uniform(3.4, 4.5), rng.uniform(1.5, 1.8),
            rng.uniform(1.4, 1.7)};
  b.yaw = geom::normalize_angle(rng.uniform(-M_PI, M_PI));
  return b;
}

double best_iou3d(const geom::Box3D& box, const std::vector<geom::Box3D>& gts) {
  double best = 0.0;
  for (const auto& gt : gts) best = std::max(best, geom::iou_3d(box, gt));
  return best;
}

double best_iou2d(const geom::Box2D& box, const std::vector<geom::Box2D>& gts) {
  double best = 0.0;
  for (const auto& gt : gts) best = std::max(best, geom::iou_2d(box, gt));
  return best;
}

FeatMatrix make_features(std::size_t rows, std::size_t cols, double iou,
                         double noise, bool sine_basis, SplitMix64& rng) {
  FeatMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double phase = 0.7 * static_cast<double>(c + 1) + 0.3 * r;
      const double basis =
          0.5 + 0.5 * (sine_basis ? std::sin(phase) : std::cos(phase));
      m.data[r * cols + c] = basis * iou + noise * rng.normal();
    }
  }
  return m;
}

json feat_to_json(const FeatMatrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

FeatMatrix feat_from_json(const json& j) {
  FeatMatrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols)
    throw FormatError("candidate feature matrix: data size mismatch");
  return m;
}

json box3d_to_json(const geom::Box3D& b) {
  return json{{"center", {b.center.x, b.center.y, b.center.z}},
              {"dims", {b.dims.x, b.dims.y, b.dims.z}},
              {"yaw", b.yaw}};
}

geom::Box3D box3d_from_json(const json& j) {
  return {{j.at("center").at(0).get<double>(),
           j.at("center").at(1).get<double>(),
           j.at("center").at(2).get<double>()},
          {j.at("dims").at(0).get<double>(), j.at("dims").at(1).get<double>(),
           j.at("dims").at(2).get<double>()},
          j.at("yaw").get<double>()};
}

}  // namespace

void FcrHead::validate() const {
  score_lift.validate();
  rectifier.validate();
  if (score_lift.input_dim() != 2)
    throw ContractError("fcr head: score lift must take the two raw scores");
  if (rectifier.output_dim() != 1 ||
      rectifier.layers.back().act != nn::Activation::Sigmoid)
    throw ContractError("fcr head: rectifier must end in one sigmoid output");
}

FcrHead make_fcr_head(std::size_t c3, std::size_t c2, std::size_t lift_dim,
                      std::size_t hidden, SplitMix64& rng) {
  FcrHead head;
  head.score_lift = nn::make_net(
      2, {{hidden, nn::Activation::Relu}, {lift_dim, nn::Activation::Identity}},
      rng);
  head.rectifier = nn::make_net(c3 + c2 + lift_dim,
                                {{hidden, nn::Activation::Relu},
                                 {1, nn::Activation::Sigmoid}},
                                rng);
  head.validate();
  return head;
}

Pooled pool_roi_features(const FeatMatrix& feat) {
  Pooled out;
  out.mean.assign(feat.cols, 0.0);
  if (feat.rows == 0) {
    out.empty = true;
    return out;
  }
  kernels::mean_rows(feat.data.data(), feat.rows, feat.cols, out.mean.data());
  return out;
}

namespace {

struct RectifyTrace {
  std::vector<double> lift_in;
  std::vector<double> lift_out;
  std::vector<double> rect_in;
  double s = 0.0;
};

RectifyTrace rectify_trace(const DetectionCandidate& cand,
                           const FcrHead& head) {
  const Pooled p3 = pool_roi_features(cand.feat3d);
  const Pooled p2 = pool_roi_features(cand.feat2d);
  RectifyTrace t;
  t.lift_in = {cand.s3d, cand.s2d};
  t.lift_out = nn::forward(head.score_lift, t.lift_in);
  if (p3.mean.size() + p2.mean.size() + t.lift_out.size() !=
      head.rectifier.input_dim())
    throw ContractError("rectify: feature widths do not match the head");
  t.rect_in.reserve(head.rectifier.input_dim());
  t.rect_in.insert(t.rect_in.end(), p3.mean.begin(), p3.mean.end());
  t.rect_in.insert(t.rect_in.end(), p2.mean.begin(), p2.mean.end());
  t.rect_in.insert(t.rect_in.end(), t.lift_out.begin(), t.lift_out.end());
  t.s = nn::forward(head.rectifier, t.rect_in)[0];
  return t;
}

}  // namespace

double rectify(const DetectionCandidate& cand, const FcrHead& head) {
  return rectify_trace(cand, head).s;
}

void rectify_all(std::vector<DetectionCandidate>& cands, const FcrHead& head) {
  for (auto& cand : cands) cand.s_rect = rectify(cand, head);
}

SyntheticSet make_candidates(const SyntheticConfig& cfg, std::uint64_t seed) {
  SplitMix64 rng(seed);
  SyntheticSet set;
  set.calib = synthetic_calib(cfg.image_w, cfg.image_h);

  // Ground truth: spaced car-like boxes that project onto the image.
  while (static_cast<int>(set.gts.size()) < cfg.n_gt) {
    const geom::Box3D box = random_car_box(rng);
    bool ok = true;
    for (const auto& gt : set.gts) {
      const double dx = box.center.x - gt.center.x;
      const double dy = box.center.y - gt.center.y;
      if (dx * dx + dy * dy < 7.0 * 7.0) ok = false;
    }
    if (!ok) continue;
    const auto b2 =
        geom::project_box3d_to_2d(box, set.calib, cfg.image_w, cfg.image_h);
    if (!b2) continue;
    set.gts.push_back(box);
    set.gts_2d.push_back(*b2);
  }

  auto push_candidate = [&](const geom::Box3D& box) {
    const auto b2 =
        geom::project_box3d_to_2d(box, set.calib, cfg.image_w, cfg.image_h);
    if (!b2) return false;
    DetectionCandidate cand;
    cand.box3d = box;
    cand.box2d = *b2;
    const double iou3 = best_iou3d(box, set.gts);
    const double iou2 = best_iou2d(*b2, set.gts_2d);
    cand.s3d = clamp01(iou3 + cfg.score_noise_3d * rng.normal());
    cand.s2d = clamp01(iou2 + cfg.score_noise_2d * rng.normal());
    cand.feat3d = make_features(cfg.feat3d_rows, cfg.feat3d_cols, iou3,
                                cfg.feat_noise, true, rng);
    cand.feat2d = make_features(cfg.feat2d_rows, cfg.feat2d_cols, iou2,
                                cfg.feat_noise, false, rng);
    set.candidates.push_back(std::move(cand));
    return true;
  };

  for (const geom::Box3D& gt : set.gts) {
    int made = 0;
    while (made < cfg.jitter_per_gt) {
      geom::Box3D box = gt;
      box.center.x += cfg.center_jitter * rng.normal();
      box.center.y += cfg.center_jitter * rng.normal();
      box.center.z += 0.3 * cfg.center_jitter * rng.normal();
      box.dims.x *= 1.0 + cfg.dim_jitter * rng.normal();
      box.dims.y *= 1.0 + cfg.dim_jitter * rng.normal();
      box.dims.z *= 1.0 + cfg.dim_jitter * rng.normal();
      box.dims.x = std::max(box.dims.x, 0.3);
      box.dims.y = std::max(box.dims.y, 0.3);
      box.dims.z = std::max(box.dims.z, 0.3);
      box.yaw = geom::normalize_angle(box.yaw + cfg.yaw_jitter * rng.normal());
      if (push_candidate(box)) ++made;
    }
  }
  int noise_made = 0;
  while (noise_made < cfg.noise_boxes) {
    if (push_candidate(random_car_box(rng))) ++noise_made;
  }
  return set;
}

std::vector<int> positive_labels(const SyntheticSet& set,
                                 double iou_threshold) {
  std::vector<int> labels;
  labels.reserve(set.candidates.size());
  for (const auto& cand : set.candidates)
    labels.push_back(best_iou3d(cand.box3d, set.gts) >= iou_threshold ? 1 : 0);
  return labels;
}

std::vector<double> train_fcr(const std::vector<DetectionCandidate>& cands,
                              const std::vector<int>& labels, FcrHead& head,
                              int epochs, double lr) {
  if (cands.empty()) throw ContractError("train_fcr: empty candidate set");
  if (labels.size() != cands.size())
    throw ContractError("train_fcr: label count mismatch");
  for (int y : labels)
    if (y != 0 && y != 1)
      throw ContractError("train_fcr: labels must be 0 or 1");
  head.validate();

  const double inv_n = 1.0 / static_cast<double>(cands.size());
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(std::max(epochs, 0)));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    nn::Gradients grad_rect = nn::Gradients::zeros_like(head.rectifier);
    nn::Gradients grad_lift = nn::Gradients::zeros_like(head.score_lift);
    double loss = 0.0;
    for (std::size_t n = 0; n < cands.size(); ++n) {
      const RectifyTrace t = rectify_trace(cands[n], head);
      const double y = static_cast<double>(labels[n]);
      loss += nn::bce_loss(t.s, y);
      const double g_out = nn::bce_output_grad(t.s, y);
      const nn::Gradients gr =
          nn::backward(head.rectifier, t.rect_in, {{g_out}});
      // the tail of the rectifier's input gradient feeds the score lift
      const std::size_t lift_out = head.score_lift.output_dim();
      const std::span<const double> up(
          gr.input.data() + gr.input.size() - lift_out, lift_out);
      const nn::Gradients gl = nn::backward(head.score_lift, t.lift_in, up);
      grad_rect.accumulate(gr);
      grad_lift.accumulate(gl);
    }
    trace.push_back(loss * inv_n);
    grad_rect.scale(inv_n);
    grad_lift.scale(inv_n);
    nn::step(head.rectifier, grad_rect, lr);
    nn::step(head.score_lift, grad_lift, lr);
  }
  return trace;
}

void save_candidates(const std::vector<CandidateRecord>& records,
                     const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& rec : records) {
    json j{{"scene_id", rec.scene_id},
           {"class", rec.class_name},
           {"box3d", box3d_to_json(rec.cand.box3d)},
           {"box2d",
            {rec.cand.box2d.u_min, rec.cand.box2d.v_min, rec.cand.box2d.u_max,
             rec.cand.box2d.v_max}},
           {"s3d", rec.cand.s3d},
           {"s2d", rec.cand.s2d},
           {"feat3d", feat_to_json(rec.cand.feat3d)},
           {"feat2d", feat_to_json(rec.cand.feat2d)}};
    if (rec.cand.s_rect) j["s_rect"] = *rec.cand.s_rect;
    arr.push_back(std::move(j));
  }
  kitti::write_text_file(path, json{{"candidates", arr}}.dump(2) + "\n");
}

std::vector<CandidateRecord> load_candidates(
    const std::filesystem::path& path) {
  std::vector<CandidateRecord> out;
  json root;
  try {
    root = json::parse(kitti::read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError("candidate file " + path.string() + ": " + e.what());
  }
  std::size_t n = 0;
  try {
    for (const auto& j : root.at("candidates")) {
      CandidateRecord rec;
      rec.scene_id = j.value("scene_id", std::string{});
      rec.class_name = j.value("class", std::string{"Car"});
      rec.cand.box3d = box3d_from_json(j.at("box3d"));
      const auto& b2 = j.at("box2d");
      rec.cand.box2d = {b2.at(0).get<double>(), b2.at(1).get<double>(),
                        b2.at(2).get<double>(), b2.at(3).get<double>()};
      rec.cand.s3d = j.at("s3d").get<double>();
      rec.cand.s2d = j.at("s2d").get<double>();
      if (j.contains("feat3d")) rec.cand.feat3d = feat_from_json(j.at("feat3d"));
      if (j.contains("feat2d")) rec.cand.feat2d = feat_from_json(j.at("feat2d"));
      if (j.contains("s_rect") && !j.at("s_rect").is_null())
        rec.cand.s_rect = j.at("s_rect").get<double>();
      out.push_back(std::move(rec));
      ++n;
    }
  } catch (const json::exception& e) {
    throw FormatError("candidate file " + path.string() + ": record " +
                      std::to_string(n) + ": " + e.what());
  }
  return out;
}

}  // namespace voxfuse::rectify
