#include <doctest.h>

#include <cmath>

#include "voxfuse/errors.hpp"
#include "voxfuse/eval.hpp"
#include "voxfuse/rectify.hpp"

#include "testutil.hpp"

using namespace voxfuse;
using rectify::DetectionCandidate;
using rectify::FcrHead;
using rectify::FeatMatrix;

namespace {

FeatMatrix matrix(std::size_t rows, std::size_t cols,
                  std::initializer_list<double> vals) {
  FeatMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data = vals;
  return m;
}

FcrHead zero_head(std::size_t c3, std::size_t c2, std::size_t lift) {
  SplitMix64 rng(1);
  FcrHead head = rectify::make_fcr_head(c3, c2, lift, 8, rng);
  for (auto* net : {&head.score_lift, &head.rectifier}) {
    for (auto& layer : net->layers) {
      std::fill(layer.w.begin(), layer.w.end(), 0.0);
      std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
  }
  return head;
}

DetectionCandidate random_candidate(SplitMix64& rng, std::size_t c3,
                                    std::size_t c2) {
  DetectionCandidate cand;
  cand.box3d = {{rng.uniform(5.0, 50.0), rng.uniform(-8.0, 8.0), -1.0},
                {4.0, 1.6, 1.5},
                rng.uniform(-M_PI, M_PI)};
  cand.box2d = {0, 0, 20, 10};
  cand.s3d = rng.uniform();
  cand.s2d = rng.uniform();
  cand.feat3d.rows = 3;
  cand.feat3d.cols = c3;
  cand.feat3d.data.resize(3 * c3);
  for (auto& v : cand.feat3d.data) v = rng.uniform(-1.0, 1.0);
  cand.feat2d.rows = 2;
  cand.feat2d.cols = c2;
  cand.feat2d.data.resize(2 * c2);
  for (auto& v : cand.feat2d.data) v = rng.uniform(-1.0, 1.0);
  return cand;
}

}  // namespace

TEST_CASE("pool_roi_features: single row, hand case, empty flag") {
  const auto single = rectify::pool_roi_features(matrix(1, 3, {1.0, -2.0, 0.5}));
  CHECK_FALSE(single.empty);
  CHECK(single.mean == std::vector<double>{1.0, -2.0, 0.5});

  const auto pair = rectify::pool_roi_features(matrix(2, 2, {0.0, 2.0, 2.0, 0.0}));
  CHECK(pair.mean == std::vector<double>{1.0, 1.0});

  FeatMatrix empty;
  empty.rows = 0;
  empty.cols = 4;
  const auto pooled = rectify::pool_roi_features(empty);
  CHECK(pooled.empty);
  CHECK(pooled.mean == std::vector<double>(4, 0.0));
}

TEST_CASE("pool_roi_features: column means match a summation oracle") {
  SplitMix64 rng(91);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(1, 14));
    FeatMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.data.resize(rows * cols);
    for (auto& v : m.data) v = rng.uniform(-4.0, 4.0);
    const auto pooled = rectify::pool_roi_features(m);
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < rows; ++r) acc += m.data[r * cols + c];
      CHECK(pooled.mean[c] == doctest::Approx(acc / rows).epsilon(1e-12));
    }
  }
}

TEST_CASE("pool_roi_features is permutation-invariant in the rows") {
  SplitMix64 rng(92);
  FeatMatrix m;
  m.rows = 5;
  m.cols = 7;
  m.data.resize(35);
  for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
  const auto base = rectify::pool_roi_features(m);
  FeatMatrix shuffled = m;
  for (std::size_t r = 0; r < 5; ++r)
    std::copy(m.data.begin() + ((r + 2) % 5) * 7,
              m.data.begin() + ((r + 2) % 5 + 1) * 7,
              shuffled.data.begin() + r * 7);
  const auto perm = rectify::pool_roi_features(shuffled);
  for (std::size_t c = 0; c < 7; ++c)
    CHECK(base.mean[c] == doctest::Approx(perm.mean[c]).epsilon(1e-12));
}

TEST_CASE("rectify: zeroed head answers 0.5, outputs stay inside (0,1)") {
  SplitMix64 rng(93);
  const FcrHead zeroed = zero_head(5, 4, 3);
  SplitMix64 rng2(94);
  FcrHead head = rectify::make_fcr_head(5, 4, 3, 8, rng2);
  for (int i = 0; i < 30; ++i) {
    const auto cand = random_candidate(rng, 5, 4);
    CHECK(rectify::rectify(cand, zeroed) == doctest::Approx(0.5));
    const double s = rectify::rectify(cand, head);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("rectify: equals the manual composition of pool, lift, rectifier") {
  SplitMix64 rng(95);
  SplitMix64 init(96);
  const FcrHead head = rectify::make_fcr_head(6, 5, 4, 12, init);
  for (int i = 0; i < 25; ++i) {
    const auto cand = random_candidate(rng, 6, 5);
    // pooled features by direct column means
    std::vector<double> rect_in;
    for (const FeatMatrix* m : {&cand.feat3d, &cand.feat2d}) {
      for (std::size_t c = 0; c < m->cols; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < m->rows; ++r) acc += m->data[r * m->cols + c];
        rect_in.push_back(acc / m->rows);
      }
    }
    const auto lifted =
        nn::forward(head.score_lift, std::vector<double>{cand.s3d, cand.s2d});
    rect_in.insert(rect_in.end(), lifted.begin(), lifted.end());
    const double want = nn::forward(head.rectifier, rect_in)[0];
    CHECK(rectify::rectify(cand, head) ==
          doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("rectify: feature width mismatch is a contract error") {
  SplitMix64 rng(97);
  SplitMix64 init(98);
  const FcrHead head = rectify::make_fcr_head(6, 5, 4, 12, init);
  auto cand = random_candidate(rng, 6, 6);  // feat2d too wide
  CHECK_THROWS_AS(rectify::rectify(cand, head), ContractError);
}

TEST_CASE("make_candidates: determinism, count, perfect-score degenerate case") {
  rectify::SyntheticConfig cfg;
  cfg.n_gt = 5;
  cfg.jitter_per_gt = 3;
  cfg.noise_boxes = 7;
  const auto a = rectify::make_candidates(cfg, 1234);
  const auto b = rectify::make_candidates(cfg, 1234);
  CHECK(a.candidates.size() ==
        static_cast<std::size_t>(cfg.n_gt * cfg.jitter_per_gt + cfg.noise_boxes));
  REQUIRE(a.candidates.size() == b.candidates.size());
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    CHECK(a.candidates[i].box3d.center.x == b.candidates[i].box3d.center.x);
    CHECK(a.candidates[i].s3d == b.candidates[i].s3d);
    CHECK(a.candidates[i].feat3d.data == b.candidates[i].feat3d.data);
  }
  const auto c = rectify::make_candidates(cfg, 4321);
  CHECK(c.candidates[0].s3d != a.candidates[0].s3d);

  // zero jitter and zero noise: jittered candidates coincide with their GT
  rectify::SyntheticConfig clean = cfg;
  clean.center_jitter = clean.dim_jitter = clean.yaw_jitter = 0.0;
  clean.score_noise_3d = clean.score_noise_2d = 0.0;
  clean.noise_boxes = 0;
  const auto exact = rectify::make_candidates(clean, 99);
  for (const auto& cand : exact.candidates) {
    CHECK(cand.s3d == doctest::Approx(1.0));
    CHECK(cand.s2d == doctest::Approx(1.0));
  }
  const auto labels = rectify::positive_labels(exact);
  for (int y : labels) CHECK(y == 1);
}

TEST_CASE("train_fcr: trivial epoch and lr cases") {
  rectify::SyntheticConfig cfg;
  cfg.n_gt = 4;
  cfg.jitter_per_gt = 3;
  cfg.noise_boxes = 8;
  const auto set = rectify::make_candidates(cfg, 7);
  const auto labels = rectify::positive_labels(set);

  SplitMix64 init(8);
  FcrHead head =
      rectify::make_fcr_head(cfg.feat3d_cols, cfg.feat2d_cols, 8, 16, init);
  const FcrHead before = head;

  const auto empty_trace = rectify::train_fcr(set.candidates, labels, head, 0, 0.5);
  CHECK(empty_trace.empty());
  for (std::size_t k = 0; k < head.rectifier.layers.size(); ++k)
    CHECK(head.rectifier.layers[k].w == before.rectifier.layers[k].w);

  const auto flat_trace = rectify::train_fcr(set.candidates, labels, head, 5, 0.0);
  REQUIRE(flat_trace.size() == 5);
  for (double v : flat_trace) CHECK(v == doctest::Approx(flat_trace[0]));

  CHECK_THROWS_AS(rectify::train_fcr({}, {}, head, 1, 0.1), ContractError);
}

TEST_CASE("train_fcr: loss falls and rectified ranking beats the raw score") {
  rectify::SyntheticConfig cfg;  // library defaults
  const auto train_set = rectify::make_candidates(cfg, 555);
  const auto heldout = rectify::make_candidates(cfg, 556);
  const auto labels = rectify::positive_labels(train_set);

  SplitMix64 init(557);
  FcrHead head = rectify::make_fcr_head(cfg.feat3d_cols, cfg.feat2d_cols, 16,
                                        64, init);
  const auto trace =
      rectify::train_fcr(train_set.candidates, labels, head, 120, 0.5);
  REQUIRE(trace.size() == 120);
  CHECK(trace.back() < trace.front());

  auto ap_of = [&](auto&& score) {
    std::vector<eval::ScoredBox> dets;
    for (const auto& cand : heldout.candidates)
      dets.push_back({cand.box3d, score(cand)});
    return eval::average_precision(
               eval::match_detections(dets, heldout.gts, 0.7), 11)
        .value();
  };
  const double ap_raw =
      ap_of([](const DetectionCandidate& c) { return c.s3d; });
  std::vector<DetectionCandidate> rectified = heldout.candidates;
  rectify::rectify_all(rectified, head);
  double ap_rect;
  {
    std::vector<eval::ScoredBox> dets;
    for (const auto& cand : rectified) dets.push_back({cand.box3d, *cand.s_rect});
    ap_rect = eval::average_precision(
                  eval::match_detections(dets, heldout.gts, 0.7), 11)
                  .value();
  }
  CHECK(ap_rect > ap_raw);

  // rectification never touches geometry or the raw scores
  for (std::size_t i = 0; i < rectified.size(); ++i) {
    CHECK(rectified[i].box3d.center.x == heldout.candidates[i].box3d.center.x);
    CHECK(rectified[i].box3d.yaw == heldout.candidates[i].box3d.yaw);
    CHECK(rectified[i].box2d.u_min == heldout.candidates[i].box2d.u_min);
    CHECK(rectified[i].s3d == heldout.candidates[i].s3d);
    CHECK(rectified[i].s2d == heldout.candidates[i].s2d);
  }
}

TEST_CASE("zeroed head ranks like a constant score") {
  rectify::SyntheticConfig cfg;
  cfg.n_gt = 6;
  const auto set = rectify::make_candidates(cfg, 31);
  const FcrHead zeroed = zero_head(cfg.feat3d_cols, cfg.feat2d_cols, 16);
  std::vector<DetectionCandidate> cands = set.candidates;
  rectify::rectify_all(cands, zeroed);
  std::vector<eval::ScoredBox> rect_dets, const_dets;
  for (const auto& cand : cands) {
    rect_dets.push_back({cand.box3d, *cand.s_rect});
    const_dets.push_back({cand.box3d, 0.123});
  }
  const auto ap_rect = eval::average_precision(
      eval::match_detections(rect_dets, set.gts, 0.7), 11);
  const auto ap_const = eval::average_precision(
      eval::match_detections(const_dets, set.gts, 0.7), 11);
  CHECK(ap_rect.value() == doctest::Approx(ap_const.value()).epsilon(1e-12));
}

TEST_CASE("candidate files round trip") {
  testutil::TempDir tmp("cands");
  SplitMix64 rng(32);
  std::vector<rectify::CandidateRecord> records;
  for (int i = 0; i < 4; ++i) {
    rectify::CandidateRecord rec;
    rec.scene_id = "00000" + std::to_string(i);
    rec.class_name = i % 2 ? "Car" : "Pedestrian";
    rec.cand = random_candidate(rng, 3, 2);
    if (i == 2) rec.cand.s_rect = 0.75;
    records.push_back(std::move(rec));
  }
  rectify::save_candidates(records, tmp.path() / "cands.json");
  const auto back = rectify::load_candidates(tmp.path() / "cands.json");
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].scene_id == records[i].scene_id);
    CHECK(back[i].class_name == records[i].class_name);
    CHECK(back[i].cand.s3d == records[i].cand.s3d);
    CHECK(back[i].cand.feat3d.data == records[i].cand.feat3d.data);
    CHECK(back[i].cand.s_rect.has_value() == records[i].cand.s_rect.has_value());
  }
  kitti::write_text_file(tmp.path() / "bad.json",
                         "{\"candidates\": [{\"s3d\": 0.5}]}");
  CHECK_THROWS_AS(rectify::load_candidates(tmp.path() / "bad.json"),
                  FormatError);
}
