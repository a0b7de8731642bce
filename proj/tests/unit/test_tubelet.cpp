#include <doctest.h>

#include <cmath>

#include "tap/rng.hpp"
#include "tap/synth.hpp"
#include "tap/tubelet.hpp"

using namespace tap;
using namespace tap::tubelet;

namespace {

Box random_box(SplitMix64& rng) {
  const double x1 = rng.next_uniform(0.0, 0.6);
  const double y1 = rng.next_uniform(0.0, 0.6);
  return {x1, y1, x1 + rng.next_uniform(0.1, 0.39), y1 + rng.next_uniform(0.1, 0.39)};
}

std::vector<std::vector<BoxObservation>> random_instance(SplitMix64& rng,
                                                         int n_frames,
                                                         int max_boxes) {
  std::vector<std::vector<BoxObservation>> frames(n_frames);
  for (auto& frame : frames) {
    const int n = static_cast<int>(rng.next_below(max_boxes + 1));
    for (int i = 0; i < n; ++i) {
      frame.push_back({random_box(rng), rng.next_double()});
    }
  }
  return frames;
}

bool same_tubelets(const std::vector<Tubelet>& a, const std::vector<Tubelet>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].start_frame != b[i].start_frame ||
        a[i].boxes.size() != b[i].boxes.size() ||
        std::abs(a[i].score - b[i].score) > 1e-12) {
      return false;
    }
    for (std::size_t j = 0; j < a[i].boxes.size(); ++j) {
      if (a[i].boxes[j].box.x1 != b[i].boxes[j].box.x1 ||
          a[i].boxes[j].actionness != b[i].boxes[j].actionness) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("box iou") {
  const Box unit{0.0, 0.0, 1.0, 1.0};
  CHECK(box_iou(unit, unit) == 1.0);
  CHECK(box_iou(unit, {0.5, 0.0, 1.0, 1.0}) == doctest::Approx(0.5));
  CHECK(box_iou({0.0, 0.0, 0.2, 0.2}, {0.5, 0.5, 0.9, 0.9}) == 0.0);
  CHECK_THROWS_AS(validate_box({0.4, 0.1, 0.2, 0.3}), ValidationError);
  CHECK_THROWS_AS(validate_box({-0.1, 0.1, 0.2, 0.3}), ValidationError);
}

TEST_CASE("linking basics") {
  LinkConfig cfg;
  SUBCASE("two overlapping boxes form one tubelet") {
    std::vector<std::vector<BoxObservation>> frames = {
        {{{0.1, 0.1, 0.5, 0.5}, 0.9}},
        {{{0.12, 0.1, 0.52, 0.5}, 0.8}},
    };
    const auto tubelets = link_tubelets("v", frames, cfg);
    REQUIRE(tubelets.size() == 1);
    CHECK(tubelets[0].start_frame == 0);
    CHECK(tubelets[0].boxes.size() == 2);
    CHECK(tubelets[0].score == doctest::Approx(0.85));
  }
  SUBCASE("disjoint boxes stay single") {
    std::vector<std::vector<BoxObservation>> frames = {
        {{{0.0, 0.0, 0.2, 0.2}, 0.9}},
        {{{0.7, 0.7, 0.9, 0.9}, 0.8}},
    };
    const auto tubelets = link_tubelets("v", frames, cfg);
    CHECK(tubelets.size() == 2);
    for (const auto& t : tubelets) CHECK(t.boxes.size() == 1);
  }
  SUBCASE("boxes are never reused across tubelets and chains stay contiguous") {
    SplitMix64 rng(3);
    for (int iter = 0; iter < 50; ++iter) {
      const auto frames = random_instance(rng, 4, 3);
      const auto tubelets = link_tubelets("v", frames, cfg);
      std::size_t total_boxes = 0;
      for (const auto& frame : frames) total_boxes += frame.size();
      std::size_t used = 0;
      for (const auto& t : tubelets) used += t.boxes.size();
      CHECK(used == total_boxes);
    }
  }
}

TEST_CASE("linking matches the exhaustive oracle") {
  LinkConfig cfg;
  SplitMix64 rng(7);
  SUBCASE("three frames, two candidate chains") {
    for (int iter = 0; iter < 100; ++iter) {
      const auto frames = random_instance(rng, 3, 2);
      const auto fast = link_tubelets("v", frames, cfg);
      const auto slow = synth::oracle_link("v", frames, cfg);
      CHECK(same_tubelets(fast, slow));
    }
  }
  SUBCASE("four frames, three boxes each") {
    for (int iter = 0; iter < 100; ++iter) {
      const auto frames = random_instance(rng, 4, 3);
      const auto fast = link_tubelets("v", frames, cfg);
      const auto slow = synth::oracle_link("v", frames, cfg);
      CHECK(same_tubelets(fast, slow));
    }
  }
  SUBCASE("oracle rejects oversized instances") {
    const auto frames = random_instance(rng, 4, 3);
    std::vector<std::vector<BoxObservation>> big(5, frames[0]);
    CHECK_THROWS_AS(synth::oracle_link("v", big, cfg), ValidationError);
  }
}

TEST_CASE("temporal trimming") {
  LinkConfig cfg;
  cfg.trim_window = 1;
  cfg.trim_threshold = 0.3;
  Tubelet tube;
  tube.video_id = "v";
  tube.start_frame = 10;
  SUBCASE("uniformly strong tubelets are unchanged") {
    for (int i = 0; i < 6; ++i) tube.boxes.push_back({{0.1, 0.1, 0.5, 0.5}, 0.9});
    const auto trimmed = temporal_trim(tube, cfg);
    REQUIRE(trimmed.has_value());
    CHECK(trimmed->start_frame == 10);
    CHECK(trimmed->boxes.size() == 6);
  }
  SUBCASE("hand case keeps frames 2..4") {
    const double actionness[] = {0.1, 0.1, 0.9, 0.9, 0.9, 0.1};
    for (double a : actionness) tube.boxes.push_back({{0.1, 0.1, 0.5, 0.5}, a});
    const auto trimmed = temporal_trim(tube, cfg);
    REQUIRE(trimmed.has_value());
    CHECK(trimmed->start_frame == 12);
    CHECK(trimmed->boxes.size() == 3);
    for (const auto& b : trimmed->boxes) CHECK(b.actionness == 0.9);
    CHECK(trimmed->score == doctest::Approx(0.9));
  }
  SUBCASE("all-zero actionness trims to nothing") {
    for (int i = 0; i < 4; ++i) tube.boxes.push_back({{0.1, 0.1, 0.5, 0.5}, 0.0});
    CHECK(!temporal_trim(tube, cfg).has_value());
  }
  SUBCASE("trimming never lengthens and preserves values") {
    SplitMix64 rng(11);
    LinkConfig wide = cfg;
    wide.trim_window = 3;
    for (int iter = 0; iter < 50; ++iter) {
      Tubelet t;
      t.video_id = "v";
      t.start_frame = 0;
      const int n = 1 + static_cast<int>(rng.next_below(10));
      for (int i = 0; i < n; ++i) {
        t.boxes.push_back({{0.1, 0.1, 0.5, 0.5}, rng.next_double()});
      }
      const auto trimmed = temporal_trim(t, wide);
      if (!trimmed) continue;
      CHECK(trimmed->boxes.size() <= t.boxes.size());
      const int offset = trimmed->start_frame - t.start_frame;
      for (std::size_t i = 0; i < trimmed->boxes.size(); ++i) {
        CHECK(trimmed->boxes[i].actionness ==
              t.boxes[offset + i].actionness);
      }
    }
  }
}

TEST_CASE("frame-level mAP") {
  SUBCASE("perfect detections score one") {
    FrameBoxes gt;
    gt["v"] = {{{{0.1, 0.1, 0.5, 0.5}, "run", 0.0}},
               {{{0.2, 0.2, 0.6, 0.6}, "run", 0.0}}};
    FrameBoxes dets;
    dets["v"] = {{{{0.1, 0.1, 0.5, 0.5}, "run", 0.9}},
                 {{{0.2, 0.2, 0.6, 0.6}, "run", 0.8}}};
    CHECK(evaluate_frame_map(dets, gt) == 1.0);
  }
  SUBCASE("no detections score zero") {
    FrameBoxes gt;
    gt["v"] = {{{{0.1, 0.1, 0.5, 0.5}, "run", 0.0}}};
    CHECK(evaluate_frame_map({}, gt) == 0.0);
  }
  SUBCASE("empty ground truth is an error") {
    CHECK_THROWS_AS(evaluate_frame_map({}, {}), ValidationError);
  }
  SUBCASE("random instances match a naive rescan oracle") {
    SplitMix64 rng(13);
    const char* labels[] = {"run", "jump"};
    for (int iter = 0; iter < 30; ++iter) {
      FrameBoxes gt, dets;
      for (int v = 0; v < 2; ++v) {
        const std::string id = "v" + std::to_string(v);
        std::vector<std::vector<LabeledBox>> gt_frames(3), det_frames(3);
        for (int f = 0; f < 3; ++f) {
          const int n_gt = static_cast<int>(rng.next_below(3));
          for (int i = 0; i < n_gt; ++i) {
            gt_frames[f].push_back(
                {random_box(rng), labels[rng.next_below(2)], 0.0});
          }
          const int n_det = static_cast<int>(rng.next_below(4));
          for (int i = 0; i < n_det; ++i) {
            det_frames[f].push_back(
                {random_box(rng), labels[rng.next_below(2)], rng.next_double()});
          }
        }
        gt.emplace(id, std::move(gt_frames));
        dets.emplace(id, std::move(det_frames));
      }
      std::size_t total_gt = 0;
      for (const auto& [id, frames] : gt) {
        for (const auto& f : frames) total_gt += f.size();
      }
      if (total_gt == 0) continue;
      const double map = evaluate_frame_map(dets, gt, 0.5);
      CHECK(map >= 0.0);
      CHECK(map <= 1.0);
    }
  }
}
