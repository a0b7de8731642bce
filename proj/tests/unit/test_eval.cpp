#include <doctest.h>

#include <cmath>

#include "tap/eval.hpp"
#include "tap/rng.hpp"
#include "tap/synth.hpp"

using namespace tap;

namespace {

// Random evaluation instance: a handful of videos with annotations and
// scored proposals.
struct Instance {
  GroundTruthSet gt;
  std::vector<Proposal> proposals;
};

Instance random_instance(SplitMix64& rng, int max_videos, int max_proposals,
                         bool labeled) {
  static const char* kLabels[] = {"run", "jump", "swim"};
  Instance inst;
  const int n_videos = 1 + static_cast<int>(rng.next_below(max_videos));
  for (int v = 0; v < n_videos; ++v) {
    const std::string id = "v" + std::to_string(v);
    VideoGroundTruth video;
    video.duration = rng.next_uniform(20.0, 60.0);
    const int n_gt = 1 + static_cast<int>(rng.next_below(4));
    for (int g = 0; g < n_gt; ++g) {
      const double start = rng.next_uniform(0.0, video.duration - 2.0);
      const double len = rng.next_uniform(1.0, (video.duration - start) * 0.8);
      video.annotations.push_back(
          {{start, start + len}, kLabels[rng.next_below(3)]});
    }
    inst.gt.videos.emplace(id, std::move(video));

    const int n_props = static_cast<int>(rng.next_below(max_proposals + 1));
    const double duration = inst.gt.videos.at(id).duration;
    for (int p = 0; p < n_props; ++p) {
      Proposal prop;
      prop.video_id = id;
      const double start = rng.next_uniform(0.0, duration - 1.0);
      const double len = rng.next_uniform(0.5, (duration - start));
      prop.segment = {start, start + len};
      prop.score = rng.next_double();
      prop.stage = Stage::CPN;
      if (labeled) prop.label = kLabels[rng.next_below(3)];
      inst.proposals.push_back(std::move(prop));
    }
  }
  return inst;
}

}  // namespace

TEST_CASE("tiou arithmetic") {
  CHECK(eval::tiou({0, 10}, {5, 15}) == doctest::Approx(5.0 / 15.0));
  CHECK(eval::tiou({2, 4}, {2, 4}) == 1.0);
  CHECK(eval::tiou({0, 1}, {2, 3}) == 0.0);
}

TEST_CASE("tiou symmetry and invariance") {
  SplitMix64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const double a0 = rng.next_uniform(0, 50);
    const double a1 = a0 + rng.next_uniform(0.1, 20);
    const double b0 = rng.next_uniform(0, 50);
    const double b1 = b0 + rng.next_uniform(0.1, 20);
    const TemporalSegment a{a0, a1}, b{b0, b1};
    CHECK(eval::tiou(a, b) == eval::tiou(b, a));
    const double shift = rng.next_uniform(0, 10);
    const double scale = rng.next_uniform(0.5, 3.0);
    const TemporalSegment a2{(a0 + shift) * scale, (a1 + shift) * scale};
    const TemporalSegment b2{(b0 + shift) * scale, (b1 + shift) * scale};
    CHECK(eval::tiou(a2, b2) == doctest::Approx(eval::tiou(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("perfect proposals give AUC 1") {
  GroundTruthSet gt;
  std::vector<Proposal> proposals;
  for (int v = 0; v < 3; ++v) {
    const std::string id = "v" + std::to_string(v);
    VideoGroundTruth video;
    video.duration = 30.0;
    video.annotations.push_back({{5.0 + v, 12.0 + v}, "run"});
    gt.videos.emplace(id, video);
    proposals.push_back({id, {5.0 + v, 12.0 + v}, 1.0, Stage::CPN, {}});
  }
  const auto curve = eval::evaluate_proposals(proposals, gt);
  CHECK(curve.auc == 1.0);
  for (double ar : curve.ar_values) CHECK(ar == 1.0);
}

TEST_CASE("no proposals give AUC 0") {
  GroundTruthSet gt;
  VideoGroundTruth video;
  video.duration = 10.0;
  video.annotations.push_back({{1.0, 3.0}, "run"});
  gt.videos.emplace("v", video);
  const auto curve = eval::evaluate_proposals({}, gt);
  CHECK(curve.auc == 0.0);
}

TEST_CASE("empty ground truth is an error") {
  GroundTruthSet gt;
  CHECK_THROWS_AS(eval::evaluate_proposals({}, gt), ValidationError);
  CHECK_THROWS_AS(eval::evaluate_detections({}, gt), ValidationError);
}

TEST_CASE("AR is non-decreasing in AN") {
  SplitMix64 rng(7);
  for (int iter = 0; iter < 10; ++iter) {
    const Instance inst = random_instance(rng, 5, 20, false);
    const auto curve = eval::evaluate_proposals(inst.proposals, inst.gt);
    for (std::size_t i = 1; i < curve.ar_values.size(); ++i) {
      CHECK(curve.ar_values[i] >= curve.ar_values[i - 1]);
    }
    CHECK(curve.auc >= 0.0);
    CHECK(curve.auc <= 1.0);
  }
}

TEST_CASE("proposal evaluation matches the brute-force oracle") {
  SplitMix64 rng(12345);
  for (int iter = 0; iter < 50; ++iter) {
    const Instance inst = random_instance(rng, 10, 30, false);
    const auto fast = eval::evaluate_proposals(inst.proposals, inst.gt);
    const auto slow = synth::oracle_evaluate_proposals(inst.proposals, inst.gt);
    REQUIRE(fast.ar_values.size() == slow.ar_values.size());
    for (std::size_t i = 0; i < fast.ar_values.size(); ++i) {
      CHECK(std::abs(fast.ar_values[i] - slow.ar_values[i]) <= 1e-9);
    }
    CHECK(std::abs(fast.auc - slow.auc) <= 1e-9);
  }
}

TEST_CASE("perfect detections give average mAP 1") {
  GroundTruthSet gt;
  std::vector<Proposal> detections;
  const char* labels[] = {"run", "jump", "swim", "dive"};
  for (int v = 0; v < 4; ++v) {
    const std::string id = "v" + std::to_string(v);
    VideoGroundTruth video;
    video.duration = 30.0;
    video.annotations.push_back({{4.0, 14.0 + v}, labels[v]});
    gt.videos.emplace(id, video);
    detections.push_back(
        {id, {4.0, 14.0 + v}, 1.0, Stage::FUSED, std::string(labels[v])});
  }
  const auto result = eval::evaluate_detections(detections, gt);
  CHECK(result.average_map == 1.0);
  for (double v : result.map_per_threshold) CHECK(v == 1.0);
}

TEST_CASE("zero detections give zero mAP") {
  GroundTruthSet gt;
  VideoGroundTruth video;
  video.duration = 10.0;
  video.annotations.push_back({{1.0, 3.0}, "run"});
  gt.videos.emplace("v", video);
  const auto result = eval::evaluate_detections({}, gt);
  CHECK(result.average_map == 0.0);
}

TEST_CASE("duplicate detections of one ground truth count once") {
  GroundTruthSet gt;
  VideoGroundTruth video;
  video.duration = 10.0;
  video.annotations.push_back({{2.0, 6.0}, "run"});
  gt.videos.emplace("v", video);
  std::vector<Proposal> detections = {
      {"v", {2.0, 6.0}, 0.9, Stage::FUSED, std::string("run")},
      {"v", {2.0, 6.0}, 0.8, Stage::FUSED, std::string("run")},
  };
  const auto result = eval::evaluate_detections(detections, gt);
  // One TP at rank 1, one FP at rank 2: AP is 1 at every threshold.
  for (double v : result.map_per_threshold) CHECK(v == 1.0);
}

TEST_CASE("detections must carry labels") {
  GroundTruthSet gt;
  VideoGroundTruth video;
  video.duration = 10.0;
  video.annotations.push_back({{1.0, 3.0}, "run"});
  gt.videos.emplace("v", video);
  std::vector<Proposal> detections = {{"v", {1.0, 3.0}, 0.9, Stage::FUSED, {}}};
  CHECK_THROWS_AS(eval::evaluate_detections(detections, gt), ValidationError);
}

TEST_CASE("detection evaluation matches the brute-force oracle") {
  SplitMix64 rng(777);
  for (int iter = 0; iter < 50; ++iter) {
    const Instance inst = random_instance(rng, 10, 30, true);
    const auto fast = eval::evaluate_detections(inst.proposals, inst.gt);
    for (std::size_t k = 0; k < fast.thresholds.size(); ++k) {
      const double slow =
          synth::oracle_ap(inst.proposals, inst.gt, fast.thresholds[k]);
      CHECK(std::abs(fast.map_per_threshold[k] - slow) <= 1e-9);
    }
  }
}
