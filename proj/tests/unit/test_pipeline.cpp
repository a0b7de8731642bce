#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tap/eval.hpp"
#include "tap/pipeline.hpp"
#include "tap/rng.hpp"
#include "tap/synth.hpp"

using namespace tap;
using namespace tap::pipeline;

namespace {

std::vector<Proposal> random_proposals(SplitMix64& rng, int n,
                                       const std::string& video = "v") {
  std::vector<Proposal> proposals;
  for (int i = 0; i < n; ++i) {
    const double start = rng.next_uniform(0.0, 20.0);
    proposals.push_back({video,
                         {start, start + rng.next_uniform(0.5, 6.0)},
                         rng.next_double(),
                         Stage::CPN,
                         {}});
  }
  return proposals;
}

// Straight restatement of greedy suppression for the oracle comparison.
std::vector<Proposal> nms_oracle(std::vector<Proposal> proposals, double thr) {
  std::sort(proposals.begin(), proposals.end(),
            [](const Proposal& a, const Proposal& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.video_id != b.video_id) return a.video_id < b.video_id;
              if (a.segment.start != b.segment.start) {
                return a.segment.start < b.segment.start;
              }
              return a.segment.end < b.segment.end;
            });
  std::vector<Proposal> kept;
  for (const Proposal& p : proposals) {
    bool drop = false;
    for (const Proposal& k : kept) {
      if (k.video_id != p.video_id) continue;
      const double inter =
          std::max(0.0, std::min(k.segment.end, p.segment.end) -
                            std::max(k.segment.start, p.segment.start));
      const double uni = k.segment.length() + p.segment.length() - inter;
      if (inter / uni >= thr) drop = true;
    }
    if (!drop) kept.push_back(p);
  }
  return kept;
}

bool same_proposals(const std::vector<Proposal>& a,
                    const std::vector<Proposal>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].video_id != b[i].video_id ||
        a[i].segment.start != b[i].segment.start ||
        a[i].segment.end != b[i].segment.end || a[i].score != b[i].score) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("nms basics") {
  SUBCASE("identical proposals keep the best") {
    std::vector<Proposal> proposals = {
        {"v", {1.0, 3.0}, 0.6, Stage::CPN, {}},
        {"v", {1.0, 3.0}, 0.9, Stage::CPN, {}},
    };
    const auto kept = nms(proposals, 0.8);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
  }
  SUBCASE("threshold one suppresses only exact duplicates") {
    std::vector<Proposal> proposals = {
        {"v", {1.0, 3.0}, 0.9, Stage::CPN, {}},
        {"v", {1.0, 3.0}, 0.6, Stage::CPN, {}},
        {"v", {1.0, 2.9}, 0.5, Stage::CPN, {}},
    };
    CHECK(nms(proposals, 1.0).size() == 2);
  }
  SUBCASE("random sets match the greedy oracle and the pairwise bound") {
    SplitMix64 rng(3);
    for (int iter = 0; iter < 100; ++iter) {
      const auto proposals =
          random_proposals(rng, 1 + static_cast<int>(rng.next_below(12)));
      const double thr = rng.next_uniform(0.2, 0.95);
      const auto fast = nms(proposals, thr);
      const auto slow = nms_oracle(proposals, thr);
      CHECK(same_proposals(fast, slow));
      CHECK(same_proposals(nms(fast, thr), fast));  // idempotent
      for (std::size_t i = 0; i < fast.size(); ++i) {
        for (std::size_t j = i + 1; j < fast.size(); ++j) {
          CHECK(eval::tiou(fast[i].segment, fast[j].segment) < thr);
        }
      }
    }
  }
}

TEST_CASE("stream fusion") {
  PipelineConfig cfg;
  SUBCASE("degenerate weights reproduce one stream") {
    SplitMix64 rng(5);
    std::map<std::string, std::vector<Proposal>> streams;
    streams["a"] = random_proposals(rng, 20);
    streams["b"] = random_proposals(rng, 20);
    const auto fused = fuse_streams(streams, {{"a", 1.0}, {"b", 0.0}}, cfg);
    auto expected = nms(streams["a"], cfg.nms_tiou);
    if (expected.size() > static_cast<std::size_t>(cfg.k_final)) {
      expected.resize(cfg.k_final);
    }
    REQUIRE(fused.size() == expected.size());
    for (std::size_t i = 0; i < fused.size(); ++i) {
      CHECK(fused[i].segment.start == expected[i].segment.start);
      CHECK(fused[i].segment.end == expected[i].segment.end);
      CHECK(fused[i].score == expected[i].score);
      CHECK(fused[i].stage == Stage::FUSED);
    }
  }
  SUBCASE("shared segments average their scores") {
    std::map<std::string, std::vector<Proposal>> streams;
    streams["a"] = {{"v", {2.0, 6.0}, 0.8, Stage::PRN, {}}};
    streams["b"] = {{"v", {2.0, 6.0}, 0.6, Stage::PRN, {}}};
    const auto fused = fuse_streams(streams, {{"a", 0.5}, {"b", 0.5}}, cfg);
    REQUIRE(fused.size() == 1);
    CHECK(fused[0].score == doctest::Approx(0.7));
  }
  SUBCASE("weight and stream sets must match") {
    std::map<std::string, std::vector<Proposal>> streams;
    streams["a"] = {{"v", {2.0, 6.0}, 0.8, Stage::PRN, {}}};
    CHECK_THROWS_AS(fuse_streams(streams, {{"a", 0.5}, {"b", 0.5}}, cfg),
                    ValidationError);
    CHECK_THROWS_AS(fuse_streams(streams, {{"b", 1.0}}, cfg), ValidationError);
  }
  SUBCASE("two random streams match an exhaustive pairing oracle") {
    SplitMix64 rng(7);
    for (int iter = 0; iter < 20; ++iter) {
      std::map<std::string, std::vector<Proposal>> streams;
      streams["a"] = random_proposals(rng, 8);
      streams["b"] = random_proposals(rng, 8);
      const double wa = 0.7, wb = 0.3;
      const auto fused = fuse_streams(streams, {{"a", wa}, {"b", wb}}, cfg);

      // Oracle: greedy one-to-one matching of b-proposals onto a-groups in
      // score order, then NMS + truncation, restated naively.
      struct Group {
        Proposal rep;
        double score;
      };
      std::vector<Group> groups;
      auto a_sorted = streams["a"];
      std::sort(a_sorted.begin(), a_sorted.end(),
                [](const Proposal& x, const Proposal& y) {
                  if (x.score != y.score) return x.score > y.score;
                  if (x.segment.start != y.segment.start) {
                    return x.segment.start < y.segment.start;
                  }
                  return x.segment.end < y.segment.end;
                });
      for (const Proposal& p : a_sorted) groups.push_back({p, wa * p.score});
      auto b_sorted = streams["b"];
      std::sort(b_sorted.begin(), b_sorted.end(),
                [](const Proposal& x, const Proposal& y) {
                  if (x.score != y.score) return x.score > y.score;
                  if (x.segment.start != y.segment.start) {
                    return x.segment.start < y.segment.start;
                  }
                  return x.segment.end < y.segment.end;
                });
      std::vector<bool> used(groups.size(), false);
      for (const Proposal& p : b_sorted) {
        double best = -1.0;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < groups.size(); ++g) {
          if (used[g]) continue;
          const double v = eval::tiou(groups[g].rep.segment, p.segment);
          if (v > best) {
            best = v;
            best_g = g;
          }
        }
        if (best >= cfg.duplicate_merge_tiou) {
          groups[best_g].score += wb * p.score;
          used[best_g] = true;
        } else {
          groups.push_back({p, wb * p.score});
          used.push_back(true);
        }
      }
      std::vector<Proposal> expected;
      for (const Group& g : groups) {
        Proposal p = g.rep;
        p.score = std::min(1.0, g.score);
        p.stage = Stage::FUSED;
        expected.push_back(p);
      }
      expected = nms(expected, cfg.nms_tiou);
      if (expected.size() > static_cast<std::size_t>(cfg.k_final)) {
        expected.resize(cfg.k_final);
      }
      CHECK(same_proposals(fused, expected));
    }
  }
}

TEST_CASE("fusion weight tuning") {
  PipelineConfig cfg;
  GroundTruthSet gt;
  VideoGroundTruth video;
  video.duration = 30.0;
  video.annotations.push_back({{10.0, 20.0}, "run"});
  gt.videos.emplace("v", video);

  SUBCASE("single stream tunes to weight one") {
    std::map<std::string, std::vector<Proposal>> streams;
    streams["only"] = {{"v", {10.0, 20.0}, 0.9, Stage::PRN, {}}};
    const auto weights =
        tune_fusion_weights(streams, gt, TuneObjective::kAuc, 0.05, cfg);
    CHECK(weights.at("only") == 1.0);
  }
  SUBCASE("a dominating stream receives at least half the weight") {
    std::map<std::string, std::vector<Proposal>> streams;
    streams["good"] = {{"v", {10.0, 20.0}, 0.9, Stage::PRN, {}}};
    streams["bad"] = {{"v", {0.0, 5.0}, 0.9, Stage::PRN, {}}};
    const auto weights =
        tune_fusion_weights(streams, gt, TuneObjective::kAuc, 0.05, cfg);
    CHECK(weights.at("good") >= 0.5);
  }
  SUBCASE("no grid neighbor beats the returned optimum") {
    SplitMix64 rng(11);
    std::map<std::string, std::vector<Proposal>> streams;
    streams["a"] = random_proposals(rng, 10);
    streams["b"] = random_proposals(rng, 10);
    const double step = 0.25;
    const auto best =
        tune_fusion_weights(streams, gt, TuneObjective::kAuc, step, cfg);
    const auto best_fused = fuse_streams(streams, best, cfg);
    const double best_value = eval::evaluate_proposals(best_fused, gt).auc;
    for (const double delta : {step, -step}) {
      std::map<std::string, double> neighbor = best;
      neighbor["a"] += delta;
      neighbor["b"] -= delta;
      if (neighbor["a"] < -1e-12 || neighbor["a"] > 1 + 1e-12 ||
          neighbor["b"] < -1e-12 || neighbor["b"] > 1 + 1e-12) {
        continue;
      }
      for (auto& [name, w] : neighbor) w = std::clamp(w, 0.0, 1.0);
      const auto fused = fuse_streams(streams, neighbor, cfg);
      CHECK(eval::evaluate_proposals(fused, gt).auc <= best_value + 1e-12);
    }
  }
  SUBCASE("empty ground truth is an error") {
    std::map<std::string, std::vector<Proposal>> streams;
    streams["a"] = {{"v", {1.0, 2.0}, 0.5, Stage::PRN, {}}};
    GroundTruthSet empty;
    CHECK_THROWS_AS(
        tune_fusion_weights(streams, empty, TuneObjective::kAuc, 0.05, cfg),
        ValidationError);
  }
}

TEST_CASE("detection by classification") {
  ClassPredictionSet preds;
  preds.classes = {"run", "jump", "swim"};
  SUBCASE("one-hot prediction keeps the proposal score") {
    preds.predictions["v"] = {1.0, 0.0, 0.0};
    std::vector<Proposal> proposals = {{"v", {1.0, 3.0}, 0.8, Stage::PRN, {}}};
    const auto dets = detect_by_classification(proposals, preds, 1);
    REQUIRE(dets.size() == 1);
    CHECK(*dets[0].label == "run");
    CHECK(dets[0].score == doctest::Approx(0.8));
  }
  SUBCASE("top-2 classes with ordered scores") {
    preds.predictions["v"] = {0.3, 0.6, 0.1};
    std::vector<Proposal> proposals = {{"v", {1.0, 3.0}, 0.5, Stage::PRN, {}}};
    const auto dets = detect_by_classification(proposals, preds, 2);
    REQUIRE(dets.size() == 2);
    CHECK(*dets[0].label == "jump");
    CHECK(dets[0].score == doctest::Approx(0.3));
    CHECK(*dets[1].label == "run");
    CHECK(dets[1].score == doctest::Approx(0.15));
  }
  SUBCASE("uniform prediction splits the score by the vocabulary size") {
    preds.predictions["v"] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::vector<Proposal> proposals = {{"v", {1.0, 3.0}, 0.9, Stage::PRN, {}}};
    const auto dets = detect_by_classification(proposals, preds, 1);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].score == doctest::Approx(0.3));
  }
  SUBCASE("a proposal without a prediction is an error") {
    std::vector<Proposal> proposals = {{"w", {1.0, 3.0}, 0.8, Stage::PRN, {}}};
    CHECK_THROWS_AS(detect_by_classification(proposals, preds, 1),
                    ValidationError);
  }
}

TEST_CASE("late class-prediction fusion") {
  SUBCASE("identity and uniform cases") {
    std::map<std::string, ClassPrediction> preds;
    preds.emplace("a", ClassPrediction{"v", {0.7, 0.2, 0.1}});
    const auto fused = late_fuse_class_predictions(preds, {{"a", 1.0}});
    CHECK(fused.probs == std::vector<double>{0.7, 0.2, 0.1});

    std::map<std::string, ClassPrediction> uniform;
    uniform.emplace("a", ClassPrediction{"v", {0.5, 0.5}});
    uniform.emplace("b", ClassPrediction{"v", {0.5, 0.5}});
    const auto fused2 =
        late_fuse_class_predictions(uniform, {{"a", 0.5}, {"b", 0.5}});
    CHECK(fused2.probs[0] == doctest::Approx(0.5));
    double sum = 0.0;
    for (double v : fused2.probs) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("dimension mismatch is an error") {
    std::map<std::string, ClassPrediction> preds;
    preds.emplace("a", ClassPrediction{"v", {0.5, 0.5}});
    preds.emplace("b", ClassPrediction{"v", {0.4, 0.3, 0.3}});
    CHECK_THROWS_AS(
        late_fuse_class_predictions(preds, {{"a", 0.5}, {"b", 0.5}}),
        ValidationError);
  }
  SUBCASE("upweighting an agreeing stream never changes the argmax") {
    SplitMix64 rng(13);
    for (int iter = 0; iter < 200; ++iter) {
      const int dim = 2 + static_cast<int>(rng.next_below(5));
      auto draw = [&rng, dim]() {
        std::vector<double> p(dim);
        double sum = 0.0;
        for (double& v : p) {
          v = rng.next_double() + 1e-6;
          sum += v;
        }
        for (double& v : p) v /= sum;
        return p;
      };
      std::map<std::string, ClassPrediction> preds;
      preds.emplace("a", ClassPrediction{"v", draw()});
      preds.emplace("b", ClassPrediction{"v", draw()});
      std::map<std::string, double> weights = {{"a", 0.4}, {"b", 0.6}};
      const auto fused = late_fuse_class_predictions(preds, weights);
      const auto argmax = [](const std::vector<double>& p) {
        return std::max_element(p.begin(), p.end()) - p.begin();
      };
      const auto fused_arg = argmax(fused.probs);
      if (argmax(preds.at("a").probs) != fused_arg) continue;
      for (const double scale : {1.5, 3.0, 10.0}) {
        std::map<std::string, double> scaled = weights;
        scaled["a"] *= scale;
        const double total = scaled["a"] + scaled["b"];
        for (auto& [name, w] : scaled) w /= total;
        const auto refused = late_fuse_class_predictions(preds, scaled);
        CHECK(argmax(refused.probs) == fused_arg);
      }
    }
  }
}
