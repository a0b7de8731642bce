#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tap/cpn.hpp"
#include "tap/eval.hpp"
#include "tap/rng.hpp"

using namespace tap;

namespace {

ActionnessCurveSet make_curves(std::vector<double> point,
                               std::vector<double> pair,
                               std::vector<double> recurrent, double fps = 1.0) {
  return {"v", fps, std::move(point), std::move(pair), std::move(recurrent)};
}

bool has_span(const std::vector<Proposal>& proposals, double start, double end) {
  return std::any_of(proposals.begin(), proposals.end(), [&](const Proposal& p) {
    return std::abs(p.segment.start - start) < 1e-9 &&
           std::abs(p.segment.end - end) < 1e-9;
  });
}

// The documented greedy dedupe, restated naively.
std::vector<Proposal> dedupe_oracle(std::vector<Proposal> proposals,
                                    double threshold) {
  std::sort(proposals.begin(), proposals.end(),
            [](const Proposal& a, const Proposal& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.segment.start != b.segment.start) {
                return a.segment.start < b.segment.start;
              }
              return a.segment.end < b.segment.end;
            });
  std::vector<Proposal> kept;
  for (const Proposal& p : proposals) {
    bool drop = false;
    for (const Proposal& k : kept) {
      const double inter = std::max(
          0.0, std::min(k.segment.end, p.segment.end) -
                   std::max(k.segment.start, p.segment.start));
      const double uni = k.segment.length() + p.segment.length() - inter;
      if (inter / uni >= threshold) drop = true;
    }
    if (!drop) kept.push_back(p);
  }
  return kept;
}

}  // namespace

TEST_CASE("actionness fusion") {
  const auto curves = make_curves({0.2, 0.0}, {0.4, 0.0}, {0.6, 0.0});
  SUBCASE("uniform weights average the channels") {
    const auto fused = cpn::fuse_actionness(curves, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    CHECK(fused[0] == doctest::Approx(0.4).epsilon(1e-12));
  }
  SUBCASE("degenerate weights select one channel") {
    const auto fused = cpn::fuse_actionness(curves, {1.0, 0.0, 0.0});
    CHECK(fused == curves.point);
  }
  SUBCASE("weights must sum to one") {
    CHECK_THROWS_AS(cpn::fuse_actionness(curves, {0.5, 0.5, 0.1}),
                    ValidationError);
  }
  SUBCASE("channel length mismatch") {
    auto bad = curves;
    bad.pair.pop_back();
    CHECK_THROWS_AS(cpn::fuse_actionness(bad, {1.0 / 3, 1.0 / 3, 1.0 / 3}),
                    ValidationError);
  }
  SUBCASE("renormalized scaled weights fuse identically") {
    const std::array<double, 3> w = {0.2, 0.3, 0.5};
    std::array<double, 3> scaled = {0.2 * 7, 0.3 * 7, 0.5 * 7};
    const double sum = scaled[0] + scaled[1] + scaled[2];
    for (double& x : scaled) x /= sum;
    const auto a = cpn::fuse_actionness(curves, w);
    const auto b = cpn::fuse_actionness(curves, scaled);
    for (std::size_t t = 0; t < a.size(); ++t) {
      CHECK(a[t] == doctest::Approx(b[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("watershed grouping on the two-basin curve") {
  // Basins [2,5) and [7,9); the grouped span [2,9) covers 5/7 >= 0.7.
  const std::vector<double> fused = {0, 0, .9, .9, .9, 0, 0, .8, .8, 0};
  cpn::TagConfig cfg;
  cfg.thresholds = {0.5};
  cfg.group_fraction = 0.7;
  cfg.dedupe_tiou = 0.95;
  cfg.min_len_frames = 2;
  const auto proposals = cpn::watershed_tag(fused, 1.0, cfg, "v");
  CHECK(proposals.size() == 3);
  CHECK(has_span(proposals, 2.0, 5.0));
  CHECK(has_span(proposals, 7.0, 9.0));
  CHECK(has_span(proposals, 2.0, 9.0));
  for (const Proposal& p : proposals) {
    CHECK(p.stage == Stage::CPN);
    CHECK(p.score > 0.0);
    CHECK(p.score <= 1.0);
  }
  // Spans are scored by mean fused actionness.
  for (const Proposal& p : proposals) {
    if (std::abs(p.segment.start - 2.0) < 1e-9 &&
        std::abs(p.segment.end - 5.0) < 1e-9) {
      CHECK(p.score == doctest::Approx(0.9).epsilon(1e-12));
    }
  }
}

TEST_CASE("watershed edge cases") {
  cpn::TagConfig cfg;
  cfg.thresholds = {0.5};
  SUBCASE("all-zero curve yields nothing") {
    const std::vector<double> zeros(10, 0.0);
    CHECK(cpn::watershed_tag(zeros, 1.0, cfg, "v").empty());
  }
  SUBCASE("all-ones curve yields the whole video at score 1") {
    const std::vector<double> ones(10, 1.0);
    const auto proposals = cpn::watershed_tag(ones, 2.0, cfg, "v");
    REQUIRE(proposals.size() == 1);
    CHECK(proposals[0].segment.start == 0.0);
    CHECK(proposals[0].segment.end == doctest::Approx(5.0));
    CHECK(proposals[0].score == 1.0);
  }
  SUBCASE("empty curve is an error") {
    CHECK_THROWS_AS(cpn::watershed_tag(std::vector<double>{}, 1.0, cfg, "v"),
                    ValidationError);
  }
  SUBCASE("proposals stay inside the video and are sorted by score") {
    SplitMix64 rng(17);
    std::vector<double> curve(64);
    for (double& v : curve) v = rng.next_double();
    const auto proposals =
        cpn::watershed_tag(curve, 4.0, cpn::TagConfig{}, "v");
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      CHECK(proposals[i].segment.start >= 0.0);
      CHECK(proposals[i].segment.end <= 64.0 / 4.0 + 1e-12);
      CHECK(proposals[i].segment.start < proposals[i].segment.end);
      if (i > 0) CHECK(proposals[i - 1].score >= proposals[i].score);
    }
  }
}

TEST_CASE("widening the threshold grid never hurts recall at 0.5") {
  SplitMix64 rng(23);
  for (int iter = 0; iter < 10; ++iter) {
    // One planted segment with noise.
    const int frames = 80;
    const int start = 20 + static_cast<int>(rng.next_below(20));
    const int len = 10 + static_cast<int>(rng.next_below(20));
    std::vector<double> curve(frames, 0.0);
    for (int t = 0; t < frames; ++t) {
      const bool inside = t >= start && t < start + len;
      curve[t] =
          std::clamp((inside ? 0.8 : 0.1) + 0.1 * rng.next_normal(), 0.0, 1.0);
    }
    GroundTruthSet gt;
    VideoGroundTruth video;
    video.duration = frames;
    video.annotations.push_back(
        {{static_cast<double>(start), static_cast<double>(start + len)}, "x"});
    gt.videos.emplace("v", video);

    cpn::TagConfig coarse_cfg;
    coarse_cfg.thresholds = {0.3, 0.6};
    cpn::TagConfig fine_cfg;
    fine_cfg.thresholds = {0.3, 0.45, 0.6};

    auto recall_at_half = [&gt](const std::vector<Proposal>& proposals) {
      const auto& ann = gt.videos.at("v").annotations[0];
      for (const Proposal& p : proposals) {
        if (eval::tiou(p.segment, ann.segment) >= 0.5) return 1.0;
      }
      return 0.0;
    };
    const double coarse =
        recall_at_half(cpn::watershed_tag(curve, 1.0, coarse_cfg, "v"));
    const double fine =
        recall_at_half(cpn::watershed_tag(curve, 1.0, fine_cfg, "v"));
    CHECK(fine >= coarse);
  }
}

TEST_CASE("proposal dedupe") {
  SUBCASE("identical segments keep the higher score") {
    std::vector<Proposal> proposals = {
        {"v", {1.0, 3.0}, 0.7, Stage::CPN, {}},
        {"v", {1.0, 3.0}, 0.9, Stage::CPN, {}},
    };
    const auto merged = cpn::merge_proposals(proposals, 0.95);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].score == 0.9);
  }
  SUBCASE("disjoint proposals survive") {
    std::vector<Proposal> proposals = {
        {"v", {1.0, 3.0}, 0.7, Stage::CPN, {}},
        {"v", {5.0, 8.0}, 0.6, Stage::CPN, {}},
    };
    CHECK(cpn::merge_proposals(proposals, 0.95).size() == 2);
  }
  SUBCASE("random chains match the greedy oracle") {
    SplitMix64 rng(29);
    for (int iter = 0; iter < 50; ++iter) {
      std::vector<Proposal> proposals;
      const int n = 3 + static_cast<int>(rng.next_below(10));
      for (int i = 0; i < n; ++i) {
        const double start = rng.next_uniform(0.0, 10.0);
        const double len = rng.next_uniform(0.5, 5.0);
        proposals.push_back(
            {"v", {start, start + len}, rng.next_double(), Stage::CPN, {}});
      }
      const double threshold = rng.next_uniform(0.3, 0.9);
      const auto fast = cpn::merge_proposals(proposals, threshold);
      const auto slow = dedupe_oracle(proposals, threshold);
      REQUIRE(fast.size() == slow.size());
      for (std::size_t i = 0; i < fast.size(); ++i) {
        CHECK(fast[i].segment.start == slow[i].segment.start);
        CHECK(fast[i].segment.end == slow[i].segment.end);
        CHECK(fast[i].score == slow[i].score);
      }
      // No surviving pair overlaps beyond the threshold.
      for (std::size_t i = 0; i < fast.size(); ++i) {
        for (std::size_t j = i + 1; j < fast.size(); ++j) {
          CHECK(eval::tiou(fast[i].segment, fast[j].segment) < threshold);
        }
      }
    }
  }
}

TEST_CASE("geometric fusion stays within [0, 1] and hits the corners") {
  const auto curves = make_curves({0.5, 0.0, 1.0}, {0.5, 0.2, 1.0},
                                  {0.5, 0.4, 1.0});
  const auto fused =
      cpn::fuse_actionness_geometric(curves, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(fused[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fused[1] == 0.0);  // any zero channel wipes the product
  CHECK(fused[2] == doctest::Approx(1.0).epsilon(1e-12));
}
