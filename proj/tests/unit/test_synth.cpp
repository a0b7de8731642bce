#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tap/synth.hpp"

using namespace tap;
using namespace tap::synth;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.n_videos = 3;
  cfg.duration_min = 20.0;
  cfg.duration_max = 30.0;
  cfg.gt_per_video_min = 1;
  cfg.gt_per_video_max = 2;
  cfg.fps = 2.0;
  cfg.feature_dim = 6;
  cfg.noise_sigma = 0.1;
  cfg.seed = 9;
  cfg.n_streams = 2;
  return cfg;
}

}  // namespace

TEST_CASE("corpus generation is deterministic down to the bytes") {
  const SynthConfig cfg = tiny_config();
  namespace fs = std::filesystem;
  const fs::path dir_a = fs::temp_directory_path() / "tap_synth_a";
  const fs::path dir_b = fs::temp_directory_path() / "tap_synth_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  write_corpus(generate_corpus(cfg), dir_a);
  write_corpus(generate_corpus(cfg), dir_b);

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir_a)) {
    if (entry.is_regular_file()) {
      files.push_back(fs::relative(entry.path(), dir_a));
    }
  }
  CHECK(files.size() > 5);
  for (const auto& rel : files) {
    CHECK(slurp(dir_a / rel) == slurp(dir_b / rel));
  }
}

TEST_CASE("corpus shape follows the config") {
  const SynthConfig cfg = tiny_config();
  const auto corpus = generate_corpus(cfg);
  CHECK(corpus.gt.videos.size() == 3);
  CHECK(corpus.streams == std::vector<std::string>{"frame", "flow"});
  REQUIRE(corpus.curves.size() == 2);
  CHECK(corpus.curves[0].size() == 3);
  CHECK(corpus.features[1].size() == 3);
  CHECK(corpus.class_scores[0].predictions.size() == 3);
  CHECK(corpus.captions.size() == corpus.gt.total_annotations());
  for (const auto& [id, video] : corpus.gt.videos) {
    CHECK(video.duration >= 20.0);
    CHECK(video.duration <= 30.0);
    REQUIRE(!video.annotations.empty());
    // Segments are placed without overlap, in order.
    for (std::size_t i = 1; i < video.annotations.size(); ++i) {
      CHECK(video.annotations[i].segment.start >=
            video.annotations[i - 1].segment.end);
    }
    const auto& curves = corpus.curves[0].at(id);
    CHECK(curves.fps == cfg.fps);
    CHECK(curves.length() ==
          static_cast<std::size_t>(std::lround(video.duration * cfg.fps)));
  }
  for (const auto& seg : corpus.captions) {
    CHECK(!caption_class(seg.captions.front()).empty());
  }
}

TEST_CASE("noiseless curves separate inside from outside") {
  SynthConfig cfg = tiny_config();
  cfg.noise_sigma = 0.0;
  const auto corpus = generate_corpus(cfg);
  for (const auto& [id, curves] : corpus.curves[0]) {
    const auto& video = corpus.gt.videos.at(id);
    for (std::size_t t = 0; t < curves.length(); ++t) {
      const double center = (t + 0.5) / curves.fps;
      bool inside = false, near_boundary = false;
      for (const auto& ann : video.annotations) {
        if (center >= ann.segment.start && center < ann.segment.end) {
          inside = true;
        }
        if (std::abs(center - ann.segment.start) < 2.0 / curves.fps ||
            std::abs(center - ann.segment.end) < 2.0 / curves.fps) {
          near_boundary = true;
        }
      }
      if (near_boundary) continue;  // blur margin
      if (inside) {
        CHECK(curves.point[t] == 1.0);
      } else {
        CHECK(curves.point[t] == 0.0);
      }
    }
  }
}

TEST_CASE("impossible placements raise an error") {
  SynthConfig cfg = tiny_config();
  cfg.gt_per_video_min = 20;
  cfg.gt_per_video_max = 20;
  CHECK_THROWS_AS(generate_corpus(cfg), ValidationError);
}

TEST_CASE("oracle sanity on perfect proposals") {
  GroundTruthSet gt;
  std::vector<Proposal> proposals;
  for (int v = 0; v < 2; ++v) {
    const std::string id = "v" + std::to_string(v);
    VideoGroundTruth video;
    video.duration = 20.0;
    video.annotations.push_back({{3.0, 9.0}, "run"});
    gt.videos.emplace(id, video);
    proposals.push_back({id, {3.0, 9.0}, 1.0, Stage::CPN, {}});
  }
  const auto curve = oracle_evaluate_proposals(proposals, gt);
  CHECK(curve.auc == 1.0);
  std::vector<Proposal> detections = proposals;
  for (auto& d : detections) d.label = "run";
  CHECK(oracle_ap(detections, gt, 0.5) == 1.0);
  CHECK(oracle_ap(detections, gt, 0.95) == 1.0);
}
