#include "tap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tap/io.hpp"
#include "tap/rng.hpp"

namespace tap::synth {

namespace {

struct ClassTemplates {
  const char* name;
  std::array<const char*, 4> captions;
};

constexpr std::array<ClassTemplates, 10> kClasses = {{
    {"run",
     {"a man runs across the field", "a person runs on the track",
      "the athlete runs during the race", "someone runs along the road"}},
    {"jump",
     {"a man jumps over the bar", "a person jumps on the trampoline",
      "the athlete jumps during practice", "someone jumps across the gap"}},
    {"swim",
     {"a man swims in the pool", "a person swims across the lake",
      "the swimmer swims during the meet", "someone swims near the shore"}},
    {"lift",
     {"a man lifts the heavy barbell", "a person lifts weights at the gym",
      "the athlete lifts during training", "someone lifts a loaded bar"}},
    {"throw",
     {"a man throws the ball far", "a person throws a javelin outside",
      "the athlete throws during the event", "someone throws a disc downfield"}},
    {"climb",
     {"a man climbs the steep wall", "a person climbs a rock face",
      "the climber climbs during the ascent", "someone climbs up the cliff"}},
    {"dance",
     {"a man dances on the stage", "a person dances at the party",
      "the dancer dances during the show", "someone dances in the studio"}},
    {"kick",
     {"a man kicks the soccer ball", "a person kicks toward the goal",
      "the player kicks during the match", "someone kicks a penalty shot"}},
    {"ride",
     {"a man rides a mountain bike", "a person rides along the trail",
      "the rider rides during the tour", "someone rides a road bike"}},
    {"dive",
     {"a man dives into the water", "a person dives off the board",
      "the diver dives during the event", "someone dives from the platform"}},
}};

constexpr double kMinGap = 0.5;  // seconds between placed segments

std::string video_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%04d", index);
  return buf;
}

std::vector<double> draw_normal_vector(SplitMix64& rng, std::size_t dim,
                                       double sigma) {
  std::vector<double> v(dim);
  for (double& x : v) x = sigma * rng.next_normal();
  return v;
}

// Indicator of the ground truth, blurred with a truncated 3-frame moving
// average.
std::vector<double> blurred_indicator(const std::vector<GtAnnotation>& gts,
                                      int frames, double fps) {
  std::vector<double> ind(frames, 0.0);
  for (int t = 0; t < frames; ++t) {
    const double center = (t + 0.5) / fps;
    for (const auto& gt : gts) {
      if (center >= gt.segment.start && center < gt.segment.end) {
        ind[t] = 1.0;
        break;
      }
    }
  }
  std::vector<double> blurred(frames, 0.0);
  for (int t = 0; t < frames; ++t) {
    const int lo = std::max(0, t - 1);
    const int hi = std::min(frames - 1, t + 1);
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) sum += ind[k];
    blurred[t] = sum / static_cast<double>(hi - lo + 1);
  }
  return blurred;
}

std::vector<double> noisy_channel(const std::vector<double>& base,
                                  double sigma, SplitMix64& rng) {
  std::vector<double> out(base.size());
  for (std::size_t t = 0; t < base.size(); ++t) {
    out[t] = std::clamp(base[t] + sigma * rng.next_normal(), 0.0, 1.0);
  }
  return out;
}

}  // namespace

void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.n_videos < 1) throw ValidationError("n_videos must be >= 1");
  if (!(cfg.duration_min > 0.0) || !(cfg.duration_max >= cfg.duration_min)) {
    throw ValidationError("duration range is degenerate");
  }
  if (cfg.gt_per_video_min < 1 ||
      cfg.gt_per_video_max < cfg.gt_per_video_min) {
    throw ValidationError("ground-truth count range is degenerate");
  }
  if (!(cfg.fps > 0.0)) throw ValidationError("fps must be positive");
  if (cfg.feature_dim == 0) throw ValidationError("feature_dim must be >= 1");
  if (cfg.noise_sigma < 0.0) throw ValidationError("noise sigma must be >= 0");
  if (!(cfg.signal_strength > 0.0)) {
    throw ValidationError("signal strength must be positive");
  }
  if (cfg.n_classes < 1 ||
      cfg.n_classes > static_cast<int>(kClasses.size())) {
    throw ValidationError("n_classes must lie in 1.." +
                          std::to_string(kClasses.size()));
  }
  if (cfg.n_streams < 1 || cfg.n_streams > 2) {
    throw ValidationError("n_streams must be 1 or 2");
  }
}

std::vector<std::string> stream_names(int n_streams) {
  std::vector<std::string> names = {"frame"};
  if (n_streams > 1) names.push_back("flow");
  return names;
}

std::string caption_class(const std::string& caption) {
  for (const auto& cls : kClasses) {
    for (const char* text : cls.captions) {
      if (caption == text) return cls.name;
    }
  }
  return {};
}

GeneratedCorpus generate_corpus(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  SplitMix64 rng(cfg.seed);

  // Class prototypes for features and caption embeddings, drawn first so a
  // larger corpus shares them with a smaller one of the same seed.
  std::vector<std::vector<double>> feature_proto;
  std::vector<std::vector<double>> embed_proto;
  for (int c = 0; c < cfg.n_classes; ++c) {
    feature_proto.push_back(draw_normal_vector(rng, cfg.feature_dim, 1.0));
  }
  for (int c = 0; c < cfg.n_classes; ++c) {
    auto v = draw_normal_vector(rng, cfg.feature_dim, 1.0);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    embed_proto.push_back(std::move(v));
  }

  GeneratedCorpus corpus;
  corpus.streams = stream_names(cfg.n_streams);
  corpus.curves.resize(corpus.streams.size());
  corpus.features.resize(corpus.streams.size());
  corpus.class_scores.resize(corpus.streams.size());
  for (auto& scores : corpus.class_scores) {
    for (int c = 0; c < cfg.n_classes; ++c) {
      scores.classes.push_back(kClasses[c].name);
    }
  }

  for (int v = 0; v < cfg.n_videos; ++v) {
    const std::string id = video_name(v);
    const double duration = rng.next_uniform(cfg.duration_min, cfg.duration_max);
    const int n_gt =
        cfg.gt_per_video_min +
        static_cast<int>(rng.next_below(
            static_cast<std::uint64_t>(cfg.gt_per_video_max -
                                       cfg.gt_per_video_min + 1)));
    const int class_idx = static_cast<int>(rng.next_below(cfg.n_classes));
    const std::string class_name = kClasses[class_idx].name;

    std::vector<double> lengths(n_gt);
    double total_len = 0.0;
    for (double& len : lengths) {
      len = rng.next_uniform(0.08 * duration, 0.25 * duration);
      total_len += len;
    }
    const double free_time =
        duration - total_len - kMinGap * static_cast<double>(n_gt + 1);
    if (free_time < 0.0) {
      throw ValidationError("segments cannot fit the video duration (" + id +
                            ")");
    }
    std::vector<double> gap_draw(n_gt + 1);
    double gap_sum = 0.0;
    for (double& g : gap_draw) {
      g = rng.next_double();
      gap_sum += g;
    }
    VideoGroundTruth video;
    video.duration = duration;
    double cursor = 0.0;
    for (int g = 0; g < n_gt; ++g) {
      cursor += kMinGap + free_time * gap_draw[g] / gap_sum;
      video.annotations.push_back(
          {{cursor, cursor + lengths[g]}, class_name});
      cursor += lengths[g];
    }
    corpus.gt.videos.emplace(id, video);

    const int frames =
        std::max(1, static_cast<int>(std::lround(duration * cfg.fps)));
    for (std::size_t s = 0; s < corpus.streams.size(); ++s) {
      const std::vector<double> base =
          blurred_indicator(video.annotations, frames, cfg.fps);
      ActionnessCurveSet curves;
      curves.video_id = id;
      curves.fps = cfg.fps;
      curves.point = noisy_channel(base, cfg.noise_sigma, rng);
      curves.pair = noisy_channel(base, cfg.noise_sigma, rng);
      curves.recurrent = noisy_channel(base, cfg.noise_sigma, rng);
      corpus.curves[s].emplace(id, std::move(curves));

      FeatureSequence feats;
      feats.time_steps = static_cast<std::uint32_t>(frames);
      feats.dim = cfg.feature_dim;
      feats.values.resize(static_cast<std::size_t>(frames) * cfg.feature_dim);
      for (int t = 0; t < frames; ++t) {
        const double center = (t + 0.5) / cfg.fps;
        bool inside = false;
        for (const auto& ann : video.annotations) {
          if (center >= ann.segment.start && center < ann.segment.end) {
            inside = true;
            break;
          }
        }
        for (std::uint32_t d = 0; d < cfg.feature_dim; ++d) {
          const double value =
              inside ? cfg.signal_strength * feature_proto[class_idx][d]
                     : cfg.noise_sigma * rng.next_normal();
          feats.values[static_cast<std::size_t>(t) * cfg.feature_dim + d] =
              static_cast<float>(value);
        }
      }
      corpus.features[s].emplace(id, std::move(feats));

      std::vector<double> logits(cfg.n_classes);
      for (int c = 0; c < cfg.n_classes; ++c) {
        logits[c] = (c == class_idx ? 2.0 : 0.0) + 0.5 * rng.next_normal();
      }
      const double zmax = *std::max_element(logits.begin(), logits.end());
      double zsum = 0.0;
      for (double& z : logits) {
        z = std::exp(z - zmax);
        zsum += z;
      }
      std::vector<double> probs(cfg.n_classes);
      for (int c = 0; c < cfg.n_classes; ++c) probs[c] = logits[c] / zsum;
      corpus.class_scores[s].predictions.emplace(id, std::move(probs));
    }

    for (int g = 0; g < n_gt; ++g) {
      retrieval::CaptionedSegment seg;
      seg.id = id + "_seg" + std::to_string(g);
      seg.embedding = embed_proto[class_idx];
      for (double& x : seg.embedding) {
        x += 0.5 * cfg.noise_sigma * rng.next_normal();
      }
      seg.captions.push_back(
          kClasses[class_idx].captions[rng.next_below(4)]);
      corpus.captions.push_back(std::move(seg));
    }
  }
  // Note: a "pure noise" video cannot occur (every video has >= 1 segment),
  // so every curve has signal for the coarse stage to find.
  validate_ground_truth(corpus.gt);
  return corpus;
}

void write_corpus(const GeneratedCorpus& corpus,
                  const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  write_ground_truth(corpus.gt, out_dir / "ground_truth.json");
  for (std::size_t s = 0; s < corpus.streams.size(); ++s) {
    const fs::path stream_dir = out_dir / "streams" / corpus.streams[s];
    fs::create_directories(stream_dir / "curves");
    fs::create_directories(stream_dir / "features");
    for (const auto& [id, curves] : corpus.curves[s]) {
      write_actionness_curves(curves, stream_dir / "curves" / (id + ".json"));
    }
    for (const auto& [id, feats] : corpus.features[s]) {
      write_feature_matrix(feats, stream_dir / "features" / (id + ".fseq"));
    }
    write_class_predictions(corpus.class_scores[s],
                            stream_dir / "class_scores.json");
  }
  retrieval::write_caption_corpus(corpus.captions, out_dir / "captions.json");
}

}  // namespace tap::synth
