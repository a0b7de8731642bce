#include "tap/cpn.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "tap/eval.hpp"

namespace tap::cpn {

namespace {

void check_weights(const std::array<double, 3>& weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError("channel weights must be non-negative");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("channel weights must sum to 1");
  }
}

bool score_then_start(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  return a.segment.end < b.segment.end;
}

}  // namespace

std::vector<double> TagConfig::default_thresholds() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
  return grid;
}

void validate_tag_config(const TagConfig& cfg) {
  if (cfg.thresholds.empty()) {
    throw ValidationError("TAG thresholds must be non-empty");
  }
  double prev = 0.0;
  for (double g : cfg.thresholds) {
    if (!(g > 0.0) || !(g < 1.0)) {
      throw ValidationError("TAG thresholds must lie in (0, 1)");
    }
    if (g <= prev) {
      throw ValidationError("TAG thresholds must be strictly increasing");
    }
    prev = g;
  }
  if (!(cfg.group_fraction > 0.0) || cfg.group_fraction > 1.0) {
    throw ValidationError("TAG group fraction must lie in (0, 1]");
  }
  if (cfg.dedupe_tiou < 0.0 || cfg.dedupe_tiou > 1.0) {
    throw ValidationError("TAG dedupe tIoU must lie in [0, 1]");
  }
  if (cfg.min_len_frames < 1) {
    throw ValidationError("TAG min length must be >= 1 frame");
  }
}

std::vector<double> fuse_actionness(const ActionnessCurveSet& curves,
                                    const std::array<double, 3>& weights) {
  validate_curves(curves);
  check_weights(weights);
  const std::size_t n = curves.length();
  std::vector<double> fused(n);
  for (std::size_t t = 0; t < n; ++t) {
    fused[t] = weights[0] * curves.point[t] + weights[1] * curves.pair[t] +
               weights[2] * curves.recurrent[t];
  }
  return fused;
}

std::vector<double> fuse_actionness_geometric(
    const ActionnessCurveSet& curves, const std::array<double, 3>& weights) {
  validate_curves(curves);
  check_weights(weights);
  const std::size_t n = curves.length();
  std::vector<double> fused(n);
  auto channel_pow = [](double v, double w) {
    if (w == 0.0) return 1.0;
    return v == 0.0 ? 0.0 : std::pow(v, w);
  };
  for (std::size_t t = 0; t < n; ++t) {
    fused[t] = channel_pow(curves.point[t], weights[0]) *
               channel_pow(curves.pair[t], weights[1]) *
               channel_pow(curves.recurrent[t], weights[2]);
  }
  return fused;
}

std::vector<Proposal> watershed_tag(std::span<const double> fused, double fps,
                                    const TagConfig& cfg,
                                    const std::string& video_id) {
  if (fused.empty()) {
    throw ValidationError("watershed grouping requires a non-empty curve");
  }
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
  validate_tag_config(cfg);

  struct Basin {
    std::size_t begin;
    std::size_t end;  // exclusive frame index
  };

  // A span reappears at every threshold below its lowest actionness with an
  // identical score, so frame spans are collected once.
  std::set<std::pair<std::size_t, std::size_t>> spans;
  auto emit = [&](std::size_t begin, std::size_t end) {
    if (end - begin < static_cast<std::size_t>(cfg.min_len_frames)) return;
    spans.emplace(begin, end);
  };

  for (double gamma : cfg.thresholds) {
    std::vector<Basin> basins;
    std::size_t t = 0;
    while (t < fused.size()) {
      if (fused[t] >= gamma) {
        std::size_t begin = t;
        while (t < fused.size() && fused[t] >= gamma) ++t;
        basins.push_back({begin, t});
      } else {
        ++t;
      }
    }
    // From every basin, greedily absorb the following basins while the
    // covered fraction of the grown span stays above the grouping fraction.
    for (std::size_t i = 0; i < basins.size(); ++i) {
      std::size_t covered = 0;
      for (std::size_t j = i; j < basins.size(); ++j) {
        covered += basins[j].end - basins[j].begin;
        const std::size_t span = basins[j].end - basins[i].begin;
        if (static_cast<double>(covered) / static_cast<double>(span) <
            cfg.group_fraction) {
          break;
        }
        emit(basins[i].begin, basins[j].end);
      }
    }
  }

  std::vector<double> prefix(fused.size() + 1, 0.0);
  for (std::size_t t = 0; t < fused.size(); ++t) {
    prefix[t + 1] = prefix[t] + fused[t];
  }
  std::vector<Proposal> out;
  out.reserve(spans.size());
  for (const auto& [begin, end] : spans) {
    Proposal p;
    p.video_id = video_id;
    p.segment = {static_cast<double>(begin) / fps,
                 static_cast<double>(end) / fps};
    // The mean of values in [0, 1] can drift an ulp past 1 in the prefix
    // sums; pin it back into range.
    p.score = std::clamp(
        (prefix[end] - prefix[begin]) / static_cast<double>(end - begin), 0.0,
        1.0);
    p.stage = Stage::CPN;
    out.push_back(std::move(p));
  }
  out = merge_proposals(std::move(out), cfg.dedupe_tiou);
  std::sort(out.begin(), out.end(), score_then_start);
  return out;
}

std::vector<Proposal> merge_proposals(std::vector<Proposal> proposals,
                                      double dedupe_tiou) {
  std::sort(proposals.begin(), proposals.end(), score_then_start);
  std::vector<Proposal> kept;
  for (Proposal& p : proposals) {
    bool suppressed = false;
    for (const Proposal& k : kept) {
      if (k.video_id == p.video_id &&
          eval::tiou(k.segment, p.segment) >= dedupe_tiou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(std::move(p));
  }
  return kept;
}

}  // namespace tap::cpn
