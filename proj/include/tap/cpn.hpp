#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "tap/core.hpp"

namespace tap::cpn {

/// Watershed temporal actionness grouping configuration.
struct TagConfig {
  std::vector<double> thresholds = default_thresholds();  // flooding levels
  double group_fraction = 0.7;   // min covered/span frame ratio when absorbing
  double dedupe_tiou = 0.95;     // pairwise dedupe threshold
  int min_len_frames = 2;        // shortest emitted span

  static std::vector<double> default_thresholds();  // 0.05..0.95 step 0.05
};

void validate_tag_config(const TagConfig& cfg);

enum class FusionMode { kWeightedMean, kWeightedGeometric };

/// Weighted average of the three actionness channels. Weights must be
/// non-negative and sum to 1 within 1e-9.
std::vector<double> fuse_actionness(const ActionnessCurveSet& curves,
                                    const std::array<double, 3>& weights);

/// Weighted geometric mean alternative (product fusion).
std::vector<double> fuse_actionness_geometric(
    const ActionnessCurveSet& curves, const std::array<double, 3>& weights);

/// Floods the fused curve at every configured threshold, groups the basins
/// greedily while the covered-frame fraction stays above group_fraction, and
/// scores each span by its mean fused actionness. Result is deduplicated at
/// dedupe_tiou and sorted by score descending (earlier start on ties).
std::vector<Proposal> watershed_tag(std::span<const double> fused, double fps,
                                    const TagConfig& cfg,
                                    const std::string& video_id);

/// Greedy score-descending dedupe: drops any proposal within dedupe_tiou of
/// an already kept one.
std::vector<Proposal> merge_proposals(std::vector<Proposal> proposals,
                                      double dedupe_tiou);

}  // namespace tap::cpn
