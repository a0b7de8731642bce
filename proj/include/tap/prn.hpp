#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tap/core.hpp"

namespace tap::prn {

/// Logistic scorer over the start|center|end pooled representation.
struct PrnModel {
  std::vector<double> weights;  // 3 * feature dim
  double bias = 0.0;
  bool trained = false;
};

struct PrnConfig {
  double lr = 0.1;
  int epochs = 200;
  std::uint64_t seed = 7;
  double pos_tiou = 0.7;   // training positives: tIoU >= pos_tiou
  double neg_tiou = 0.3;   // training negatives: tIoU < neg_tiou
  double blend = 0.0;      // 0 replaces the upstream score entirely
};

/// Splits a proposal into its context parts: start and end flanks of half
/// the proposal duration, clipped to the video. A flank clipped away
/// entirely becomes a one-sample-wide stub at the boundary (hence fps).
/// Returns {start_part, center_part, end_part}.
std::array<TemporalSegment, 3> expand_context(const TemporalSegment& p,
                                              double duration, double fps);

/// Average-pools the feature rows each part overlaps and concatenates
/// start||center||end. A part overlapping no rows falls back to the nearest
/// single row.
std::vector<double> proposal_representation(
    const std::array<TemporalSegment, 3>& parts,
    const FeatureSequence& features, double fps);

struct TrainExample {
  std::vector<double> representation;
  double tiou = 0.0;  // overlap with the best-matching ground truth
};

/// Logistic regression by seeded SGD; examples with tIoU in
/// [neg_tiou, pos_tiou) are excluded. Requires at least one positive and
/// one negative.
PrnModel train_prn(std::span<const TrainExample> corpus, const PrnConfig& cfg);

double score_representation(const PrnModel& model,
                            std::span<const double> representation);

/// Rescores proposals with the trained model and returns the top
/// min(k, n) by score descending (earlier start, then shorter segment on
/// ties). Segments are never altered. blend > 0 mixes the upstream score in.
std::vector<Proposal> rerank(const PrnModel& model,
                             std::span<const Proposal> proposals,
                             const FeatureSequence& features, double fps,
                             std::size_t k = 100, double blend = 0.0);

/// Model JSON: {"weights": [...], "bias": b}.
PrnModel read_prn_model(const std::filesystem::path& path);
void write_prn_model(const PrnModel& model, const std::filesystem::path& path);

}  // namespace tap::prn
