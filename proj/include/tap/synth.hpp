#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tap/core.hpp"
#include "tap/retrieval.hpp"
#include "tap/tubelet.hpp"

namespace tap::synth {

/// Seeded synthetic-corpus generator. Every value is a pure function of the
/// seed (SplitMix64, single draw stream), so regenerating with one config
/// yields byte-identical files.
struct SynthConfig {
  int n_videos = 20;
  double duration_min = 30.0;
  double duration_max = 60.0;
  int gt_per_video_min = 1;
  int gt_per_video_max = 3;
  double fps = 4.0;
  std::uint32_t feature_dim = 16;
  double noise_sigma = 0.15;      // curve and feature noise
  double signal_strength = 1.0;   // scale of in-segment feature vectors
  std::uint64_t seed = 42;
  int n_classes = 5;              // capped by the built-in class list
  int n_streams = 1;              // independent noise realizations
};

void validate_synth_config(const SynthConfig& cfg);

/// Names for the generated streams ("frame", then "flow").
std::vector<std::string> stream_names(int n_streams);

struct GeneratedCorpus {
  GroundTruthSet gt;
  std::vector<std::string> streams;
  // Indexed [stream][video id].
  std::vector<std::map<std::string, ActionnessCurveSet>> curves;
  std::vector<std::map<std::string, FeatureSequence>> features;
  std::vector<ClassPredictionSet> class_scores;
  std::vector<retrieval::CaptionedSegment> captions;  // one per gt segment
};

GeneratedCorpus generate_corpus(const SynthConfig& cfg);

/// Writes ground_truth.json, streams/<name>/{curves,features,
/// class_scores.json} and captions.json under out_dir.
void write_corpus(const GeneratedCorpus& corpus,
                  const std::filesystem::path& out_dir);

/// The class label of a caption's template set, or empty when the caption
/// does not come from the built-in templates. Used to check consensus picks.
std::string caption_class(const std::string& caption);

// Brute-force reference implementations, written against core types only and
// sharing no logic with the eval/tubelet modules.

struct OracleCurve {
  std::vector<double> ar_values;  // AN = 1..100
  double auc = 0.0;
};

OracleCurve oracle_evaluate_proposals(std::span<const Proposal> proposals,
                                      const GroundTruthSet& gt);

/// Average precision of labeled detections at one tIoU threshold.
double oracle_ap(std::span<const Proposal> detections, const GroundTruthSet& gt,
                 double threshold);

/// Exhaustive-path reference for tubelet linking; instances above 4 frames
/// or 3 boxes per frame are rejected.
std::vector<tubelet::Tubelet> oracle_link(
    const std::string& video_id,
    const std::vector<std::vector<tubelet::BoxObservation>>& per_frame,
    const tubelet::LinkConfig& cfg);

}  // namespace tap::synth
