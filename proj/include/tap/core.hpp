#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tap/errors.hpp"

namespace tap {

/// Half-open time interval [start, end) in seconds.
struct TemporalSegment {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
};

/// Checks 0 <= start < end, both finite. Throws ValidationError.
void validate_segment(const TemporalSegment& s, const std::string& context = {});

enum class Stage { CPN, CAN, PRN, FUSED };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

/// A scored temporal interval for one video. `label` is set on detections
/// (classified proposals) and absent on plain proposals.
struct Proposal {
  std::string video_id;
  TemporalSegment segment;
  double score = 0.0;
  Stage stage = Stage::CPN;
  std::optional<std::string> label;
};

void validate_proposal(const Proposal& p);

/// Per-frame actionness channels for one video, each value in [0, 1].
struct ActionnessCurveSet {
  std::string video_id;
  double fps = 0.0;
  std::vector<double> point;
  std::vector<double> pair;
  std::vector<double> recurrent;

  std::size_t length() const { return point.size(); }
};

void validate_curves(const ActionnessCurveSet& c);

/// T x D feature matrix, row-major by time step. Values are binary32 to
/// match the FSEQ on-disk format bit for bit.
struct FeatureSequence {
  std::uint32_t time_steps = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;  // time_steps * dim

  std::span<const float> row(std::uint32_t t) const {
    return {values.data() + static_cast<std::size_t>(t) * dim, dim};
  }
};

void validate_features(const FeatureSequence& f);

struct GtAnnotation {
  TemporalSegment segment;
  std::string label;
};

struct VideoGroundTruth {
  double duration = 0.0;
  std::vector<GtAnnotation> annotations;
};

/// Reference annotations keyed by video id; iteration order is lexicographic
/// by construction (std::map).
struct GroundTruthSet {
  std::map<std::string, VideoGroundTruth> videos;

  std::size_t total_annotations() const;
};

void validate_ground_truth(const GroundTruthSet& gt);

/// Probability distribution over a class vocabulary for one video/proposal.
struct ClassPrediction {
  std::string id;
  std::vector<double> probs;
};

void validate_class_prediction(const ClassPrediction& p);

/// A vocabulary plus one prediction per id, as stored in class-score files.
struct ClassPredictionSet {
  std::vector<std::string> classes;
  std::map<std::string, std::vector<double>> predictions;
};

}  // namespace tap
