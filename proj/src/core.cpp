#include "tap/core.hpp"

#include <cmath>
#include <sstream>

namespace tap {

namespace {

std::string with_context(const std::string& msg, const std::string& context) {
  if (context.empty()) return msg;
  return context + ": " + msg;
}

}  // namespace

void validate_segment(const TemporalSegment& s, const std::string& context) {
  if (!std::isfinite(s.start) || !std::isfinite(s.end)) {
    throw ValidationError(with_context("segment bounds must be finite", context));
  }
  if (s.start < 0.0) {
    throw ValidationError(with_context("segment start must be non-negative", context));
  }
  if (!(s.start < s.end)) {
    std::ostringstream os;
    os << "segment start must be strictly before end, got [" << s.start << ", "
       << s.end << ")";
    throw ValidationError(with_context(os.str(), context));
  }
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::CPN: return "CPN";
    case Stage::CAN: return "CAN";
    case Stage::PRN: return "PRN";
    case Stage::FUSED: return "FUSED";
  }
  return "CPN";
}

Stage stage_from_name(const std::string& name) {
  if (name == "CPN") return Stage::CPN;
  if (name == "CAN") return Stage::CAN;
  if (name == "PRN") return Stage::PRN;
  if (name == "FUSED") return Stage::FUSED;
  throw ValidationError("unknown stage name: " + name);
}

void validate_proposal(const Proposal& p) {
  if (p.video_id.empty()) throw ValidationError("proposal video_id is empty");
  validate_segment(p.segment, "proposal for video " + p.video_id);
  if (!std::isfinite(p.score) || p.score < 0.0 || p.score > 1.0) {
    std::ostringstream os;
    os << "proposal score must lie in [0, 1], got " << p.score << " (video "
       << p.video_id << ")";
    throw ValidationError(os.str());
  }
}

void validate_curves(const ActionnessCurveSet& c) {
  if (c.video_id.empty()) throw ValidationError("curve set video_id is empty");
  if (!(c.fps > 0.0) || !std::isfinite(c.fps)) {
    throw ValidationError("curve fps must be positive (video " + c.video_id + ")");
  }
  if (c.point.empty()) {
    throw ValidationError("curve channels must be non-empty (video " +
                          c.video_id + ")");
  }
  if (c.pair.size() != c.point.size() || c.recurrent.size() != c.point.size()) {
    throw ValidationError("curve channels differ in length (video " +
                          c.video_id + ")");
  }
  auto check_channel = [&](const std::vector<double>& ch, const char* name) {
    for (double v : ch) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        std::ostringstream os;
        os << name << " actionness value " << v << " outside [0, 1] (video "
           << c.video_id << ")";
        throw ValidationError(os.str());
      }
    }
  };
  check_channel(c.point, "point");
  check_channel(c.pair, "pair");
  check_channel(c.recurrent, "recurrent");
}

void validate_features(const FeatureSequence& f) {
  if (f.time_steps == 0 || f.dim == 0) {
    throw ValidationError("feature matrix must have T >= 1 and D >= 1");
  }
  if (f.values.size() !=
      static_cast<std::size_t>(f.time_steps) * f.dim) {
    throw ValidationError("feature matrix payload size does not match T*D");
  }
  for (float v : f.values) {
    if (!std::isfinite(v)) {
      throw ValidationError("feature matrix contains a non-finite value");
    }
  }
}

std::size_t GroundTruthSet::total_annotations() const {
  std::size_t n = 0;
  for (const auto& [id, video] : videos) n += video.annotations.size();
  return n;
}

void validate_ground_truth(const GroundTruthSet& gt) {
  for (const auto& [id, video] : gt.videos) {
    if (!(video.duration > 0.0) || !std::isfinite(video.duration)) {
      throw ValidationError("video " + id + " has non-positive duration");
    }
    for (const auto& ann : video.annotations) {
      validate_segment(ann.segment, "annotation of video " + id);
      if (ann.segment.end > video.duration) {
        std::ostringstream os;
        os << "annotation [" << ann.segment.start << ", " << ann.segment.end
           << ") of video " << id << " exceeds duration " << video.duration;
        throw ValidationError(os.str());
      }
    }
  }
}

void validate_class_prediction(const ClassPrediction& p) {
  if (p.probs.empty()) {
    throw ValidationError("class prediction " + p.id + " has no probabilities");
  }
  double sum = 0.0;
  for (double v : p.probs) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("class prediction " + p.id +
                            " has a negative or non-finite probability");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    std::ostringstream os;
    os << "class prediction " << p.id << " sums to " << sum << ", expected 1";
    throw ValidationError(os.str());
  }
}

}  // namespace tap
