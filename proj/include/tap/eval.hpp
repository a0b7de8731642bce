#pragma once

#include <span>
#include <vector>

#include "tap/core.hpp"

namespace tap::eval {

/// Temporal intersection over union of two segments, in [0, 1].
double tiou(const TemporalSegment& a, const TemporalSegment& b);

/// The tIoU thresholds 0.5, 0.55, ..., 0.95 used by both proposal recall and
/// detection mAP.
std::vector<double> iou_threshold_grid();

/// Average recall as a function of the average number of proposals kept per
/// video (AN = 1..100), with its area under the curve.
struct ArAnCurve {
  std::vector<int> an_grid;        // 1..100
  std::vector<double> ar_values;   // same length as an_grid
  double auc = 0.0;                // mean of ar_values
};

/// Recall at tIoU thresholds {0.5..0.95 step 0.05} averaged over thresholds,
/// evaluated per proposal budget AN in 1..100 (per-video top-AN by score).
/// Throws ValidationError when the ground truth holds no annotations.
ArAnCurve evaluate_proposals(std::span<const Proposal> proposals,
                             const GroundTruthSet& gt);

struct DetectionEval {
  std::vector<double> thresholds;         // 0.5..0.95
  std::vector<double> map_per_threshold;  // mAP at each threshold
  double average_map = 0.0;               // mean over thresholds
};

/// Interpolated-AP detection evaluation: per class and threshold, detections
/// are matched greedily in global score order against unmatched ground truth
/// of the same class and video; AP integrates the monotone precision
/// envelope over recall. Classes without ground truth are skipped.
/// Every detection must carry a label.
DetectionEval evaluate_detections(std::span<const Proposal> detections,
                                  const GroundTruthSet& gt);

}  // namespace tap::eval
