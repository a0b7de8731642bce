#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tap/core.hpp"

namespace tap::tubelet {

/// Axis-aligned box in normalized image coordinates.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const { return (x2 - x1) * (y2 - y1); }
};

void validate_box(const Box& b);

double box_iou(const Box& a, const Box& b);

struct BoxObservation {
  Box box;
  double actionness = 0.0;
};

/// Frame-contiguous chain of boxes; score is the mean actionness.
struct Tubelet {
  std::string video_id;
  int start_frame = 0;
  std::vector<BoxObservation> boxes;
  double score = 0.0;
};

struct LinkConfig {
  double lambda_overlap = 1.0;  // weight of the IoU term in the link score
  double min_link_iou = 0.1;    // links below this overlap are forbidden
  int trim_window = 8;          // moving-average window (frames)
  double trim_threshold = 0.3;  // minimum windowed actionness to keep
};

void validate_link_config(const LinkConfig& cfg);

/// Links per-frame boxes into tubelets by repeatedly extracting the
/// maximum-total-score path over the frame-layered graph (link score =
/// actionness_i + actionness_j + lambda * IoU) via dynamic programming,
/// removing its boxes, until only isolated boxes remain. Those become
/// length-1 tubelets, appended in frame order.
std::vector<Tubelet> link_tubelets(
    const std::string& video_id,
    const std::vector<std::vector<BoxObservation>>& per_frame,
    const LinkConfig& cfg);

/// Keeps the longest contiguous run whose moving-average actionness stays
/// above the trim threshold; empty when no frame qualifies.
std::optional<Tubelet> temporal_trim(const Tubelet& t, const LinkConfig& cfg);

struct LabeledBox {
  Box box;
  std::string label;
  double score = 0.0;
};

/// Per-video, per-frame labeled boxes (detections or ground truth).
using FrameBoxes = std::map<std::string, std::vector<std::vector<LabeledBox>>>;

/// Frame-level mAP at a fixed box-IoU threshold: AP per class over all frames
/// pooled (greedy score-ordered matching, one detection per ground-truth
/// box), averaged over classes present in the ground truth.
double evaluate_frame_map(const FrameBoxes& detections, const FrameBoxes& gt,
                          double iou_threshold = 0.5);

}  // namespace tap::tubelet
