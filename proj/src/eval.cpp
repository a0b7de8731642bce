#include "tap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace tap::eval {

namespace {

constexpr int kMaxAn = 100;

bool proposal_order(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  return a.segment.end < b.segment.end;
}

}  // namespace

double tiou(const TemporalSegment& a, const TemporalSegment& b) {
  const double inter =
      std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<double> iou_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(0.5 + 0.05 * i);
  return grid;
}

ArAnCurve evaluate_proposals(std::span<const Proposal> proposals,
                             const GroundTruthSet& gt) {
  const std::size_t total_gt = gt.total_annotations();
  if (total_gt == 0) {
    throw ValidationError("proposal evaluation requires non-empty ground truth");
  }
  const std::vector<double> thresholds = iou_threshold_grid();
  const std::size_t n_thr = thresholds.size();

  std::map<std::string, std::vector<Proposal>> by_video;
  for (const Proposal& p : proposals) by_video[p.video_id].push_back(p);
  for (auto& [id, list] : by_video) {
    std::sort(list.begin(), list.end(), proposal_order);
  }

  // recalled[k][an-1] = number of gt instances covered at threshold k within
  // the per-video top-an proposals. Filled via each instance's first hit
  // rank, then accumulated.
  std::vector<std::vector<std::size_t>> new_hits(
      n_thr, std::vector<std::size_t>(kMaxAn + 1, 0));
  for (const auto& [video_id, video] : gt.videos) {
    const auto it = by_video.find(video_id);
    for (const GtAnnotation& ann : video.annotations) {
      if (it == by_video.end()) continue;
      const auto& list = it->second;
      double best = 0.0;
      std::size_t next_thr = 0;  // thresholds are ascending
      const std::size_t ranks = std::min<std::size_t>(list.size(), kMaxAn);
      for (std::size_t r = 0; r < ranks && next_thr < n_thr; ++r) {
        best = std::max(best, tiou(list[r].segment, ann.segment));
        while (next_thr < n_thr && best >= thresholds[next_thr]) {
          ++new_hits[next_thr][r + 1];
          ++next_thr;
        }
      }
    }
  }

  ArAnCurve curve;
  curve.an_grid.resize(kMaxAn);
  curve.ar_values.resize(kMaxAn);
  std::vector<std::size_t> cum(n_thr, 0);
  double auc_sum = 0.0;
  for (int an = 1; an <= kMaxAn; ++an) {
    double ar = 0.0;
    for (std::size_t k = 0; k < n_thr; ++k) {
      cum[k] += new_hits[k][an];
      ar += static_cast<double>(cum[k]) / static_cast<double>(total_gt);
    }
    ar /= static_cast<double>(n_thr);
    curve.an_grid[an - 1] = an;
    curve.ar_values[an - 1] = ar;
    auc_sum += ar;
  }
  curve.auc = auc_sum / static_cast<double>(kMaxAn);
  return curve;
}

DetectionEval evaluate_detections(std::span<const Proposal> detections,
                                  const GroundTruthSet& gt) {
  if (gt.total_annotations() == 0) {
    throw ValidationError("detection evaluation requires non-empty ground truth");
  }
  for (const Proposal& d : detections) {
    if (!d.label) {
      throw ValidationError("detection for video " + d.video_id +
                            " is missing a class label");
    }
  }

  std::set<std::string> classes;
  for (const auto& [id, video] : gt.videos) {
    for (const auto& ann : video.annotations) classes.insert(ann.label);
  }

  // Per class: ground truth segments grouped by video, detections in global
  // score order (deterministic tie-breaks).
  struct ClassData {
    std::map<std::string, std::vector<TemporalSegment>> gt_by_video;
    std::vector<const Proposal*> dets;
    std::size_t n_gt = 0;
  };
  std::map<std::string, ClassData> data;
  for (const std::string& c : classes) data[c] = {};
  for (const auto& [id, video] : gt.videos) {
    for (const auto& ann : video.annotations) {
      auto& cd = data[ann.label];
      cd.gt_by_video[id].push_back(ann.segment);
      ++cd.n_gt;
    }
  }
  for (const Proposal& d : detections) {
    auto it = data.find(*d.label);
    if (it != data.end()) it->second.dets.push_back(&d);
  }
  for (auto& [c, cd] : data) {
    std::sort(cd.dets.begin(), cd.dets.end(),
              [](const Proposal* a, const Proposal* b) {
                if (a->score != b->score) return a->score > b->score;
                if (a->video_id != b->video_id) return a->video_id < b->video_id;
                if (a->segment.start != b->segment.start) {
                  return a->segment.start < b->segment.start;
                }
                return a->segment.end < b->segment.end;
              });
  }

  const std::vector<double> thresholds = iou_threshold_grid();
  DetectionEval result;
  result.thresholds = thresholds;
  double map_sum = 0.0;
  for (double thr : thresholds) {
    double ap_sum = 0.0;
    for (const auto& [c, cd] : data) {
      // Greedy matching at this threshold.
      std::map<std::string, std::vector<bool>> used;
      for (const auto& [vid, segs] : cd.gt_by_video) {
        used[vid].assign(segs.size(), false);
      }
      const std::size_t n = cd.dets.size();
      std::vector<bool> is_tp(n, false);
      for (std::size_t i = 0; i < n; ++i) {
        const Proposal& d = *cd.dets[i];
        const auto git = cd.gt_by_video.find(d.video_id);
        if (git == cd.gt_by_video.end()) continue;
        const auto& segs = git->second;
        auto& flags = used[d.video_id];
        double best = -1.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < segs.size(); ++j) {
          if (flags[j]) continue;
          const double v = tiou(d.segment, segs[j]);
          if (v > best) {
            best = v;
            best_j = j;
          }
        }
        if (best >= thr) {
          is_tp[i] = true;
          flags[best_j] = true;
        }
      }
      // Interpolated AP: integrate the monotone precision envelope.
      std::vector<double> precision(n), recall(n);
      std::size_t tp = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (is_tp[i]) ++tp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(cd.n_gt);
      }
      for (std::size_t i = n; i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
      }
      double ap = 0.0;
      double prev_recall = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
      }
      ap_sum += ap;
    }
    const double map = ap_sum / static_cast<double>(data.size());
    result.map_per_threshold.push_back(map);
    map_sum += map;
  }
  result.average_map = map_sum / static_cast<double>(thresholds.size());
  return result;
}

}  // namespace tap::eval
