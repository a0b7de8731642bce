// Brute-force reference implementations for the evaluation metrics and the
// tubelet linker. Deliberately naive and self-contained: everything below is
// recomputed from the raw definitions, with no calls into the eval or
// tubelet modules.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "tap/synth.hpp"

namespace tap::synth {

namespace {

double segment_iou(const TemporalSegment& a, const TemporalSegment& b) {
  const double lo = std::max(a.start, b.start);
  const double hi = std::min(a.end, b.end);
  const double inter = hi > lo ? hi - lo : 0.0;
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double rect_iou(const tubelet::Box& a, const tubelet::Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
  return inter / (area_a + area_b - inter);
}

}  // namespace

OracleCurve oracle_evaluate_proposals(std::span<const Proposal> proposals,
                                      const GroundTruthSet& gt) {
  if (gt.total_annotations() == 0) {
    throw ValidationError("oracle requires non-empty ground truth");
  }
  std::map<std::string, std::vector<Proposal>> by_video;
  for (const Proposal& p : proposals) by_video[p.video_id].push_back(p);
  for (auto& [id, list] : by_video) {
    std::sort(list.begin(), list.end(), [](const Proposal& a, const Proposal& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.segment.start != b.segment.start) {
        return a.segment.start < b.segment.start;
      }
      return a.segment.end < b.segment.end;
    });
  }

  const double total = static_cast<double>(gt.total_annotations());
  OracleCurve curve;
  double auc_sum = 0.0;
  for (int an = 1; an <= 100; ++an) {
    double ar = 0.0;
    for (int k = 0; k < 10; ++k) {
      const double thr = 0.5 + 0.05 * k;
      std::size_t recalled = 0;
      for (const auto& [id, video] : gt.videos) {
        for (const auto& ann : video.annotations) {
          const auto it = by_video.find(id);
          if (it == by_video.end()) continue;
          const std::size_t budget =
              std::min<std::size_t>(it->second.size(), an);
          for (std::size_t r = 0; r < budget; ++r) {
            if (segment_iou(it->second[r].segment, ann.segment) >= thr) {
              ++recalled;
              break;
            }
          }
        }
      }
      ar += static_cast<double>(recalled) / total;
    }
    ar /= 10.0;
    curve.ar_values.push_back(ar);
    auc_sum += ar;
  }
  curve.auc = auc_sum / 100.0;
  return curve;
}

double oracle_ap(std::span<const Proposal> detections, const GroundTruthSet& gt,
                 double threshold) {
  if (gt.total_annotations() == 0) {
    throw ValidationError("oracle requires non-empty ground truth");
  }
  std::set<std::string> classes;
  for (const auto& [id, video] : gt.videos) {
    for (const auto& ann : video.annotations) classes.insert(ann.label);
  }

  double ap_sum = 0.0;
  for (const std::string& cls : classes) {
    std::vector<const Proposal*> dets;
    for (const Proposal& d : detections) {
      if (d.label && *d.label == cls) dets.push_back(&d);
    }
    std::sort(dets.begin(), dets.end(),
              [](const Proposal* a, const Proposal* b) {
                if (a->score != b->score) return a->score > b->score;
                if (a->video_id != b->video_id) return a->video_id < b->video_id;
                if (a->segment.start != b->segment.start) {
                  return a->segment.start < b->segment.start;
                }
                return a->segment.end < b->segment.end;
              });

    std::map<std::string, std::vector<std::pair<TemporalSegment, bool>>> gts;
    std::size_t n_gt = 0;
    for (const auto& [id, video] : gt.videos) {
      for (const auto& ann : video.annotations) {
        if (ann.label != cls) continue;
        gts[id].emplace_back(ann.segment, false);
        ++n_gt;
      }
    }

    std::vector<bool> tp(dets.size(), false);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      auto it = gts.find(dets[i]->video_id);
      if (it == gts.end()) continue;
      double best = -1.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        if (it->second[j].second) continue;
        const double v = segment_iou(dets[i]->segment, it->second[j].first);
        if (v > best) {
          best = v;
          best_j = j;
        }
      }
      if (best >= threshold) {
        tp[i] = true;
        it->second[best_j].second = true;
      }
    }

    double ap = 0.0;
    std::size_t cum_tp = 0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (tp[i]) ++cum_tp;
      const double recall = static_cast<double>(cum_tp) / static_cast<double>(n_gt);
      // Envelope by direct rescan: the best precision at any rank >= i.
      double envelope = 0.0;
      std::size_t tp_ahead = cum_tp;
      for (std::size_t j = i; j < dets.size(); ++j) {
        if (j > i && tp[j]) ++tp_ahead;
        envelope = std::max(envelope, static_cast<double>(tp_ahead) /
                                          static_cast<double>(j + 1));
      }
      ap += (recall - prev_recall) * envelope;
      prev_recall = recall;
    }
    ap_sum += ap;
  }
  return ap_sum / static_cast<double>(classes.size());
}

namespace {

struct PathCandidate {
  double score = 0.0;
  std::vector<std::pair<int, int>> cells;  // (frame, box index)
};

// True when a is strictly better: higher score, then longer, then earlier
// end frame, then smaller end box index, then smaller predecessor indices
// scanning backwards (matches the DP's ascending-scan tie behavior).
bool better_path(const PathCandidate& a, const PathCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.cells.size() != b.cells.size()) return a.cells.size() > b.cells.size();
  if (a.cells.back().first != b.cells.back().first) {
    return a.cells.back().first < b.cells.back().first;
  }
  for (std::size_t i = a.cells.size(); i-- > 0;) {
    if (a.cells[i].second != b.cells[i].second) {
      return a.cells[i].second < b.cells[i].second;
    }
  }
  return false;
}

}  // namespace

std::vector<tubelet::Tubelet> oracle_link(
    const std::string& video_id,
    const std::vector<std::vector<tubelet::BoxObservation>>& per_frame,
    const tubelet::LinkConfig& cfg) {
  if (per_frame.size() > 4) {
    throw ValidationError("oracle_link handles at most 4 frames");
  }
  for (const auto& frame : per_frame) {
    if (frame.size() > 3) {
      throw ValidationError("oracle_link handles at most 3 boxes per frame");
    }
  }
  const int n_frames = static_cast<int>(per_frame.size());
  std::vector<std::vector<bool>> removed(n_frames);
  for (int t = 0; t < n_frames; ++t) removed[t].assign(per_frame[t].size(), false);

  std::vector<tubelet::Tubelet> out;
  while (true) {
    // Enumerate every contiguous path of length >= 2 over remaining boxes.
    std::vector<PathCandidate> paths;
    std::vector<PathCandidate> frontier;
    for (int t = 0; t < n_frames; ++t) {
      std::vector<PathCandidate> next;
      for (std::size_t j = 0; j < per_frame[t].size(); ++j) {
        if (removed[t][j]) continue;
        next.push_back({0.0, {{t, static_cast<int>(j)}}});
        for (const PathCandidate& path : frontier) {
          const auto [pt, pj] = path.cells.back();
          if (pt != t - 1) continue;
          const auto& prev_box = per_frame[pt][pj];
          const auto& cur_box = per_frame[t][j];
          const double iou = rect_iou(prev_box.box, cur_box.box);
          if (iou < cfg.min_link_iou) continue;
          PathCandidate grown = path;
          grown.score += prev_box.actionness + cur_box.actionness +
                         cfg.lambda_overlap * iou;
          grown.cells.emplace_back(t, static_cast<int>(j));
          next.push_back(std::move(grown));
        }
      }
      for (const PathCandidate& p : next) {
        if (p.cells.size() >= 2) paths.push_back(p);
      }
      frontier = std::move(next);
    }
    if (paths.empty()) break;
    PathCandidate best = paths.front();
    for (std::size_t i = 1; i < paths.size(); ++i) {
      if (better_path(paths[i], best)) best = paths[i];
    }

    tubelet::Tubelet tube;
    tube.video_id = video_id;
    tube.start_frame = best.cells.front().first;
    double score_sum = 0.0;
    for (const auto& [t, j] : best.cells) {
      tube.boxes.push_back(per_frame[t][j]);
      score_sum += per_frame[t][j].actionness;
      removed[t][j] = true;
    }
    tube.score = score_sum / static_cast<double>(best.cells.size());
    out.push_back(std::move(tube));
  }

  for (int t = 0; t < n_frames; ++t) {
    for (std::size_t j = 0; j < per_frame[t].size(); ++j) {
      if (removed[t][j]) continue;
      tubelet::Tubelet tube;
      tube.video_id = video_id;
      tube.start_frame = t;
      tube.boxes.push_back(per_frame[t][j]);
      tube.score = per_frame[t][j].actionness;
      out.push_back(std::move(tube));
    }
  }
  return out;
}

}  // namespace tap::synth
