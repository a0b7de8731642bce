#include "tap/tubelet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tap::tubelet {

namespace {

double mean_actionness(const std::vector<BoxObservation>& boxes) {
  double sum = 0.0;
  for (const auto& b : boxes) sum += b.actionness;
  return sum / static_cast<double>(boxes.size());
}

}  // namespace

void validate_box(const Box& b) {
  for (double v : {b.x1, b.y1, b.x2, b.y2}) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ValidationError("box coordinates must lie in [0, 1]");
    }
  }
  if (!(b.x1 < b.x2) || !(b.y1 < b.y2)) {
    throw ValidationError("box must satisfy x1 < x2 and y1 < y2");
  }
}

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

void validate_link_config(const LinkConfig& cfg) {
  if (cfg.lambda_overlap < 0.0) {
    throw ValidationError("link lambda must be non-negative");
  }
  if (cfg.min_link_iou < 0.0 || cfg.min_link_iou > 1.0 ||
      cfg.trim_threshold < 0.0 || cfg.trim_threshold > 1.0) {
    throw ValidationError("link thresholds must lie in [0, 1]");
  }
  if (cfg.trim_window < 1) {
    throw ValidationError("trim window must be >= 1 frame");
  }
}

std::vector<Tubelet> link_tubelets(
    const std::string& video_id,
    const std::vector<std::vector<BoxObservation>>& per_frame,
    const LinkConfig& cfg) {
  validate_link_config(cfg);
  if (per_frame.empty()) {
    throw ValidationError("linking requires at least one frame");
  }
  for (const auto& frame : per_frame) {
    for (const auto& obs : frame) {
      validate_box(obs.box);
      if (obs.actionness < 0.0 || obs.actionness > 1.0) {
        throw ValidationError("box actionness must lie in [0, 1]");
      }
    }
  }

  const int n_frames = static_cast<int>(per_frame.size());
  std::vector<std::vector<bool>> removed(n_frames);
  for (int t = 0; t < n_frames; ++t) removed[t].assign(per_frame[t].size(), false);

  std::vector<Tubelet> out;
  while (true) {
    // score[t][j]: best total edge score of a path ending at box j of frame
    // t; length[t][j]: its node count. Ties prefer the longer path, then the
    // earliest (frame, box) reached during ascending iteration, so the
    // extraction order is deterministic.
    std::vector<std::vector<double>> score(n_frames);
    std::vector<std::vector<int>> length(n_frames);
    std::vector<std::vector<int>> parent(n_frames);
    double best_score = 0.0;
    int best_len = 1;
    int best_t = -1, best_j = -1;
    for (int t = 0; t < n_frames; ++t) {
      const auto& frame = per_frame[t];
      score[t].assign(frame.size(), 0.0);
      length[t].assign(frame.size(), 1);
      parent[t].assign(frame.size(), -1);
      for (std::size_t j = 0; j < frame.size(); ++j) {
        if (removed[t][j]) continue;
        if (t > 0) {
          const auto& prev = per_frame[t - 1];
          for (std::size_t i = 0; i < prev.size(); ++i) {
            if (removed[t - 1][i]) continue;
            const double iou = box_iou(prev[i].box, frame[j].box);
            if (iou < cfg.min_link_iou) continue;
            const double link = prev[i].actionness + frame[j].actionness +
                                cfg.lambda_overlap * iou;
            const double candidate = score[t - 1][i] + link;
            if (candidate > score[t][j] ||
                (candidate == score[t][j] &&
                 length[t - 1][i] + 1 > length[t][j])) {
              score[t][j] = candidate;
              length[t][j] = length[t - 1][i] + 1;
              parent[t][j] = static_cast<int>(i);
            }
          }
        }
        if (length[t][j] >= 2 &&
            (best_t < 0 || score[t][j] > best_score ||
             (score[t][j] == best_score && length[t][j] > best_len))) {
          best_score = score[t][j];
          best_len = length[t][j];
          best_t = t;
          best_j = static_cast<int>(j);
        }
      }
    }
    if (best_t < 0) break;

    std::vector<std::pair<int, int>> chain;  // (frame, box index)
    for (int t = best_t, j = best_j; j >= 0; j = parent[t][j], --t) {
      chain.emplace_back(t, j);
    }
    std::reverse(chain.begin(), chain.end());
    Tubelet tube;
    tube.video_id = video_id;
    tube.start_frame = chain.front().first;
    for (const auto& [t, j] : chain) {
      tube.boxes.push_back(per_frame[t][j]);
      removed[t][j] = true;
    }
    tube.score = mean_actionness(tube.boxes);
    out.push_back(std::move(tube));
  }

  // Leftover boxes become single-frame tubelets, in frame then index order.
  for (int t = 0; t < n_frames; ++t) {
    for (std::size_t j = 0; j < per_frame[t].size(); ++j) {
      if (removed[t][j]) continue;
      Tubelet tube;
      tube.video_id = video_id;
      tube.start_frame = t;
      tube.boxes.push_back(per_frame[t][j]);
      tube.score = per_frame[t][j].actionness;
      out.push_back(std::move(tube));
    }
  }
  return out;
}

std::optional<Tubelet> temporal_trim(const Tubelet& t, const LinkConfig& cfg) {
  validate_link_config(cfg);
  if (t.boxes.empty()) throw ValidationError("tubelet has no boxes");
  const int n = static_cast<int>(t.boxes.size());
  const int window = std::min(cfg.trim_window, n);
  const int left = (window - 1) / 2;
  const int right = window - 1 - left;

  // Centered moving average, truncated at the tubelet ends.
  std::vector<double> smooth(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - left);
    const int hi = std::min(n - 1, i + right);
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) sum += t.boxes[k].actionness;
    smooth[i] = sum / static_cast<double>(hi - lo + 1);
  }

  int best_begin = 0, best_len = 0;
  int i = 0;
  while (i < n) {
    if (smooth[i] >= cfg.trim_threshold) {
      int begin = i;
      while (i < n && smooth[i] >= cfg.trim_threshold) ++i;
      if (i - begin > best_len) {
        best_len = i - begin;
        best_begin = begin;
      }
    } else {
      ++i;
    }
  }
  if (best_len == 0) return std::nullopt;

  Tubelet trimmed;
  trimmed.video_id = t.video_id;
  trimmed.start_frame = t.start_frame + best_begin;
  trimmed.boxes.assign(t.boxes.begin() + best_begin,
                       t.boxes.begin() + best_begin + best_len);
  trimmed.score = mean_actionness(trimmed.boxes);
  return trimmed;
}

double evaluate_frame_map(const FrameBoxes& detections, const FrameBoxes& gt,
                          double iou_threshold) {
  std::set<std::string> classes;
  std::size_t total_gt = 0;
  for (const auto& [vid, frames] : gt) {
    for (const auto& frame : frames) {
      for (const auto& box : frame) {
        classes.insert(box.label);
        ++total_gt;
      }
    }
  }
  if (total_gt == 0) {
    throw ValidationError("frame mAP requires non-empty ground truth");
  }

  double ap_sum = 0.0;
  for (const std::string& cls : classes) {
    struct Det {
      const LabeledBox* box;
      const std::string* video;
      std::size_t frame;
    };
    std::vector<Det> dets;
    std::map<std::pair<std::string, std::size_t>, std::vector<const LabeledBox*>>
        gt_boxes;
    std::size_t n_gt = 0;
    for (const auto& [vid, frames] : gt) {
      for (std::size_t f = 0; f < frames.size(); ++f) {
        for (const auto& box : frames[f]) {
          if (box.label != cls) continue;
          gt_boxes[{vid, f}].push_back(&box);
          ++n_gt;
        }
      }
    }
    for (const auto& [vid, frames] : detections) {
      for (std::size_t f = 0; f < frames.size(); ++f) {
        for (const auto& box : frames[f]) {
          if (box.label != cls) continue;
          dets.push_back({&box, &vid, f});
        }
      }
    }
    std::sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
      if (a.box->score != b.box->score) return a.box->score > b.box->score;
      if (*a.video != *b.video) return *a.video < *b.video;
      if (a.frame != b.frame) return a.frame < b.frame;
      return a.box->box.x1 < b.box->box.x1;
    });

    std::map<std::pair<std::string, std::size_t>, std::vector<bool>> used;
    for (const auto& [key, boxes] : gt_boxes) used[key].assign(boxes.size(), false);
    std::size_t tp = 0;
    double ap = 0.0;
    double prev_recall = 0.0;
    std::vector<double> precision(dets.size()), recall(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto key = std::make_pair(*dets[i].video, dets[i].frame);
      const auto git = gt_boxes.find(key);
      if (git != gt_boxes.end()) {
        auto& flags = used[key];
        double best = -1.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < git->second.size(); ++j) {
          if (flags[j]) continue;
          const double v = box_iou(dets[i].box->box, git->second[j]->box);
          if (v > best) {
            best = v;
            best_j = j;
          }
        }
        if (best >= iou_threshold) {
          flags[best_j] = true;
          ++tp;
        }
      }
      precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
      recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
    }
    for (std::size_t i = dets.size(); i-- > 1;) {
      precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    for (std::size_t i = 0; i < dets.size(); ++i) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
    ap_sum += ap;
  }
  return ap_sum / static_cast<double>(classes.size());
}

}  // namespace tap::tubelet
