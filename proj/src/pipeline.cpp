#include "tap/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "tap/eval.hpp"

namespace tap::pipeline {

namespace {

bool score_order(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  return a.segment.end < b.segment.end;
}

std::vector<Proposal> top_k_per_video(std::vector<Proposal> proposals,
                                      std::size_t k) {
  std::sort(proposals.begin(), proposals.end(), score_order);
  std::map<std::string, std::size_t> kept;
  std::vector<Proposal> out;
  for (Proposal& p : proposals) {
    if (kept[p.video_id] < k) {
      ++kept[p.video_id];
      out.push_back(std::move(p));
    }
  }
  return out;
}

void check_simplex(const std::map<std::string, double>& weights,
                   const char* what) {
  double sum = 0.0;
  for (const auto& [name, w] : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError(std::string(what) + " weights must be non-negative");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError(std::string(what) + " weights must sum to 1");
  }
}

}  // namespace

void validate_pipeline_config(const PipelineConfig& cfg) {
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(cfg.rho_split) || !in_unit(cfg.nms_tiou) ||
      !in_unit(cfg.duplicate_merge_tiou)) {
    throw ValidationError("pipeline thresholds must lie in (0, 1]");
  }
  if (cfg.k_final < 1) throw ValidationError("k_final must be >= 1");
  if (cfg.classes_per_proposal < 1) {
    throw ValidationError("classes_per_proposal must be >= 1");
  }
  if (!cfg.stream_weights.empty()) check_simplex(cfg.stream_weights, "stream");
}

std::vector<Proposal> nms(std::vector<Proposal> proposals,
                          double tiou_threshold) {
  std::sort(proposals.begin(), proposals.end(), score_order);
  std::vector<Proposal> kept;
  std::map<std::string, std::vector<std::size_t>> kept_by_video;
  for (Proposal& p : proposals) {
    auto& indices = kept_by_video[p.video_id];
    bool drop = false;
    for (std::size_t i : indices) {
      if (eval::tiou(kept[i].segment, p.segment) >= tiou_threshold) {
        drop = true;
        break;
      }
    }
    if (!drop) {
      indices.push_back(kept.size());
      kept.push_back(std::move(p));
    }
  }
  return kept;
}

StageOutputs run_stage_pipeline(const std::string& video_id,
                                const ActionnessCurveSet& curves,
                                const FeatureSequence& features,
                                const StageModels& models,
                                const PipelineConfig& cfg) {
  validate_pipeline_config(cfg);
  if (curves.video_id != video_id) {
    throw ValidationError("curves for video " + video_id + " are missing");
  }
  validate_features(features);

  const std::vector<double> fused =
      models.fusion_mode == cpn::FusionMode::kWeightedMean
          ? cpn::fuse_actionness(curves, models.channel_weights)
          : cpn::fuse_actionness_geometric(curves, models.channel_weights);
  const double duration = static_cast<double>(curves.length()) / curves.fps;

  StageOutputs out;
  std::vector<Proposal> coarse =
      cpn::watershed_tag(fused, curves.fps, models.tag, video_id);
  out.cpn = top_k_per_video(nms(coarse, cfg.nms_tiou),
                            static_cast<std::size_t>(cfg.k_final));

  // Long proposals go through anchor refinement, short ones pass straight
  // to the reranker.
  std::vector<Proposal> pool;
  for (const Proposal& p : out.cpn) {
    if (models.can_net != nullptr &&
        p.segment.length() > cfg.rho_split * duration) {
      for (Proposal& r : can::refine(*models.can_net, p, features, curves.fps)) {
        pool.push_back(std::move(r));
      }
    } else {
      pool.push_back(p);
    }
  }
  out.can = top_k_per_video(nms(pool, cfg.nms_tiou),
                            static_cast<std::size_t>(cfg.k_final));

  if (models.prn_model != nullptr) {
    std::vector<Proposal> reranked =
        prn::rerank(*models.prn_model, pool, features, curves.fps,
                    pool.size(), models.prn_blend);
    out.prn = top_k_per_video(nms(std::move(reranked), cfg.nms_tiou),
                              static_cast<std::size_t>(cfg.k_final));
  } else {
    out.prn = out.can;
  }
  return out;
}

std::vector<Proposal> fuse_streams(
    const std::map<std::string, std::vector<Proposal>>& per_stream,
    const std::map<std::string, double>& weights, const PipelineConfig& cfg) {
  validate_pipeline_config(cfg);
  if (per_stream.empty()) throw ValidationError("no streams to fuse");
  check_simplex(weights, "stream");
  for (const auto& [name, list] : per_stream) {
    if (weights.find(name) == weights.end()) {
      throw ValidationError("missing weight for stream " + name);
    }
  }
  for (const auto& [name, w] : weights) {
    if (per_stream.find(name) == per_stream.end()) {
      throw ValidationError("weight given for unknown stream " + name);
    }
  }

  // Streams in descending weight (name ascending on ties) so that a merged
  // group keeps the segment of its highest-weighted contributor.
  std::vector<std::string> order;
  for (const auto& [name, w] : weights) order.push_back(name);
  std::sort(order.begin(), order.end(),
            [&weights](const std::string& a, const std::string& b) {
              const double wa = weights.at(a), wb = weights.at(b);
              if (wa != wb) return wa > wb;
              return a < b;
            });

  struct Group {
    Proposal rep;       // segment from the highest-weighted contributor
    double fused = 0.0;
  };
  std::map<std::string, std::vector<Group>> groups_by_video;
  for (const std::string& stream : order) {
    const double w = weights.at(stream);
    if (w == 0.0) continue;
    std::vector<Proposal> list = per_stream.at(stream);
    std::sort(list.begin(), list.end(), score_order);
    std::map<std::string, std::vector<bool>> claimed;  // per group, this stream
    for (const Proposal& p : list) {
      validate_proposal(p);
      auto& groups = groups_by_video[p.video_id];
      auto& used = claimed[p.video_id];
      used.resize(groups.size(), false);
      double best = -1.0;
      std::size_t best_g = 0;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (used[g]) continue;
        const double v = eval::tiou(groups[g].rep.segment, p.segment);
        if (v > best) {
          best = v;
          best_g = g;
        }
      }
      if (best >= cfg.duplicate_merge_tiou) {
        groups[best_g].fused += w * p.score;
        used[best_g] = true;
      } else {
        Group g;
        g.rep = p;
        g.fused = w * p.score;
        groups.push_back(std::move(g));
        used.push_back(true);
      }
    }
  }

  std::vector<Proposal> fused;
  for (auto& [video_id, groups] : groups_by_video) {
    for (Group& g : groups) {
      Proposal p = std::move(g.rep);
      p.score = std::min(1.0, g.fused);
      p.stage = Stage::FUSED;
      fused.push_back(std::move(p));
    }
  }
  return top_k_per_video(nms(std::move(fused), cfg.nms_tiou),
                         static_cast<std::size_t>(cfg.k_final));
}

namespace {

double tune_objective_value(const std::vector<Proposal>& fused,
                            const GroundTruthSet& gt, TuneObjective objective) {
  switch (objective) {
    case TuneObjective::kAuc:
      return eval::evaluate_proposals(fused, gt).auc;
    case TuneObjective::kAvgMap:
      return eval::evaluate_detections(fused, gt).average_map;
    case TuneObjective::kTop1: {
      // Mean over videos of the best overlap achieved by the top proposal.
      std::map<std::string, const Proposal*> top;
      for (const Proposal& p : fused) {
        auto [it, inserted] = top.try_emplace(p.video_id, &p);
        if (!inserted && p.score > it->second->score) it->second = &p;
      }
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& [video_id, video] : gt.videos) {
        if (video.annotations.empty()) continue;
        ++n;
        const auto it = top.find(video_id);
        if (it == top.end()) continue;
        double best = 0.0;
        for (const auto& ann : video.annotations) {
          best = std::max(best, eval::tiou(it->second->segment, ann.segment));
        }
        sum += best;
      }
      if (n == 0) throw ValidationError("ground truth holds no annotations");
      return sum / static_cast<double>(n);
    }
  }
  return 0.0;
}

void enumerate_compositions(int units, int slots, std::vector<int>& current,
                            std::vector<std::vector<int>>& out) {
  if (slots == 1) {
    current.push_back(units);
    out.push_back(current);
    current.pop_back();
    return;
  }
  for (int u = 0; u <= units; ++u) {
    current.push_back(u);
    enumerate_compositions(units - u, slots - 1, current, out);
    current.pop_back();
  }
}

}  // namespace

std::map<std::string, double> tune_fusion_weights(
    const std::map<std::string, std::vector<Proposal>>& per_stream,
    const GroundTruthSet& gt, TuneObjective objective, double step,
    const PipelineConfig& cfg) {
  if (per_stream.empty()) throw ValidationError("no streams to tune");
  if (gt.total_annotations() == 0) {
    throw ValidationError("weight tuning requires non-empty ground truth");
  }
  if (!(step > 0.0) || step > 1.0) {
    throw ValidationError("grid step must lie in (0, 1]");
  }
  std::vector<std::string> names;
  for (const auto& [name, list] : per_stream) names.push_back(name);

  const int units = static_cast<int>(std::lround(1.0 / step));
  std::vector<std::vector<int>> grid;
  std::vector<int> current;
  enumerate_compositions(units, static_cast<int>(names.size()), current, grid);

  std::map<std::string, double> best_weights;
  double best_value = -1.0;
  for (const auto& composition : grid) {
    std::map<std::string, double> weights;
    for (std::size_t i = 0; i < names.size(); ++i) {
      weights[names[i]] =
          static_cast<double>(composition[i]) / static_cast<double>(units);
    }
    const auto fused = fuse_streams(per_stream, weights, cfg);
    const double value = tune_objective_value(fused, gt, objective);
    // Ties resolve to the lexicographically smallest weight vector; the
    // composition enumeration emits vectors in ascending lexicographic
    // order over the name-sorted streams, so strict improvement suffices.
    if (value > best_value) {
      best_value = value;
      best_weights = std::move(weights);
    }
  }
  return best_weights;
}

std::vector<Proposal> detect_by_classification(
    std::span<const Proposal> proposals, const ClassPredictionSet& predictions,
    int k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  std::vector<Proposal> detections;
  for (const Proposal& p : proposals) {
    const auto it = predictions.predictions.find(p.video_id);
    if (it == predictions.predictions.end()) {
      throw ValidationError("no class prediction for video " + p.video_id);
    }
    const std::vector<double>& probs = it->second;
    std::vector<std::size_t> idx(probs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&probs](std::size_t a, std::size_t b) {
      if (probs[a] != probs[b]) return probs[a] > probs[b];
      return a < b;
    });
    const std::size_t take = std::min<std::size_t>(k, idx.size());
    for (std::size_t i = 0; i < take; ++i) {
      Proposal det = p;
      det.label = predictions.classes[idx[i]];
      det.score = p.score * probs[idx[i]];
      detections.push_back(std::move(det));
    }
  }
  return detections;
}

ClassPrediction late_fuse_class_predictions(
    const std::map<std::string, ClassPrediction>& predictions,
    const std::map<std::string, double>& weights) {
  if (predictions.empty()) throw ValidationError("no predictions to fuse");
  check_simplex(weights, "stream");
  for (const auto& [name, pred] : predictions) {
    if (weights.find(name) == weights.end()) {
      throw ValidationError("missing weight for stream " + name);
    }
  }
  const std::size_t dim = predictions.begin()->second.probs.size();
  ClassPrediction fused;
  fused.id = predictions.begin()->second.id;
  fused.probs.assign(dim, 0.0);
  for (const auto& [name, pred] : predictions) {
    validate_class_prediction(pred);
    if (pred.probs.size() != dim) {
      throw ValidationError("class vocabularies differ between streams");
    }
    const double w = weights.at(name);
    for (std::size_t i = 0; i < dim; ++i) fused.probs[i] += w * pred.probs[i];
  }
  return fused;
}

}  // namespace tap::pipeline
