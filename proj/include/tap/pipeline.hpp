#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tap/can.hpp"
#include "tap/core.hpp"
#include "tap/cpn.hpp"
#include "tap/prn.hpp"

namespace tap::pipeline {

struct PipelineConfig {
  double rho_split = 0.15;          // fraction of duration that makes a
                                    // coarse proposal "long"
  double nms_tiou = 0.8;
  int k_final = 100;                // proposals kept per video
  std::map<std::string, double> stream_weights;
  double duplicate_merge_tiou = 0.9;
  int classes_per_proposal = 2;
};

void validate_pipeline_config(const PipelineConfig& cfg);

/// Greedy non-maximum suppression by descending score; a candidate within
/// tiou_threshold of a kept proposal is dropped. Proposals from different
/// videos never suppress each other. Idempotent.
std::vector<Proposal> nms(std::vector<Proposal> proposals,
                          double tiou_threshold);

/// Everything the per-video stage pipeline needs besides the data.
struct StageModels {
  cpn::TagConfig tag;
  std::array<double, 3> channel_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  cpn::FusionMode fusion_mode = cpn::FusionMode::kWeightedMean;
  const can::CanNetwork* can_net = nullptr;
  const prn::PrnModel* prn_model = nullptr;
  double prn_blend = 0.0;
};

/// Per-stage proposal lists for one video, each already NMS'd and truncated
/// to k_final. `prn` is the pipeline's final output.
struct StageOutputs {
  std::vector<Proposal> cpn;
  std::vector<Proposal> can;
  std::vector<Proposal> prn;
};

/// Coarse grouping, long/short routing through anchor refinement, context
/// reranking. Coarse proposals longer than rho_split * duration go through
/// can::refine; the rest pass straight to the reranker.
StageOutputs run_stage_pipeline(const std::string& video_id,
                                const ActionnessCurveSet& curves,
                                const FeatureSequence& features,
                                const StageModels& models,
                                const PipelineConfig& cfg);

/// Weighted cross-stream score fusion. Proposals from different streams
/// within duplicate_merge_tiou are treated as one, keeping the segment from
/// the highest-weighted contributing stream; a stream that lacks a proposal
/// contributes zero weight. Zero-weight streams are ignored entirely.
/// Result is NMS'd and truncated to k_final per video.
std::vector<Proposal> fuse_streams(
    const std::map<std::string, std::vector<Proposal>>& per_stream,
    const std::map<std::string, double>& weights, const PipelineConfig& cfg);

enum class TuneObjective { kAuc, kAvgMap, kTop1 };

/// Exhaustive simplex grid search (given step) maximizing the objective of
/// the fused proposals against the ground truth; ties resolve to the
/// lexicographically smallest weight vector (streams in name order).
std::map<std::string, double> tune_fusion_weights(
    const std::map<std::string, std::vector<Proposal>>& per_stream,
    const GroundTruthSet& gt, TuneObjective objective, double step,
    const PipelineConfig& cfg);

/// Emits each proposal's top-k classes as detections scored
/// proposal.score * class probability. Predictions are looked up by
/// video id; a proposal without one is an error.
std::vector<Proposal> detect_by_classification(
    std::span<const Proposal> proposals, const ClassPredictionSet& predictions,
    int k);

/// Linear late fusion of per-stream class probabilities.
ClassPrediction late_fuse_class_predictions(
    const std::map<std::string, ClassPrediction>& predictions,
    const std::map<std::string, double>& weights);

}  // namespace tap::pipeline
