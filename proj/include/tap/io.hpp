#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tap/core.hpp"

namespace tap {

// File formats
//
//   Ground truth JSON
//     {"database": {"<video_id>": {"duration": <sec>,
//                   "annotations": [{"segment": [s,e], "label": "<str>"}]}}}
//   Proposal / detection JSON
//     {"results": {"<video_id>": [{"segment": [s,e], "score": <r>,
//                   "label": "<str, optional>", "stage": "<str, optional>"}]}}
//   FSEQ binary
//     magic "FSEQ", u32 LE T, u32 LE D, then T*D IEEE-754 binary32 LE,
//     row-major by time step.
//   Actionness curves JSON
//     {"video_id": ..., "fps": ..., "point": [...], "pair": [...],
//      "recurrent": [...]}
//   Class scores JSON
//     {"classes": [...], "predictions": {"<id>": [p, ...]}}
//
// Parsers validate every declared invariant and reject unknown keys; writers
// emit keys in lexicographic order so identical values produce identical
// bytes.

GroundTruthSet parse_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const GroundTruthSet& gt,
                        const std::filesystem::path& path);

FeatureSequence read_feature_matrix(const std::filesystem::path& path);
void write_feature_matrix(const FeatureSequence& features,
                          const std::filesystem::path& path);

std::vector<Proposal> read_proposals(const std::filesystem::path& path);
void write_proposals(const std::vector<Proposal>& proposals,
                     const std::filesystem::path& path);

ActionnessCurveSet read_actionness_curves(const std::filesystem::path& path);
void write_actionness_curves(const ActionnessCurveSet& curves,
                             const std::filesystem::path& path);

ClassPredictionSet read_class_predictions(const std::filesystem::path& path);
void write_class_predictions(const ClassPredictionSet& preds,
                             const std::filesystem::path& path);

}  // namespace tap
