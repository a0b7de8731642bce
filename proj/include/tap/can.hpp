#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tap/core.hpp"
#include "tap/rng.hpp"

namespace tap::can {

/// One temporal anchor: a (center, length) interval in seconds attached to a
/// pyramid cell.
struct Anchor {
  double center = 0.0;  // seconds
  double length = 0.0;  // seconds
  int level = 0;        // index into CanConfig::level_strides
  int cell = 0;
  int scale = 0;        // index into the level's scale list
};

struct CanConfig {
  std::uint32_t input_dim = 16;
  std::uint32_t base_channels = 64;
  std::vector<int> level_strides = {2, 4, 8, 16};  // powers of two, ascending
  // Anchor lengths in time steps, one list per level. Empty selects the
  // default stride * {4, 6, 8}.
  std::vector<std::vector<double>> anchor_scales;
  double pos_tiou = 0.6;
  double neg_tiou = 0.3;
  int sample_ratio = 3;  // negatives sampled per positive
  double lambda_reg = 1.0;
  double lr = 0.01;
  double momentum = 0.9;
  double grad_clip = 5.0;
  int cascade_rounds = 1;
  // Training-loop parameters.
  int train_steps = 500;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double init_scale = 0.1;

  std::vector<double> scales_for_level(std::size_t level) const;
};

void validate_can_config(const CanConfig& cfg);

/// Enumerates anchors level-major, then cell, then scale. A level with
/// stride s contributes floor(T / s) cells with centers (i + 0.5) * s / fps;
/// levels whose cell count is zero contribute nothing. Anchors may extend
/// past the sequence and are clipped only at decode time.
std::vector<Anchor> generate_anchors(std::uint32_t time_steps, double fps,
                                     const CanConfig& cfg);

enum class AnchorLabel { kPos, kNeg, kIgnore };

struct EncodedTarget {
  AnchorLabel label = AnchorLabel::kIgnore;
  int matched_gt = -1;
  double dc = 0.0;  // (gt_center - center) / length
  double dl = 0.0;  // ln(gt_length / length)
};

/// Matches anchors to ground truth: positive above pos_tiou or as a ground
/// truth's best anchor (when that best overlap still clears neg_tiou),
/// negative below neg_tiou, ignored in between.
std::vector<EncodedTarget> encode_targets(
    std::span<const Anchor> anchors, std::span<const TemporalSegment> gt,
    const CanConfig& cfg);

/// Applies (dc, dl) to an anchor and clips to [0, duration]; nullopt when
/// the clipped segment degenerates below 1e-6 s.
std::optional<TemporalSegment> decode_one(const Anchor& anchor, double dc,
                                          double dl, double duration);

std::vector<TemporalSegment> decode_predictions(
    std::span<const Anchor> anchors,
    std::span<const std::array<double, 2>> deltas, double duration);

/// 1D convolution layer parameters, weights laid out [out][in][kernel].
struct Conv1d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  std::vector<double> w;
  std::vector<double> b;

  double& weight(int o, int i, int k) {
    return w[(static_cast<std::size_t>(o) * in_channels + i) * kernel + k];
  }
  double weight(int o, int i, int k) const {
    return w[(static_cast<std::size_t>(o) * in_channels + i) * kernel + k];
  }
};

struct LevelHeads {
  Conv1d cls;  // A outputs per cell
  Conv1d reg;  // 2A outputs per cell
};

/// Base conv (kernel 3, stride 1) feeding a chain of stride-2 convs; heads
/// tap the chain at every configured stride. All arithmetic is double so the
/// analytic gradients can be checked against finite differences.
struct CanNetwork {
  CanConfig cfg;
  Conv1d base;                  // input_dim -> C
  std::vector<Conv1d> chain;    // C -> C, one per halving up to max stride
  std::vector<LevelHeads> heads;

  std::size_t parameter_count() const;
  std::vector<double> flatten_parameters() const;
  void unflatten_parameters(std::span<const double> params);
};

CanNetwork init_network(const CanConfig& cfg, std::uint64_t seed);

struct CanOutputs {
  std::vector<double> cls_logits;                // one per anchor
  std::vector<std::array<double, 2>> deltas;     // (dc, dl) per anchor
};

/// Forward pass; output order matches generate_anchors for the same T.
CanOutputs forward(const CanNetwork& net, const FeatureSequence& features);

struct TrainItem {
  const FeatureSequence* features = nullptr;
  double fps = 1.0;
  std::vector<TemporalSegment> gt;
};

/// The anchors picked for one step: every positive plus sample_ratio
/// negatives per positive (a fixed handful when an item has no positive).
struct SampledAnchors {
  std::vector<std::size_t> cls_indices;
  std::vector<double> cls_labels;
  std::vector<std::size_t> reg_indices;
  std::vector<std::array<double, 2>> reg_targets;
};

std::vector<SampledAnchors> sample_anchors(
    const CanNetwork& net, std::span<const TrainItem> batch, SplitMix64& rng);

struct LossBreakdown {
  double cls = 0.0;  // mean binary cross-entropy over sampled anchors
  double reg = 0.0;  // mean smooth-L1 over positives (before lambda)

  double total(double lambda_reg) const { return cls + lambda_reg * reg; }
};

/// Loss for a fixed anchor sample; used directly by the finite-difference
/// gradient check.
LossBreakdown compute_loss(const CanNetwork& net,
                           std::span<const TrainItem> batch,
                           std::span<const SampledAnchors> samples);

LossBreakdown compute_loss_and_grads(const CanNetwork& net,
                                     std::span<const TrainItem> batch,
                                     std::span<const SampledAnchors> samples,
                                     std::vector<double>& grads);

/// Momentum buffers, lazily sized to the parameter count.
struct SgdState {
  std::vector<double> velocity;
};

/// One SGD-with-momentum step (per-parameter gradient clipping). Throws when
/// the sample contains no labeled anchors.
LossBreakdown train_step(CanNetwork& net, SgdState& state,
                         std::span<const TrainItem> batch, SplitMix64& rng);

/// Runs cfg.train_steps over the corpus in cyclic batches of cfg.batch_size.
/// Returns the loss of the final step.
LossBreakdown train(CanNetwork& net, std::span<const TrainItem> corpus);

/// Crops the features to the proposal span, scores and regresses anchors
/// over the crop (repeating regression for cascade_rounds > 1), applies NMS
/// at tIoU 0.8 and keeps the top 10. A crop too short for the smallest
/// stride returns the input proposal unchanged.
std::vector<Proposal> refine(const CanNetwork& net, const Proposal& coarse,
                             const FeatureSequence& features, double fps);

/// Binary model file: magic "CAN1", u32 LE config-JSON length, config JSON,
/// then parameters as binary64 LE in flatten order.
void save_network(const CanNetwork& net, const std::filesystem::path& path);
CanNetwork load_network(const std::filesystem::path& path);

}  // namespace tap::can
