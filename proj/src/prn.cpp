#include "tap/prn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "tap/quantize.hpp"
#include "tap/rng.hpp"

namespace tap::prn {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::array<TemporalSegment, 3> expand_context(const TemporalSegment& p,
                                              double duration, double fps) {
  validate_segment(p);
  if (!(duration > 0.0) || p.end > duration) {
    throw ValidationError("proposal must lie within the video duration");
  }
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
  const double d = p.length();
  const double stub = std::min(1.0 / fps, duration);

  TemporalSegment start_part{std::max(0.0, p.start - d / 2.0), p.start};
  if (!(start_part.start < start_part.end)) {
    start_part = {0.0, stub};
  }
  TemporalSegment end_part{p.end, std::min(duration, p.end + d / 2.0)};
  if (!(end_part.start < end_part.end)) {
    end_part = {duration - stub, duration};
  }
  return {start_part, p, end_part};
}

std::vector<double> proposal_representation(
    const std::array<TemporalSegment, 3>& parts,
    const FeatureSequence& features, double fps) {
  validate_features(features);
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
  const std::int64_t total = features.time_steps;

  std::vector<double> repr;
  repr.reserve(3 * static_cast<std::size_t>(features.dim));
  for (const TemporalSegment& part : parts) {
    std::int64_t lo = static_cast<std::int64_t>(std::floor(part.start * fps));
    std::int64_t hi = static_cast<std::int64_t>(std::ceil(part.end * fps));
    lo = std::clamp<std::int64_t>(lo, 0, total - 1);
    hi = std::clamp<std::int64_t>(hi, lo + 1, total);
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(hi - lo));
    for (std::int64_t t = lo; t < hi; ++t) {
      const auto row = features.row(static_cast<std::uint32_t>(t));
      rows.emplace_back(row.begin(), row.end());
    }
    const std::vector<double> pooled = quantize::average_pool(rows);
    repr.insert(repr.end(), pooled.begin(), pooled.end());
  }
  return repr;
}

PrnModel train_prn(std::span<const TrainExample> corpus, const PrnConfig& cfg) {
  std::vector<const TrainExample*> selected;
  std::size_t n_pos = 0, n_neg = 0;
  for (const TrainExample& ex : corpus) {
    if (ex.tiou >= cfg.pos_tiou) {
      selected.push_back(&ex);
      ++n_pos;
    } else if (ex.tiou < cfg.neg_tiou) {
      selected.push_back(&ex);
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError(
        "reranker training needs at least one positive and one negative");
  }
  const std::size_t dim = selected.front()->representation.size();
  for (const TrainExample* ex : selected) {
    if (ex->representation.size() != dim) {
      throw ValidationError("representations differ in dimension");
    }
  }

  PrnModel model;
  model.weights.assign(dim, 0.0);
  model.bias = 0.0;

  SplitMix64 rng(cfg.seed);
  std::vector<std::size_t> order(selected.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.next_below(i)]);
    }
    for (std::size_t idx : order) {
      const TrainExample& ex = *selected[idx];
      const double y = ex.tiou >= cfg.pos_tiou ? 1.0 : 0.0;
      const double p = score_representation(model, ex.representation);
      const double g = p - y;
      for (std::size_t j = 0; j < dim; ++j) {
        model.weights[j] -= cfg.lr * g * ex.representation[j];
      }
      model.bias -= cfg.lr * g;
    }
  }
  model.trained = true;
  return model;
}

double score_representation(const PrnModel& model,
                            std::span<const double> representation) {
  if (representation.size() != model.weights.size()) {
    throw ValidationError("representation dimension does not match the model");
  }
  double z = model.bias;
  for (std::size_t j = 0; j < representation.size(); ++j) {
    z += model.weights[j] * representation[j];
  }
  return sigmoid(z);
}

std::vector<Proposal> rerank(const PrnModel& model,
                             std::span<const Proposal> proposals,
                             const FeatureSequence& features, double fps,
                             std::size_t k, double blend) {
  if (!model.trained) {
    throw ValidationError("reranking requires a trained model");
  }
  const double duration = static_cast<double>(features.time_steps) / fps;

  std::vector<Proposal> out;
  out.reserve(proposals.size());
  for (const Proposal& p : proposals) {
    const auto parts = expand_context(p.segment, duration, fps);
    const auto repr = proposal_representation(parts, features, fps);
    Proposal scored = p;
    scored.score = (1.0 - blend) * score_representation(model, repr) +
                   blend * p.score;
    scored.stage = Stage::PRN;
    out.push_back(std::move(scored));
  }
  std::sort(out.begin(), out.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.segment.start != b.segment.start) {
      return a.segment.start < b.segment.start;
    }
    return a.segment.length() < b.segment.length();
  });
  if (out.size() > k) out.resize(k);
  return out;
}

PrnModel read_prn_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("weights") || !doc.contains("bias")) {
    throw SchemaError(path.string() + ": model needs \"weights\" and \"bias\"");
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "weights" && key != "bias") {
      throw SchemaError(path.string() + ": unexpected key \"" + key + "\"");
    }
  }
  PrnModel model;
  for (const auto& v : doc["weights"]) {
    if (!v.is_number()) {
      throw SchemaError(path.string() + ": weights must be numeric");
    }
    model.weights.push_back(v.get<double>());
  }
  if (!doc["bias"].is_number()) {
    throw SchemaError(path.string() + ": bias must be numeric");
  }
  model.bias = doc["bias"].get<double>();
  for (double w : model.weights) {
    if (!std::isfinite(w)) {
      throw ValidationError(path.string() + ": weights must be finite");
    }
  }
  if (!std::isfinite(model.bias)) {
    throw ValidationError(path.string() + ": bias must be finite");
  }
  if (model.weights.empty()) {
    throw ValidationError(path.string() + ": weights must be non-empty");
  }
  model.trained = true;
  return model;
}

void write_prn_model(const PrnModel& model, const std::filesystem::path& path) {
  const nlohmann::json doc = {{"weights", model.weights},
                              {"bias", model.bias}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump() << "\n";
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace tap::prn
