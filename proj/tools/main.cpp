// tapkit: temporal action proposal toolkit CLI.
//
// One binary, one subcommand per stage: synthetic corpus generation, coarse
// grouping, anchor-network training/inference, reranking, the end-to-end
// pipeline, stream fusion, detection by classification, metric evaluation,
// compact bilinear pooling, tubelet linking and caption retrieval.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <thread>

#include "tap/can.hpp"
#include "tap/config_json.hpp"
#include "tap/core.hpp"
#include "tap/cpn.hpp"
#include "tap/eval.hpp"
#include "tap/io.hpp"
#include "tap/pipeline.hpp"
#include "tap/prn.hpp"
#include "tap/quantize.hpp"
#include "tap/retrieval.hpp"
#include "tap/synth.hpp"
#include "tap/tubelet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

tap::CliConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return {};
  return tap::load_cli_config(path);
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw tap::IoError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw tap::SchemaError(path.string() + ": " + e.what());
  }
  return doc;
}

void save_json_file(const json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tap::IoError("cannot open " + path.string() + " for writing");
  out << doc.dump() << "\n";
  if (!out) throw tap::IoError("short write to " + path.string());
}

std::map<std::string, double> parse_weight_list(const std::string& text) {
  std::map<std::string, double> weights;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string item = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw tap::ValidationError("weights must be name=value pairs: " + item);
    }
    weights[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return weights;
}

std::vector<std::string> sorted_video_ids(const tap::GroundTruthSet& gt) {
  std::vector<std::string> ids;
  for (const auto& [id, video] : gt.videos) ids.push_back(id);
  return ids;
}

// Corpus directory layout (as written by `synth`):
//   ground_truth.json
//   streams/<stream>/curves/<video>.json
//   streams/<stream>/features/<video>.fseq
//   streams/<stream>/class_scores.json
//   captions.json
struct StreamData {
  std::map<std::string, tap::ActionnessCurveSet> curves;
  std::map<std::string, tap::FeatureSequence> features;
};

StreamData load_stream(const fs::path& corpus_dir, const std::string& stream,
                       const std::vector<std::string>& ids) {
  StreamData data;
  const fs::path stream_dir = corpus_dir / "streams" / stream;
  for (const std::string& id : ids) {
    const fs::path curve_path = stream_dir / "curves" / (id + ".json");
    const fs::path feat_path = stream_dir / "features" / (id + ".fseq");
    if (!fs::exists(curve_path) || !fs::exists(feat_path)) {
      throw tap::ValidationError("corpus is missing data for video " + id +
                                 " (stream " + stream + ")");
    }
    data.curves.emplace(id, tap::read_actionness_curves(curve_path));
    data.features.emplace(id, tap::read_feature_matrix(feat_path));
  }
  return data;
}

std::vector<std::string> list_streams(const fs::path& corpus_dir) {
  std::vector<std::string> streams;
  const fs::path root = corpus_dir / "streams";
  if (!fs::is_directory(root)) {
    throw tap::ValidationError("corpus has no streams directory: " +
                               root.string());
  }
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) streams.push_back(entry.path().filename());
  }
  std::sort(streams.begin(), streams.end());
  if (streams.empty()) {
    throw tap::ValidationError("corpus holds no streams: " + root.string());
  }
  return streams;
}

tap::can::CanNetwork train_can_on_stream(const tap::can::CanConfig& cfg,
                                         const tap::GroundTruthSet& gt,
                                         const StreamData& data) {
  std::vector<tap::can::TrainItem> items;
  for (const auto& [id, video] : gt.videos) {
    tap::can::TrainItem item;
    item.features = &data.features.at(id);
    item.fps = data.curves.at(id).fps;
    for (const auto& ann : video.annotations) item.gt.push_back(ann.segment);
    items.push_back(std::move(item));
  }
  tap::can::CanNetwork net = tap::can::init_network(cfg, cfg.seed);
  tap::can::train(net, items);
  return net;
}

// Runs the per-video stage pipeline over every video, optionally in
// parallel; outputs are indexed by video so the merge order is fixed.
std::vector<tap::pipeline::StageOutputs> run_videos(
    const std::vector<std::string>& ids, const StreamData& data,
    const tap::pipeline::StageModels& models,
    const tap::pipeline::PipelineConfig& cfg, int threads) {
  std::vector<tap::pipeline::StageOutputs> outputs(ids.size());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        outputs[i] = tap::pipeline::run_stage_pipeline(
            ids[i], data.curves.at(ids[i]), data.features.at(ids[i]), models,
            cfg);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int n_threads = std::max(1, threads);
  if (n_threads == 1) {
    worker(0, ids.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (ids.size() + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const std::size_t begin = std::min(ids.size(), t * chunk);
      const std::size_t end = std::min(ids.size(), begin + chunk);
      if (begin < end) pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return outputs;
}

tap::prn::PrnModel train_prn_on_outputs(
    const std::vector<std::string>& ids,
    const std::vector<tap::pipeline::StageOutputs>& stage_outputs,
    const StreamData& data, const tap::GroundTruthSet& gt,
    const tap::prn::PrnConfig& cfg) {
  std::vector<tap::prn::TrainExample> corpus;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& features = data.features.at(ids[i]);
    const double fps = data.curves.at(ids[i]).fps;
    const double duration = features.time_steps / fps;
    const auto& annotations = gt.videos.at(ids[i]).annotations;
    for (const tap::Proposal& p : stage_outputs[i].can) {
      tap::prn::TrainExample ex;
      const auto parts = tap::prn::expand_context(p.segment, duration, fps);
      ex.representation = tap::prn::proposal_representation(parts, features, fps);
      for (const auto& ann : annotations) {
        ex.tiou = std::max(ex.tiou, tap::eval::tiou(p.segment, ann.segment));
      }
      corpus.push_back(std::move(ex));
    }
  }
  return tap::prn::train_prn(corpus, cfg);
}

// Tubelet JSON: [{"video_id": ..., "frames": [[{"box": [x1,y1,x2,y2],
// "actionness": a, "label": ..., "score": ...}, ...], ...]}] where label and
// score appear on detection files and actionness on linking inputs.
struct VideoFrames {
  std::string video_id;
  std::vector<std::vector<tap::tubelet::BoxObservation>> observations;
  std::vector<std::vector<tap::tubelet::LabeledBox>> labeled;
};

std::vector<VideoFrames> load_frame_file(const fs::path& path) {
  const json doc = load_json_file(path);
  if (!doc.is_array()) {
    throw tap::SchemaError(path.string() + ": expected an array of videos");
  }
  std::vector<VideoFrames> videos;
  for (const json& entry : doc) {
    if (!entry.contains("video_id") || !entry.contains("frames")) {
      throw tap::SchemaError(path.string() +
                             ": video entries need video_id and frames");
    }
    VideoFrames video;
    video.video_id = entry["video_id"].get<std::string>();
    for (const json& frame : entry["frames"]) {
      std::vector<tap::tubelet::BoxObservation> obs;
      std::vector<tap::tubelet::LabeledBox> labeled;
      for (const json& b : frame) {
        const auto& arr = b.at("box");
        if (!arr.is_array() || arr.size() != 4) {
          throw tap::SchemaError(path.string() +
                                 ": box must be [x1, y1, x2, y2]");
        }
        tap::tubelet::Box box{arr[0].get<double>(), arr[1].get<double>(),
                              arr[2].get<double>(), arr[3].get<double>()};
        tap::tubelet::validate_box(box);
        tap::tubelet::BoxObservation o;
        o.box = box;
        o.actionness = b.value("actionness", 0.0);
        obs.push_back(o);
        tap::tubelet::LabeledBox l;
        l.box = box;
        l.label = b.value("label", std::string{});
        l.score = b.value("score", 0.0);
        labeled.push_back(std::move(l));
      }
      video.observations.push_back(std::move(obs));
      video.labeled.push_back(std::move(labeled));
    }
    videos.push_back(std::move(video));
  }
  std::sort(videos.begin(), videos.end(),
            [](const VideoFrames& a, const VideoFrames& b) {
              return a.video_id < b.video_id;
            });
  return videos;
}

void write_summary_csv(const fs::path& path,
                       const std::vector<std::array<std::string, 3>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tap::IoError("cannot open " + path.string() + " for writing");
  out << "stage,stream,auc\n";
  for (const auto& row : rows) {
    out << row[0] << "," << row[1] << "," << row[2] << "\n";
  }
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  const tap::CliConfig cfg = load_config_or_default(config_path);
  const auto corpus = tap::synth::generate_corpus(cfg.synth);
  tap::synth::write_corpus(corpus, out_dir);
  std::cout << "videos " << corpus.gt.videos.size() << "\n";
  return 0;
}

int cmd_tag(const std::string& curves_path, const std::string& config_path,
            const std::string& out_path) {
  const tap::CliConfig cfg = load_config_or_default(config_path);
  const auto curves = tap::read_actionness_curves(curves_path);
  const auto fused =
      cfg.cpn_fusion.mode == tap::cpn::FusionMode::kWeightedMean
          ? tap::cpn::fuse_actionness(curves, cfg.cpn_fusion.channel_weights)
          : tap::cpn::fuse_actionness_geometric(curves,
                                                cfg.cpn_fusion.channel_weights);
  const auto proposals =
      tap::cpn::watershed_tag(fused, curves.fps, cfg.tag, curves.video_id);
  tap::write_proposals(proposals, out_path);
  std::cout << "proposals " << proposals.size() << "\n";
  return 0;
}

int cmd_can_train(const std::string& corpus_dir, const std::string& stream,
                  const std::string& config_path, const std::string& out_path) {
  const tap::CliConfig cfg = load_config_or_default(config_path);
  const auto gt = tap::parse_ground_truth(fs::path(corpus_dir) /
                                          "ground_truth.json");
  const auto ids = sorted_video_ids(gt);
  const StreamData data = load_stream(corpus_dir, stream, ids);
  const auto net = train_can_on_stream(cfg.can, gt, data);
  tap::can::save_network(net, out_path);
  std::cout << "parameters " << net.parameter_count() << "\n";
  return 0;
}

int cmd_can_infer(const std::string& model_path, const std::string& proposals_path,
                  const std::string& features_dir, double fps,
                  const std::string& out_path) {
  const auto net = tap::can::load_network(model_path);
  const auto proposals = tap::read_proposals(proposals_path);
  std::map<std::string, tap::FeatureSequence> features;
  std::vector<tap::Proposal> refined;
  for (const tap::Proposal& p : proposals) {
    auto it = features.find(p.video_id);
    if (it == features.end()) {
      const fs::path path = fs::path(features_dir) / (p.video_id + ".fseq");
      if (!fs::exists(path)) {
        throw tap::ValidationError("no features for video " + p.video_id);
      }
      it = features.emplace(p.video_id, tap::read_feature_matrix(path)).first;
    }
    for (tap::Proposal& r : tap::can::refine(net, p, it->second, fps)) {
      refined.push_back(std::move(r));
    }
  }
  tap::write_proposals(refined, out_path);
  std::cout << "proposals " << refined.size() << "\n";
  return 0;
}

int cmd_rerank(const std::string& model_path, const std::string& proposals_path,
               const std::string& features_dir, double fps, int topk,
               const std::string& out_path) {
  const auto model = tap::prn::read_prn_model(model_path);
  const auto proposals = tap::read_proposals(proposals_path);
  std::map<std::string, std::vector<tap::Proposal>> by_video;
  for (const tap::Proposal& p : proposals) by_video[p.video_id].push_back(p);
  std::vector<tap::Proposal> out;
  for (const auto& [id, list] : by_video) {
    const fs::path path = fs::path(features_dir) / (id + ".fseq");
    if (!fs::exists(path)) {
      throw tap::ValidationError("no features for video " + id);
    }
    const auto features = tap::read_feature_matrix(path);
    for (tap::Proposal& p :
         tap::prn::rerank(model, list, features, fps, topk)) {
      out.push_back(std::move(p));
    }
  }
  tap::write_proposals(out, out_path);
  std::cout << "proposals " << out.size() << "\n";
  return 0;
}

int cmd_pipeline(const std::string& config_path, const std::string& corpus_dir,
                 const std::string& out_dir, int threads) {
  const tap::CliConfig cfg = load_config_or_default(config_path);
  const auto gt =
      tap::parse_ground_truth(fs::path(corpus_dir) / "ground_truth.json");
  const auto ids = sorted_video_ids(gt);
  const auto streams = list_streams(corpus_dir);
  fs::create_directories(out_dir);

  std::vector<std::array<std::string, 3>> csv_rows;
  std::map<std::string, std::vector<tap::Proposal>> final_per_stream;
  for (const std::string& stream : streams) {
    const StreamData data = load_stream(corpus_dir, stream, ids);
    const fs::path stream_out = fs::path(out_dir) / stream;
    fs::create_directories(stream_out);

    const auto net = train_can_on_stream(cfg.can, gt, data);
    tap::can::save_network(net, stream_out / "model.can");

    tap::pipeline::StageModels models;
    models.tag = cfg.tag;
    models.channel_weights = cfg.cpn_fusion.channel_weights;
    models.fusion_mode = cfg.cpn_fusion.mode;
    models.can_net = &net;
    models.prn_blend = cfg.prn.blend;

    // First pass without the reranker supplies its training corpus.
    const auto stage1 = run_videos(ids, data, models, cfg.pipeline, threads);
    const auto prn_model =
        train_prn_on_outputs(ids, stage1, data, gt, cfg.prn);
    tap::prn::write_prn_model(prn_model, stream_out / "prn.json");
    models.prn_model = &prn_model;
    const auto stage2 = run_videos(ids, data, models, cfg.pipeline, threads);

    std::vector<tap::Proposal> all_cpn, all_can, all_prn;
    for (const auto& out : stage2) {
      all_cpn.insert(all_cpn.end(), out.cpn.begin(), out.cpn.end());
      all_can.insert(all_can.end(), out.can.begin(), out.can.end());
      all_prn.insert(all_prn.end(), out.prn.begin(), out.prn.end());
    }
    tap::write_proposals(all_cpn, stream_out / "proposals_cpn.json");
    tap::write_proposals(all_can, stream_out / "proposals_can.json");
    tap::write_proposals(all_prn, stream_out / "proposals_prn.json");

    csv_rows.push_back(
        {"cpn", stream, fmt6(tap::eval::evaluate_proposals(all_cpn, gt).auc)});
    csv_rows.push_back(
        {"can", stream, fmt6(tap::eval::evaluate_proposals(all_can, gt).auc)});
    csv_rows.push_back(
        {"prn", stream, fmt6(tap::eval::evaluate_proposals(all_prn, gt).auc)});
    final_per_stream.emplace(stream, std::move(all_prn));
  }

  if (streams.size() > 1) {
    const auto weights = tap::pipeline::tune_fusion_weights(
        final_per_stream, gt, tap::pipeline::TuneObjective::kAuc, 0.05,
        cfg.pipeline);
    json weights_json = json::object();
    for (const auto& [name, w] : weights) weights_json[name] = w;
    save_json_file(weights_json, fs::path(out_dir) / "weights.json");
    const auto fused =
        tap::pipeline::fuse_streams(final_per_stream, weights, cfg.pipeline);
    tap::write_proposals(fused, fs::path(out_dir) / "fused.json");
    csv_rows.push_back(
        {"fused", "all", fmt6(tap::eval::evaluate_proposals(fused, gt).auc)});
  }
  write_summary_csv(fs::path(out_dir) / "summary.csv", csv_rows);
  for (const auto& row : csv_rows) {
    std::cout << row[0] << " " << row[1] << " " << row[2] << "\n";
  }
  return 0;
}

int cmd_fuse(const std::vector<std::string>& inputs, const std::string& weights_arg,
             bool tune, const std::string& gt_path, const std::string& objective,
             double step, const std::string& config_path,
             const std::string& out_path) {
  const tap::CliConfig cfg = load_config_or_default(config_path);
  std::map<std::string, std::vector<tap::Proposal>> per_stream;
  for (const std::string& item : inputs) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw tap::ValidationError("--in expects name=path: " + item);
    }
    per_stream.emplace(item.substr(0, eq),
                       tap::read_proposals(item.substr(eq + 1)));
  }

  std::map<std::string, double> weights;
  if (tune) {
    if (gt_path.empty()) {
      throw tap::ValidationError("--tune requires --ground-truth");
    }
    tap::pipeline::TuneObjective obj;
    if (objective == "AUC") {
      obj = tap::pipeline::TuneObjective::kAuc;
    } else if (objective == "avg_mAP") {
      obj = tap::pipeline::TuneObjective::kAvgMap;
    } else if (objective == "top1") {
      obj = tap::pipeline::TuneObjective::kTop1;
    } else {
      throw tap::ValidationError("unknown objective: " + objective);
    }
    weights = tap::pipeline::tune_fusion_weights(
        per_stream, tap::parse_ground_truth(gt_path), obj, step, cfg.pipeline);
    for (const auto& [name, w] : weights) {
      std::cout << "weight " << name << " " << fmt6(w) << "\n";
    }
  } else if (!weights_arg.empty()) {
    weights = parse_weight_list(weights_arg);
  } else if (!cfg.pipeline.stream_weights.empty()) {
    weights = cfg.pipeline.stream_weights;
  } else {
    throw tap::ValidationError("no stream weights given (flag, config or --tune)");
  }

  const auto fused = tap::pipeline::fuse_streams(per_stream, weights, cfg.pipeline);
  tap::write_proposals(fused, out_path);
  std::cout << "proposals " << fused.size() << "\n";
  return 0;
}

int cmd_detect(const std::string& proposals_path,
               const std::vector<std::string>& score_files,
               const std::string& weights_arg, int topk_classes,
               const std::string& gt_path, const std::string& config_path,
               const std::string& out_path) {
  const tap::CliConfig cfg = load_config_or_default(config_path);
  const auto proposals = tap::read_proposals(proposals_path);

  std::map<std::string, tap::ClassPredictionSet> streams;
  for (const std::string& item : score_files) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      streams.emplace("scores", tap::read_class_predictions(item));
    } else {
      streams.emplace(item.substr(0, eq),
                      tap::read_class_predictions(item.substr(eq + 1)));
    }
  }
  if (streams.empty()) {
    throw tap::ValidationError("at least one --class-scores file is required");
  }

  tap::ClassPredictionSet fused_set;
  if (streams.size() == 1) {
    fused_set = streams.begin()->second;
  } else {
    std::map<std::string, double> weights =
        weights_arg.empty() ? cfg.pipeline.stream_weights
                            : parse_weight_list(weights_arg);
    if (weights.empty()) {
      throw tap::ValidationError(
          "late fusion of several score files needs --class-weights");
    }
    fused_set.classes = streams.begin()->second.classes;
    for (const auto& [name, set] : streams) {
      if (set.classes != fused_set.classes) {
        throw tap::ValidationError("class vocabularies differ between streams");
      }
    }
    for (const auto& [id, probs] : streams.begin()->second.predictions) {
      std::map<std::string, tap::ClassPrediction> preds;
      for (const auto& [name, set] : streams) {
        const auto it = set.predictions.find(id);
        if (it == set.predictions.end()) {
          throw tap::ValidationError("stream " + name +
                                     " lacks a prediction for " + id);
        }
        preds.emplace(name, tap::ClassPrediction{id, it->second});
      }
      fused_set.predictions.emplace(
          id, tap::pipeline::late_fuse_class_predictions(preds, weights).probs);
    }
  }

  const int k = topk_classes > 0 ? topk_classes : cfg.pipeline.classes_per_proposal;
  const auto detections =
      tap::pipeline::detect_by_classification(proposals, fused_set, k);
  tap::write_proposals(detections, out_path);
  std::cout << "detections " << detections.size() << "\n";

  if (!gt_path.empty()) {
    // Trivial argmax accuracy: fused prediction vs the video's most common
    // annotation label.
    const auto gt = tap::parse_ground_truth(gt_path);
    std::size_t correct = 0, counted = 0;
    for (const auto& [id, video] : gt.videos) {
      if (video.annotations.empty()) continue;
      const auto it = fused_set.predictions.find(id);
      if (it == fused_set.predictions.end()) continue;
      std::map<std::string, int> votes;
      for (const auto& ann : video.annotations) ++votes[ann.label];
      const auto majority =
          std::max_element(votes.begin(), votes.end(),
                           [](const auto& a, const auto& b) {
                             return a.second < b.second;
                           });
      const auto& probs = it->second;
      const std::size_t argmax =
          std::max_element(probs.begin(), probs.end()) - probs.begin();
      ++counted;
      if (fused_set.classes[argmax] == majority->first) ++correct;
    }
    if (counted > 0) {
      std::cout << "top1_acc "
                << fmt6(static_cast<double>(correct) /
                        static_cast<double>(counted))
                << "\n";
    }
  }
  return 0;
}

int cmd_eval_proposals(const std::string& proposals_path,
                       const std::string& gt_path, const std::string& csv_path) {
  const auto proposals = tap::read_proposals(proposals_path);
  const auto gt = tap::parse_ground_truth(gt_path);
  const auto curve = tap::eval::evaluate_proposals(proposals, gt);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw tap::IoError("cannot open " + csv_path + " for writing");
    out << "an,ar\n";
    for (std::size_t i = 0; i < curve.ar_values.size(); ++i) {
      out << curve.an_grid[i] << "," << fmt6(curve.ar_values[i]) << "\n";
    }
  }
  std::cout << "AUC " << fmt6(curve.auc) << "\n";
  return 0;
}

int cmd_eval_detections(const std::string& detections_path,
                        const std::string& gt_path) {
  const auto detections = tap::read_proposals(detections_path);
  const auto gt = tap::parse_ground_truth(gt_path);
  const auto result = tap::eval::evaluate_detections(detections, gt);
  for (std::size_t i = 0; i < result.thresholds.size(); ++i) {
    char label[32];
    std::snprintf(label, sizeof(label), "mAP@%.2f", result.thresholds[i]);
    std::cout << label << " " << fmt6(result.map_per_threshold[i]) << "\n";
  }
  std::cout << "avg_mAP " << fmt6(result.average_map) << "\n";
  return 0;
}

int cmd_cbp(const std::string& input_path, const std::string& out_path,
            unsigned sketch_dim, std::uint64_t seed, bool no_normalize,
            const std::string& method_arg) {
  const auto matrix = tap::read_feature_matrix(input_path);
  tap::quantize::FeatureMap map;
  map.width = matrix.time_steps;  // locations = rows of the matrix
  map.height = 1;
  map.channels = matrix.dim;
  map.values.assign(matrix.values.begin(), matrix.values.end());

  tap::quantize::CbpOptions options;
  options.normalize = !no_normalize;
  if (method_arg == "direct") {
    options.method = tap::quantize::ConvMethod::kDirect;
  } else if (method_arg == "fft") {
    options.method = tap::quantize::ConvMethod::kFft;
  } else if (method_arg == "auto") {
    options.method = tap::quantize::ConvMethod::kAuto;
  } else {
    throw tap::ValidationError("method must be auto, direct or fft");
  }
  const auto params =
      tap::quantize::make_sketch_params(seed, matrix.dim, sketch_dim);
  const auto pooled = tap::quantize::compact_bilinear_pool(map, params, options);

  tap::FeatureSequence out;
  out.time_steps = 1;
  out.dim = sketch_dim;
  out.values.assign(pooled.begin(), pooled.end());
  tap::write_feature_matrix(out, out_path);
  std::cout << "dim " << sketch_dim << "\n";
  return 0;
}

int cmd_link_tubelets(const std::string& detections_path,
                      const std::string& config_path, bool trim,
                      const std::string& out_path) {
  const tap::CliConfig cfg = load_config_or_default(config_path);
  const auto videos = load_frame_file(detections_path);
  json out = json::array();
  std::size_t count = 0;
  for (const VideoFrames& video : videos) {
    const auto tubelets =
        tap::tubelet::link_tubelets(video.video_id, video.observations, cfg.link);
    json tubes = json::array();
    for (const auto& tube : tubelets) {
      const tap::tubelet::Tubelet* final_tube = &tube;
      std::optional<tap::tubelet::Tubelet> trimmed;
      if (trim) {
        trimmed = tap::tubelet::temporal_trim(tube, cfg.link);
        if (!trimmed) continue;
        final_tube = &*trimmed;
      }
      json boxes = json::array();
      for (const auto& obs : final_tube->boxes) {
        boxes.push_back({{"box", {obs.box.x1, obs.box.y1, obs.box.x2, obs.box.y2}},
                         {"actionness", obs.actionness}});
      }
      tubes.push_back({{"start_frame", final_tube->start_frame},
                       {"score", final_tube->score},
                       {"boxes", boxes}});
      ++count;
    }
    out.push_back({{"video_id", video.video_id}, {"tubelets", tubes}});
  }
  save_json_file(out, out_path);
  std::cout << "tubelets " << count << "\n";
  return 0;
}

int cmd_eval_frame_map(const std::string& detections_path,
                       const std::string& gt_path, double iou) {
  tap::tubelet::FrameBoxes detections, gt;
  for (const VideoFrames& video : load_frame_file(detections_path)) {
    detections.emplace(video.video_id, video.labeled);
  }
  for (const VideoFrames& video : load_frame_file(gt_path)) {
    gt.emplace(video.video_id, video.labeled);
  }
  std::cout << "frame_mAP "
            << fmt6(tap::tubelet::evaluate_frame_map(detections, gt, iou))
            << "\n";
  return 0;
}

int cmd_retrieve_captions(const std::string& corpus_path,
                          const std::string& query_path, int k,
                          const std::string& out_path) {
  const auto corpus = tap::retrieval::read_caption_corpus(corpus_path);
  const json query_doc = load_json_file(query_path);
  if (!query_doc.contains("embedding") || !query_doc["embedding"].is_array()) {
    throw tap::SchemaError(query_path + ": expected {\"embedding\": [...]}");
  }
  std::vector<double> query;
  for (const json& v : query_doc["embedding"]) query.push_back(v.get<double>());

  const auto neighbors = tap::retrieval::knn_retrieve(query, corpus, k);
  std::vector<std::vector<std::string>> candidates;
  std::vector<const std::string*> raw;
  for (const auto& n : neighbors) {
    for (const std::string& caption : corpus[n.index].captions) {
      candidates.push_back(tap::retrieval::tokenize(caption));
      raw.push_back(&caption);
    }
  }
  const auto consensus = tap::retrieval::consensus_rerank(candidates);
  std::cout << "caption " << *raw[consensus.index] << "\n";
  std::cout << "consensus " << fmt6(consensus.score) << "\n";

  if (!out_path.empty()) {
    json neighbors_json = json::array();
    for (const auto& n : neighbors) {
      neighbors_json.push_back(
          {{"id", corpus[n.index].id}, {"similarity", n.similarity}});
    }
    save_json_file({{"caption", *raw[consensus.index]},
                    {"consensus_score", consensus.score},
                    {"neighbors", neighbors_json}},
                   out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal action proposal toolkit"};
  app.require_subcommand(1);

  std::string config_path, corpus_dir, out_path, out_dir, curves_path;
  std::string model_path, proposals_path, features_dir, gt_path, csv_path;
  std::string detections_path, weights_arg, objective = "AUC", method = "auto";
  std::string stream = "frame", query_path;
  std::vector<std::string> fuse_inputs, score_files;
  double fps = 0.0, step = 0.05, iou = 0.5;
  int threads = 1, topk = 100, topk_classes = 0, k_neighbors = 300;
  unsigned sketch_dim = 4096;
  std::uint64_t seed = 1;
  bool tune = false, no_normalize = false, trim = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--config", config_path, "config JSON")->required();
  synth->add_option("--out-dir", out_dir, "output directory")->required();

  auto* tag = app.add_subcommand("tag", "coarse proposals from actionness");
  tag->add_option("--curves", curves_path, "actionness curves JSON")->required();
  tag->add_option("--config", config_path, "config JSON");
  tag->add_option("--out", out_path, "output proposals JSON")->required();

  auto* can_train = app.add_subcommand("can-train", "train the anchor network");
  can_train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  can_train->add_option("--stream", stream, "stream name (default frame)");
  can_train->add_option("--config", config_path, "config JSON");
  can_train->add_option("--out", out_path, "output model file")->required();

  auto* can_infer = app.add_subcommand("can-infer", "refine long proposals");
  can_infer->add_option("--model", model_path, "model file")->required();
  can_infer->add_option("--proposals", proposals_path, "input proposals JSON")
      ->required();
  can_infer->add_option("--features", features_dir, "directory of .fseq files")
      ->required();
  can_infer->add_option("--fps", fps, "feature sample rate")->required();
  can_infer->add_option("--out", out_path, "output proposals JSON")->required();

  auto* rerank = app.add_subcommand("rerank", "rescore proposals with context");
  rerank->add_option("--model", model_path, "reranker model JSON")->required();
  rerank->add_option("--proposals", proposals_path, "input proposals JSON")
      ->required();
  rerank->add_option("--features", features_dir, "directory of .fseq files")
      ->required();
  rerank->add_option("--fps", fps, "feature sample rate")->required();
  rerank->add_option("--topk", topk, "proposals kept per video");
  rerank->add_option("--out", out_path, "output proposals JSON")->required();

  auto* pipeline = app.add_subcommand("pipeline", "run the full stage pipeline");
  pipeline->add_option("--config", config_path, "config JSON")->required();
  pipeline->add_option("--corpus", corpus_dir, "corpus directory")->required();
  pipeline->add_option("--out-dir", out_dir, "output directory")->required();
  pipeline->add_option("--threads", threads, "worker threads (default 1)");

  auto* fuse = app.add_subcommand("fuse", "fuse per-stream proposals");
  fuse->add_option("--in", fuse_inputs, "name=proposals.json (repeatable)")
      ->required();
  fuse->add_option("--weights", weights_arg, "name=w,name=w");
  fuse->add_flag("--tune", tune, "grid-search the weights");
  fuse->add_option("--ground-truth", gt_path, "ground truth JSON (for --tune)");
  fuse->add_option("--objective", objective, "AUC, avg_mAP or top1");
  fuse->add_option("--step", step, "grid step (default 0.05)");
  fuse->add_option("--config", config_path, "config JSON");
  fuse->add_option("--out", out_path, "output proposals JSON")->required();

  auto* detect = app.add_subcommand("detect", "detections by classification");
  detect->add_option("--proposals", proposals_path, "proposals JSON")->required();
  detect->add_option("--class-scores", score_files,
                     "class score JSON, optionally name=path (repeatable)")
      ->required();
  detect->add_option("--class-weights", weights_arg, "name=w,name=w");
  detect->add_option("--topk-classes", topk_classes, "classes per proposal");
  detect->add_option("--ground-truth", gt_path, "print argmax accuracy");
  detect->add_option("--config", config_path, "config JSON");
  detect->add_option("--out", out_path, "output detections JSON")->required();

  auto* eval_props = app.add_subcommand("eval-proposals", "AR-AN curve and AUC");
  eval_props->add_option("--proposals", proposals_path, "proposals JSON")
      ->required();
  eval_props->add_option("--ground-truth", gt_path, "ground truth JSON")
      ->required();
  eval_props->add_option("--csv", csv_path, "write the AR-AN curve as CSV");

  auto* eval_dets = app.add_subcommand("eval-detections", "detection mAP");
  eval_dets->add_option("--detections", detections_path, "detections JSON")
      ->required();
  eval_dets->add_option("--ground-truth", gt_path, "ground truth JSON")
      ->required();

  auto* cbp = app.add_subcommand("cbp", "compact bilinear pooling of an FSEQ");
  cbp->add_option("--input", proposals_path, "input FSEQ (rows = locations)")
      ->required();
  cbp->add_option("--out", out_path, "output FSEQ (T=1)")->required();
  cbp->add_option("--sketch-dim", sketch_dim, "sketch dimension d");
  cbp->add_option("--seed", seed, "sketch seed");
  cbp->add_flag("--no-normalize", no_normalize, "skip signed sqrt + L2");
  cbp->add_option("--method", method, "auto, direct or fft");

  auto* link = app.add_subcommand("link-tubelets", "link per-frame boxes");
  link->add_option("--detections", detections_path, "per-frame boxes JSON")
      ->required();
  link->add_option("--config", config_path, "config JSON");
  link->add_flag("--trim", trim, "apply temporal trimming");
  link->add_option("--out", out_path, "output tubelets JSON")->required();

  auto* frame_map = app.add_subcommand("eval-frame-map", "frame-level mAP");
  frame_map->add_option("--detections", detections_path, "detections JSON")
      ->required();
  frame_map->add_option("--ground-truth", gt_path, "ground truth JSON")
      ->required();
  frame_map->add_option("--iou", iou, "box IoU threshold (default 0.5)");

  auto* retrieve = app.add_subcommand("retrieve-captions",
                                      "nearest-neighbor caption consensus");
  retrieve->add_option("--corpus", corpus_dir, "caption corpus JSON")->required();
  retrieve->add_option("--query-embedding", query_path, "query JSON")->required();
  retrieve->add_option("-k", k_neighbors, "neighbors to retrieve (default 300)");
  retrieve->add_option("--out", out_path, "optional result JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(config_path, out_dir);
    if (tag->parsed()) return cmd_tag(curves_path, config_path, out_path);
    if (can_train->parsed()) {
      return cmd_can_train(corpus_dir, stream, config_path, out_path);
    }
    if (can_infer->parsed()) {
      return cmd_can_infer(model_path, proposals_path, features_dir, fps,
                           out_path);
    }
    if (rerank->parsed()) {
      return cmd_rerank(model_path, proposals_path, features_dir, fps, topk,
                        out_path);
    }
    if (pipeline->parsed()) {
      return cmd_pipeline(config_path, corpus_dir, out_dir, threads);
    }
    if (fuse->parsed()) {
      return cmd_fuse(fuse_inputs, weights_arg, tune, gt_path, objective, step,
                      config_path, out_path);
    }
    if (detect->parsed()) {
      return cmd_detect(proposals_path, score_files, weights_arg, topk_classes,
                        gt_path, config_path, out_path);
    }
    if (eval_props->parsed()) {
      return cmd_eval_proposals(proposals_path, gt_path, csv_path);
    }
    if (eval_dets->parsed()) {
      return cmd_eval_detections(detections_path, gt_path);
    }
    if (cbp->parsed()) {
      return cmd_cbp(proposals_path, out_path, sketch_dim, seed, no_normalize,
                     method);
    }
    if (link->parsed()) {
      return cmd_link_tubelets(detections_path, config_path, trim, out_path);
    }
    if (frame_map->parsed()) {
      return cmd_eval_frame_map(detections_path, gt_path, iou);
    }
    if (retrieve->parsed()) {
      return cmd_retrieve_captions(corpus_dir, query_path, k_neighbors,
                                   out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
