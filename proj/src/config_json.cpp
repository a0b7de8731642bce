#include "tap/config_json.hpp"

#include <fstream>
#include <set>

namespace tap {

namespace {

using nlohmann::json;

class SectionReader {
 public:
  SectionReader(const json& j, std::string context)
      : j_(j), context_(std::move(context)) {
    if (!j.is_object()) {
      throw SchemaError(context_ + " must be a JSON object");
    }
  }

  ~SectionReader() = default;

  void get(const char* key, double& out) {
    if (mark(key)) out = number(key);
  }
  void get(const char* key, int& out) {
    if (mark(key)) out = static_cast<int>(number(key));
  }
  void get(const char* key, std::uint32_t& out) {
    if (mark(key)) out = static_cast<std::uint32_t>(number(key));
  }
  void get(const char* key, std::uint64_t& out) {
    if (mark(key)) out = j_.at(key).get<std::uint64_t>();
  }
  void get(const char* key, bool& out) {
    if (mark(key)) {
      if (!j_.at(key).is_boolean()) {
        throw SchemaError(context_ + ": \"" + key + "\" must be a boolean");
      }
      out = j_.at(key).get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (mark(key)) {
      if (!j_.at(key).is_string()) {
        throw SchemaError(context_ + ": \"" + key + "\" must be a string");
      }
      out = j_.at(key).get<std::string>();
    }
  }
  void get(const char* key, std::vector<double>& out) {
    if (mark(key)) out = number_list(j_.at(key), key);
  }
  void get(const char* key, std::vector<int>& out) {
    if (mark(key)) {
      out.clear();
      for (double v : number_list(j_.at(key), key)) {
        out.push_back(static_cast<int>(v));
      }
    }
  }
  void get(const char* key, std::vector<std::vector<double>>& out) {
    if (mark(key)) {
      const json& arr = j_.at(key);
      if (!arr.is_array()) {
        throw SchemaError(context_ + ": \"" + key + "\" must be an array");
      }
      out.clear();
      for (const json& inner : arr) out.push_back(number_list(inner, key));
    }
  }
  void get(const char* key, std::map<std::string, double>& out) {
    if (mark(key)) {
      const json& obj = j_.at(key);
      if (!obj.is_object()) {
        throw SchemaError(context_ + ": \"" + key + "\" must be an object");
      }
      out.clear();
      for (const auto& [name, v] : obj.items()) {
        if (!v.is_number()) {
          throw SchemaError(context_ + ": \"" + key + "\" values must be numbers");
        }
        out.emplace(name, v.get<double>());
      }
    }
  }

  /// Call after all get()s: any key never requested is unknown.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (seen_.find(key) == seen_.end()) {
        throw SchemaError(context_ + ": unexpected key \"" + key + "\"");
      }
    }
  }

  bool has(const char* key) { return j_.contains(key); }

 private:
  bool mark(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  double number(const char* key) {
    if (!j_.at(key).is_number()) {
      throw SchemaError(context_ + ": \"" + key + "\" must be a number");
    }
    return j_.at(key).get<double>();
  }
  std::vector<double> number_list(const json& arr, const char* key) {
    if (!arr.is_array()) {
      throw SchemaError(context_ + ": \"" + key + "\" must be an array");
    }
    std::vector<double> out;
    for (const json& v : arr) {
      if (!v.is_number()) {
        throw SchemaError(context_ + ": \"" + key + "\" must hold numbers");
      }
      out.push_back(v.get<double>());
    }
    return out;
  }

  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace

cpn::TagConfig tag_config_from_json(const json& j) {
  cpn::TagConfig cfg;
  SectionReader r(j, "tag config");
  r.get("thresholds", cfg.thresholds);
  r.get("group_fraction", cfg.group_fraction);
  r.get("dedupe_tiou", cfg.dedupe_tiou);
  r.get("min_len_frames", cfg.min_len_frames);
  // Fusion settings live in the same section; skip them here.
  std::vector<double> ignore_weights;
  std::string ignore_mode;
  r.get("channel_weights", ignore_weights);
  r.get("fusion_mode", ignore_mode);
  r.finish();
  cpn::validate_tag_config(cfg);
  return cfg;
}

json tag_config_to_json(const cpn::TagConfig& cfg) {
  return {{"thresholds", cfg.thresholds},
          {"group_fraction", cfg.group_fraction},
          {"dedupe_tiou", cfg.dedupe_tiou},
          {"min_len_frames", cfg.min_len_frames}};
}

can::CanConfig can_config_from_json(const json& j) {
  can::CanConfig cfg;
  SectionReader r(j, "can config");
  r.get("input_dim", cfg.input_dim);
  r.get("base_channels", cfg.base_channels);
  r.get("level_strides", cfg.level_strides);
  r.get("anchor_scales", cfg.anchor_scales);
  r.get("pos_tiou", cfg.pos_tiou);
  r.get("neg_tiou", cfg.neg_tiou);
  r.get("sample_ratio", cfg.sample_ratio);
  r.get("lambda_reg", cfg.lambda_reg);
  r.get("lr", cfg.lr);
  r.get("momentum", cfg.momentum);
  r.get("grad_clip", cfg.grad_clip);
  r.get("cascade_rounds", cfg.cascade_rounds);
  r.get("train_steps", cfg.train_steps);
  r.get("batch_size", cfg.batch_size);
  r.get("seed", cfg.seed);
  r.get("init_scale", cfg.init_scale);
  r.finish();
  can::validate_can_config(cfg);
  return cfg;
}

json can_config_to_json(const can::CanConfig& cfg) {
  return {{"input_dim", cfg.input_dim},
          {"base_channels", cfg.base_channels},
          {"level_strides", cfg.level_strides},
          {"anchor_scales", cfg.anchor_scales},
          {"pos_tiou", cfg.pos_tiou},
          {"neg_tiou", cfg.neg_tiou},
          {"sample_ratio", cfg.sample_ratio},
          {"lambda_reg", cfg.lambda_reg},
          {"lr", cfg.lr},
          {"momentum", cfg.momentum},
          {"grad_clip", cfg.grad_clip},
          {"cascade_rounds", cfg.cascade_rounds},
          {"train_steps", cfg.train_steps},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},
          {"init_scale", cfg.init_scale}};
}

prn::PrnConfig prn_config_from_json(const json& j) {
  prn::PrnConfig cfg;
  SectionReader r(j, "prn config");
  r.get("lr", cfg.lr);
  r.get("epochs", cfg.epochs);
  r.get("seed", cfg.seed);
  r.get("pos_tiou", cfg.pos_tiou);
  r.get("neg_tiou", cfg.neg_tiou);
  r.get("blend", cfg.blend);
  r.finish();
  if (cfg.epochs < 1 || !(cfg.lr > 0.0)) {
    throw ValidationError("prn config: lr must be positive, epochs >= 1");
  }
  if (cfg.blend < 0.0 || cfg.blend > 1.0) {
    throw ValidationError("prn config: blend must lie in [0, 1]");
  }
  return cfg;
}

json prn_config_to_json(const prn::PrnConfig& cfg) {
  return {{"lr", cfg.lr},           {"epochs", cfg.epochs},
          {"seed", cfg.seed},       {"pos_tiou", cfg.pos_tiou},
          {"neg_tiou", cfg.neg_tiou}, {"blend", cfg.blend}};
}

pipeline::PipelineConfig pipeline_config_from_json(const json& j) {
  pipeline::PipelineConfig cfg;
  SectionReader r(j, "pipeline config");
  r.get("rho_split", cfg.rho_split);
  r.get("nms_tiou", cfg.nms_tiou);
  r.get("k_final", cfg.k_final);
  r.get("stream_weights", cfg.stream_weights);
  r.get("duplicate_merge_tiou", cfg.duplicate_merge_tiou);
  r.get("classes_per_proposal", cfg.classes_per_proposal);
  r.finish();
  pipeline::validate_pipeline_config(cfg);
  return cfg;
}

json pipeline_config_to_json(const pipeline::PipelineConfig& cfg) {
  return {{"rho_split", cfg.rho_split},
          {"nms_tiou", cfg.nms_tiou},
          {"k_final", cfg.k_final},
          {"stream_weights", cfg.stream_weights},
          {"duplicate_merge_tiou", cfg.duplicate_merge_tiou},
          {"classes_per_proposal", cfg.classes_per_proposal}};
}

synth::SynthConfig synth_config_from_json(const json& j) {
  synth::SynthConfig cfg;
  SectionReader r(j, "synth config");
  r.get("n_videos", cfg.n_videos);
  r.get("duration_min", cfg.duration_min);
  r.get("duration_max", cfg.duration_max);
  r.get("gt_per_video_min", cfg.gt_per_video_min);
  r.get("gt_per_video_max", cfg.gt_per_video_max);
  r.get("fps", cfg.fps);
  r.get("feature_dim", cfg.feature_dim);
  r.get("noise_sigma", cfg.noise_sigma);
  r.get("signal_strength", cfg.signal_strength);
  r.get("seed", cfg.seed);
  r.get("n_classes", cfg.n_classes);
  r.get("n_streams", cfg.n_streams);
  r.finish();
  synth::validate_synth_config(cfg);
  return cfg;
}

json synth_config_to_json(const synth::SynthConfig& cfg) {
  return {{"n_videos", cfg.n_videos},
          {"duration_min", cfg.duration_min},
          {"duration_max", cfg.duration_max},
          {"gt_per_video_min", cfg.gt_per_video_min},
          {"gt_per_video_max", cfg.gt_per_video_max},
          {"fps", cfg.fps},
          {"feature_dim", cfg.feature_dim},
          {"noise_sigma", cfg.noise_sigma},
          {"signal_strength", cfg.signal_strength},
          {"seed", cfg.seed},
          {"n_classes", cfg.n_classes},
          {"n_streams", cfg.n_streams}};
}

tubelet::LinkConfig link_config_from_json(const json& j) {
  tubelet::LinkConfig cfg;
  SectionReader r(j, "link config");
  r.get("lambda_overlap", cfg.lambda_overlap);
  r.get("min_link_iou", cfg.min_link_iou);
  r.get("trim_window", cfg.trim_window);
  r.get("trim_threshold", cfg.trim_threshold);
  r.finish();
  tubelet::validate_link_config(cfg);
  return cfg;
}

json link_config_to_json(const tubelet::LinkConfig& cfg) {
  return {{"lambda_overlap", cfg.lambda_overlap},
          {"min_link_iou", cfg.min_link_iou},
          {"trim_window", cfg.trim_window},
          {"trim_threshold", cfg.trim_threshold}};
}

CliConfig cli_config_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  CliConfig cfg;
  for (const auto& [key, section] : j.items()) {
    if (key == "tag") {
      cfg.tag = tag_config_from_json(section);
      SectionReader r(section, "tag config");
      std::vector<double> weights;
      r.get("channel_weights", weights);
      if (!weights.empty()) {
        if (weights.size() != 3) {
          throw SchemaError("tag config: channel_weights needs 3 entries");
        }
        cfg.cpn_fusion.channel_weights = {weights[0], weights[1], weights[2]};
      }
      std::string mode;
      r.get("fusion_mode", mode);
      if (!mode.empty()) {
        if (mode == "mean") {
          cfg.cpn_fusion.mode = cpn::FusionMode::kWeightedMean;
        } else if (mode == "product") {
          cfg.cpn_fusion.mode = cpn::FusionMode::kWeightedGeometric;
        } else {
          throw SchemaError("tag config: fusion_mode must be mean or product");
        }
      }
    } else if (key == "can") {
      cfg.can = can_config_from_json(section);
    } else if (key == "prn") {
      cfg.prn = prn_config_from_json(section);
    } else if (key == "pipeline") {
      cfg.pipeline = pipeline_config_from_json(section);
    } else if (key == "synth") {
      cfg.synth = synth_config_from_json(section);
    } else if (key == "link") {
      cfg.link = link_config_from_json(section);
    } else {
      throw SchemaError("config: unexpected section \"" + key + "\"");
    }
  }
  return cfg;
}

CliConfig load_cli_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return cli_config_from_json(doc);
}

}  // namespace tap
