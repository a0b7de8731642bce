#include "tap/io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace tap {

namespace {

using nlohmann::json;

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return doc;
}

void save_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

// Rejects missing required keys and any key outside required+optional,
// naming the offending key.
void check_keys(const json& obj, const std::vector<std::string>& required,
                const std::vector<std::string>& optional,
                const std::string& context) {
  if (!obj.is_object()) throw SchemaError(context + " must be a JSON object");
  for (const auto& key : required) {
    if (!obj.contains(key)) {
      throw SchemaError(context + ": missing required key \"" + key + "\"");
    }
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find(required.begin(), required.end(), key) == required.end() &&
        std::find(optional.begin(), optional.end(), key) == optional.end()) {
      throw SchemaError(context + ": unexpected key \"" + key + "\"");
    }
  }
}

double require_number(const json& v, const std::string& context) {
  if (!v.is_number()) throw SchemaError(context + " must be a number");
  return v.get<double>();
}

TemporalSegment parse_segment_array(const json& v, const std::string& context) {
  if (!v.is_array() || v.size() != 2) {
    throw SchemaError(context + ": \"segment\" must be a [start, end] pair");
  }
  TemporalSegment seg{require_number(v[0], context + " segment start"),
                      require_number(v[1], context + " segment end")};
  validate_segment(seg, context);
  return seg;
}

}  // namespace

GroundTruthSet parse_ground_truth(const std::filesystem::path& path) {
  const json doc = load_json(path);
  check_keys(doc, {"database"}, {}, path.string());
  const json& db = doc["database"];
  if (!db.is_object()) {
    throw SchemaError(path.string() + ": \"database\" must be an object");
  }

  GroundTruthSet gt;
  for (const auto& [video_id, entry] : db.items()) {
    const std::string ctx = path.string() + " video " + video_id;
    check_keys(entry, {"duration", "annotations"}, {}, ctx);
    VideoGroundTruth video;
    video.duration = require_number(entry["duration"], ctx + " duration");
    const json& anns = entry["annotations"];
    if (!anns.is_array()) {
      throw SchemaError(ctx + ": \"annotations\" must be an array");
    }
    for (const json& a : anns) {
      check_keys(a, {"segment", "label"}, {}, ctx + " annotation");
      GtAnnotation ann;
      ann.segment = parse_segment_array(a["segment"], ctx);
      if (!a["label"].is_string()) {
        throw SchemaError(ctx + ": annotation \"label\" must be a string");
      }
      ann.label = a["label"].get<std::string>();
      video.annotations.push_back(std::move(ann));
    }
    gt.videos.emplace(video_id, std::move(video));
  }
  validate_ground_truth(gt);
  return gt;
}

void write_ground_truth(const GroundTruthSet& gt,
                        const std::filesystem::path& path) {
  validate_ground_truth(gt);
  json db = json::object();
  for (const auto& [video_id, video] : gt.videos) {
    json anns = json::array();
    for (const auto& ann : video.annotations) {
      anns.push_back({{"segment", {ann.segment.start, ann.segment.end}},
                      {"label", ann.label}});
    }
    db[video_id] = {{"duration", video.duration}, {"annotations", anns}};
  }
  save_text(json{{"database", db}}.dump(2) + "\n", path);
}

FeatureSequence read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  char magic[4];
  if (!in.read(magic, 4)) throw FormatError(path.string() + ": truncated header");
  if (std::memcmp(magic, "FSEQ", 4) != 0) {
    throw FormatError(path.string() + ": bad magic, expected \"FSEQ\"");
  }
  std::uint8_t header[8];
  if (!in.read(reinterpret_cast<char*>(header), 8)) {
    throw FormatError(path.string() + ": truncated header");
  }
  auto read_u32 = [](const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  };
  FeatureSequence f;
  f.time_steps = read_u32(header);
  f.dim = read_u32(header + 4);
  if (f.time_steps == 0 || f.dim == 0) {
    throw ValidationError(path.string() + ": T and D must both be >= 1");
  }
  const std::size_t count = static_cast<std::size_t>(f.time_steps) * f.dim;
  f.values.resize(count);
  if (!in.read(reinterpret_cast<char*>(f.values.data()),
               static_cast<std::streamsize>(count * sizeof(float)))) {
    throw FormatError(path.string() + ": payload shorter than T*D*4 bytes");
  }
  validate_features(f);
  return f;
}

void write_feature_matrix(const FeatureSequence& features,
                          const std::filesystem::path& path) {
  validate_features(features);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("FSEQ", 4);
  auto write_u32 = [&](std::uint32_t v) {
    const std::uint8_t bytes[4] = {
        static_cast<std::uint8_t>(v & 0xFF),
        static_cast<std::uint8_t>((v >> 8) & 0xFF),
        static_cast<std::uint8_t>((v >> 16) & 0xFF),
        static_cast<std::uint8_t>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  };
  write_u32(features.time_steps);
  write_u32(features.dim);
  out.write(reinterpret_cast<const char*>(features.values.data()),
            static_cast<std::streamsize>(features.values.size() * sizeof(float)));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<Proposal> read_proposals(const std::filesystem::path& path) {
  const json doc = load_json(path);
  check_keys(doc, {"results"}, {}, path.string());
  const json& results = doc["results"];
  if (!results.is_object()) {
    throw SchemaError(path.string() + ": \"results\" must be an object");
  }

  std::vector<Proposal> proposals;
  for (const auto& [video_id, entries] : results.items()) {
    const std::string ctx = path.string() + " video " + video_id;
    if (!entries.is_array()) {
      throw SchemaError(ctx + ": results entry must be an array");
    }
    for (const json& e : entries) {
      check_keys(e, {"segment", "score"}, {"label", "stage"}, ctx);
      Proposal p;
      p.video_id = video_id;
      p.segment = parse_segment_array(e["segment"], ctx);
      p.score = require_number(e["score"], ctx + " score");
      if (e.contains("label")) {
        if (!e["label"].is_string()) {
          throw SchemaError(ctx + ": \"label\" must be a string");
        }
        p.label = e["label"].get<std::string>();
      }
      p.stage = Stage::FUSED;
      if (e.contains("stage")) {
        if (!e["stage"].is_string()) {
          throw SchemaError(ctx + ": \"stage\" must be a string");
        }
        p.stage = stage_from_name(e["stage"].get<std::string>());
      }
      validate_proposal(p);
      proposals.push_back(std::move(p));
    }
  }
  return proposals;
}

void write_proposals(const std::vector<Proposal>& proposals,
                     const std::filesystem::path& path) {
  // Grouped by video id (lexicographic); relative order within a video is
  // preserved. Scores round-trip exactly: the serializer emits the shortest
  // decimal form that parses back to the same double.
  std::map<std::string, json> per_video;
  for (const Proposal& p : proposals) {
    validate_proposal(p);
    json e = {{"segment", {p.segment.start, p.segment.end}},
              {"score", p.score},
              {"stage", stage_name(p.stage)}};
    if (p.label) e["label"] = *p.label;
    auto [it, inserted] = per_video.try_emplace(p.video_id, json::array());
    it->second.push_back(std::move(e));
  }
  json results = json::object();
  for (auto& [video_id, entries] : per_video) results[video_id] = std::move(entries);
  save_text(json{{"results", results}}.dump() + "\n", path);
}

ActionnessCurveSet read_actionness_curves(const std::filesystem::path& path) {
  const json doc = load_json(path);
  check_keys(doc, {"video_id", "fps", "point", "pair", "recurrent"}, {},
             path.string());
  ActionnessCurveSet c;
  if (!doc["video_id"].is_string()) {
    throw SchemaError(path.string() + ": \"video_id\" must be a string");
  }
  c.video_id = doc["video_id"].get<std::string>();
  c.fps = require_number(doc["fps"], path.string() + " fps");
  auto read_channel = [&](const char* key) {
    const json& arr = doc[key];
    if (!arr.is_array()) {
      throw SchemaError(path.string() + ": \"" + key + "\" must be an array");
    }
    std::vector<double> out;
    out.reserve(arr.size());
    for (const json& v : arr) {
      out.push_back(require_number(v, path.string() + std::string(" ") + key));
    }
    return out;
  };
  c.point = read_channel("point");
  c.pair = read_channel("pair");
  c.recurrent = read_channel("recurrent");
  validate_curves(c);
  return c;
}

void write_actionness_curves(const ActionnessCurveSet& curves,
                             const std::filesystem::path& path) {
  validate_curves(curves);
  const json doc = {{"video_id", curves.video_id},
                    {"fps", curves.fps},
                    {"point", curves.point},
                    {"pair", curves.pair},
                    {"recurrent", curves.recurrent}};
  save_text(doc.dump() + "\n", path);
}

ClassPredictionSet read_class_predictions(const std::filesystem::path& path) {
  const json doc = load_json(path);
  check_keys(doc, {"classes", "predictions"}, {}, path.string());
  ClassPredictionSet set;
  const json& classes = doc["classes"];
  if (!classes.is_array() || classes.empty()) {
    throw SchemaError(path.string() + ": \"classes\" must be a non-empty array");
  }
  for (const json& c : classes) {
    if (!c.is_string()) {
      throw SchemaError(path.string() + ": class names must be strings");
    }
    set.classes.push_back(c.get<std::string>());
  }
  const json& preds = doc["predictions"];
  if (!preds.is_object()) {
    throw SchemaError(path.string() + ": \"predictions\" must be an object");
  }
  for (const auto& [id, arr] : preds.items()) {
    if (!arr.is_array() || arr.size() != set.classes.size()) {
      throw SchemaError(path.string() + ": prediction for " + id +
                        " must list one probability per class");
    }
    std::vector<double> probs;
    probs.reserve(arr.size());
    for (const json& v : arr) {
      probs.push_back(require_number(v, path.string() + " prediction " + id));
    }
    validate_class_prediction({id, probs});
    set.predictions.emplace(id, std::move(probs));
  }
  return set;
}

void write_class_predictions(const ClassPredictionSet& preds,
                             const std::filesystem::path& path) {
  json out_preds = json::object();
  for (const auto& [id, probs] : preds.predictions) {
    validate_class_prediction({id, probs});
    out_preds[id] = probs;
  }
  const json doc = {{"classes", preds.classes}, {"predictions", out_preds}};
  save_text(doc.dump() + "\n", path);
}

}  // namespace tap
