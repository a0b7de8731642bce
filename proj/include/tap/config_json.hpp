#pragma once

#include <json.hpp>

#include "tap/can.hpp"
#include "tap/cpn.hpp"
#include "tap/pipeline.hpp"
#include "tap/prn.hpp"
#include "tap/synth.hpp"
#include "tap/tubelet.hpp"

namespace tap {

// Config sections parse from JSON objects where every key is optional and
// defaults apply; unknown keys are rejected by name.

cpn::TagConfig tag_config_from_json(const nlohmann::json& j);
nlohmann::json tag_config_to_json(const cpn::TagConfig& cfg);

can::CanConfig can_config_from_json(const nlohmann::json& j);
nlohmann::json can_config_to_json(const can::CanConfig& cfg);

prn::PrnConfig prn_config_from_json(const nlohmann::json& j);
nlohmann::json prn_config_to_json(const prn::PrnConfig& cfg);

pipeline::PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json pipeline_config_to_json(const pipeline::PipelineConfig& cfg);

synth::SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const synth::SynthConfig& cfg);

tubelet::LinkConfig link_config_from_json(const nlohmann::json& j);
nlohmann::json link_config_to_json(const tubelet::LinkConfig& cfg);

/// Channel weights plus fusion mode for the coarse stage, stored inside the
/// "tag" section next to the grouping parameters.
struct CpnFusionSettings {
  std::array<double, 3> channel_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  cpn::FusionMode mode = cpn::FusionMode::kWeightedMean;
};

/// The full shared config file: one optional section per module.
struct CliConfig {
  cpn::TagConfig tag;
  CpnFusionSettings cpn_fusion;
  can::CanConfig can;
  prn::PrnConfig prn;
  pipeline::PipelineConfig pipeline;
  synth::SynthConfig synth;
  tubelet::LinkConfig link;
};

CliConfig cli_config_from_json(const nlohmann::json& j);
CliConfig load_cli_config(const std::filesystem::path& path);

}  // namespace tap
