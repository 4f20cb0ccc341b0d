#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vl/distill/distill.h"
#include "vl/pipeline/pipeline.h"
#include "vl/synth_eval/scene.h"

namespace vl {

struct DistillConfig {
  std::filesystem::path student;  // checkpoint path, empty = none
  int hidden = 256;
  TrainParams train;
  PairParams pairs;
  int gradcheck_inits = 10;
};

/// Everything a subcommand needs. Built-in defaults < config file < flags.
struct RunConfig {
  std::uint64_t seed = 7;
  unsigned threads = 0;
  std::filesystem::path scene_dir = "scene";
  std::filesystem::path output_dir = ".";
  synth::SceneParams scene;
  AugmentationParams augmentation;
  LocalizeParams localize;
  int whiten_dims = 0;
  bool augment = true;
  FeatureMode feature_mode = FeatureMode::deterministic;
  DistillConfig distill;
};

/// Reads a TOML file over the defaults. Unknown keys and type mismatches
/// throw Error(config).
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
void apply_config_text(RunConfig& config, std::string_view text);

/// Every key that apply_config_text accepts, with its current value, as TOML.
std::string dump_config(const RunConfig& config);

FeatureMode parse_feature_mode(std::string_view s);
std::string_view to_string(FeatureMode mode);

}  // namespace vl
