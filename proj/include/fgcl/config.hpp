#pragma once

// Run configuration: a sectioned key = value file. Unknown sections or keys are errors.

#include "fgcl/pipeline.hpp"
#include "fgcl/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace fgcl {

struct IoPaths {
  std::string dataset_dir = "dataset";
  std::string graphs_dir = "graphs";
  std::string model_dir = "model";
  std::string results_dir = "results";
};

struct RunConfig {
  SynthConfig synth;
  PipelineConfig pipeline;
  IoPaths io;
  std::uint64_t rng_seed = 0;

  /// Propagates rng_seed into the sub-configurations that carry their own seed.
  void apply_seed(std::uint64_t seed);
};

/// Parses config text; throws ContractViolation naming the offending key or value.
RunConfig parse_run_config(const std::string& text);

/// Throws IoError (with the path) when the file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path);

/// Every effective setting in the same format parse_run_config accepts.
std::string run_config_to_ini(const RunConfig& cfg);

nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace fgcl
