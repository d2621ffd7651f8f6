#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "bsq/bsm.hpp"
#include "bsq/dataio.hpp"
#include "bsq/losses.hpp"
#include "bsq/metrics.hpp"
#include "bsq/train.hpp"

namespace bsq {

/// Everything a training run needs. Every field has a default; missing
/// keys keep it, unknown keys are rejected.
struct RunConfig {
  BSMConfig model;
  LossConfig loss;
  OptimizerConfig optimizer;
  DataConfig data;
  EvalConfig eval;
  std::string output_dir = "runs/default";
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const BSMConfig& c);
nlohmann::json to_json(const LossConfig& c);
nlohmann::json to_json(const OptimizerConfig& c);
nlohmann::json to_json(const DataConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const RunConfig& c);

// Overlay `j` onto the defaults already in `c`. Throws ConfigError on
// unknown keys or badly typed values.
void from_json(const nlohmann::json& j, BSMConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Throws ParseError on malformed JSON, ConfigError on bad content.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace bsq
