#pragma once

#include "scn/behavior/behavior.hpp"
#include "scn/ingest/synthetic.hpp"
#include "scn/model/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scn::cli {

/// Bad flags, config keys or values; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string dir = "scn_data";
  /// Empty: the taxonomy shipped with the sources.
  std::string taxonomy;
  /// Target companies for `features`; empty reads them from truth_labels.csv.
  std::vector<std::string> companies;
};

struct ExperimentSettings {
  std::vector<double> fractions = {0.13, 0.35, 1.0};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<double> thresholds;  // empty: 0.50 .. 0.95
  int jobs = 1;
  int top_n = 20;
  bool balanced_groups = true;
};

/// Every tunable of every command. Resolved once, then echoed into outputs.
struct RunConfig {
  DataConfig data;
  SyntheticSpec gen;
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  ExperimentSettings experiment;

  void validate() const;
};

/// "section.key" accessors over one RunConfig.
struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<nlohmann::ordered_json()> get;
};
std::vector<Field> fields_of(RunConfig& config);

/// INI file with [section] headers and key = value lines. Unknown keys and
/// unparsable values raise ConfigError naming the key.
void load_ini(const std::filesystem::path& path, RunConfig& config);

/// Applies "section.key=value".
void apply_override(const std::string& assignment, RunConfig& config);

nlohmann::ordered_json to_json(const RunConfig& config);

/// INI text that load_ini reads back to the same config.
std::string to_ini(const RunConfig& config);

std::filesystem::path taxonomy_path(const RunConfig& config);

}  // namespace scn::cli
