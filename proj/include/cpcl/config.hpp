#pragma once

#include "cpcl/experiment.hpp"
#include "cpcl/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <stdexcept>

namespace cpcl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PathsConfig {
  std::filesystem::path manifest;
  std::filesystem::path skg;
  std::filesystem::path vocab;
  std::filesystem::path output_dir{"out"};
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  MfccConfig mfcc;
  ExperimentConfig experiment;
  SyntheticConfig synthetic;
  PathsConfig paths;
  int gradcheck_instances = 5;
  double gradcheck_h = 1e-5;

  /// Numeric bounds of every section. Throws ConfigError.
  void validate() const;
};

/// Every key is optional; missing keys keep their defaults. Unknown keys and wrongly typed
/// values are errors. Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace cpcl
