#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfm/train.hpp"

namespace gfm::cli {

/// Bad flags or configuration; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training run description. Paths keep the text given in the file and are
/// resolved against the config file's directory.
struct ExperimentConfig {
  std::string data;
  std::string out_dir;
  TrainConfig train;
  bool ablation = false;
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Fully resolved config with every key spelled out.
std::string experiment_config_json(const ExperimentConfig& config);

/// Entry point shared by the binary and the tests. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gfm::cli
