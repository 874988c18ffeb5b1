#pragma once

#include <string>
#include <vector>

#include "sddr/data.hpp"
#include "sddr/trainers.hpp"

namespace sddr {

enum class TaskKind { Gaussian, Glyph, Cifar100 };

struct TaskConfig {
  TaskKind kind = TaskKind::Gaussian;
  // gaussian
  int dim = 8;
  double separation = 6.0;
  // glyph
  GlyphParams glyph;
  // shared
  int per_class_train = 50;
  int per_class_test = 20;
  // cifar100
  std::string train_path;
  std::string test_path;
  std::string labels_path;
};

struct ScenarioConfig {
  int num_classes = 10;
  int num_steps = 5;  // T
  std::uint64_t seed = kDefaultSeed;
  double base_fraction = 0.5;
};

enum class BackendKind { Oracle, Offline, Remote };

struct SyntheticConfig {
  BackendKind backend = BackendKind::Oracle;
  int n = 100;
  double sigma = 0.0;
  GenerationParams params;
  std::string offline_root;
  RemoteConfig remote;
};

struct MemoryConfig {
  std::size_t per_class = 20;  // m
  ExemplarPolicy policy = ExemplarPolicy::Herding;
};

struct ExperimentConfig {
  TaskConfig task;
  ScenarioConfig scenario;
  TrainerConfig trainer;
  MemoryConfig memory;
  SyntheticConfig synthetic;
  std::vector<std::size_t> hidden_dims{32, 16};
  std::string output_dir = "out";
  std::vector<std::uint64_t> run_seeds{kDefaultSeed};
};

// Parses, applies defaults, and validates. Unknown keys are rejected and all
// semantic errors are reported together, each naming its key path.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text, const std::string& origin);
std::string serialize_config(const ExperimentConfig& cfg);

// Name <-> enum helpers shared with the CLI.
std::string to_string(SddrMode mode);
SddrMode sddr_mode_from_string(const std::string& name);
std::string to_string(Method method);
Method method_from_string(const std::string& name);

}  // namespace sddr
