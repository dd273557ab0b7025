#pragma once

// JSON forms of every configuration struct and the experiment document the
// command-line driver reads. Parsing is strict: unknown keys and bad values
// raise ConfigError naming the key path; absent keys keep their defaults.

#include "nssi/cohort.hpp"
#include "nssi/generator.hpp"
#include "nssi/json_util.hpp"
#include "nssi/losses.hpp"
#include "nssi/synthgen.hpp"
#include "nssi/trainer.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nssi {

json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const json& j, const std::string& path = "generator");

json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j, const std::string& path = "train");

json to_json(const loss::Weights& w);
loss::Weights weights_from_json(const json& j, const std::string& path = "weights");

json to_json(const PreprocessConfig& c);
PreprocessConfig preprocess_from_json(const json& j, const std::string& path = "preprocess");

struct CohortSource {
  std::string path;                // cohort directory; empty: synthesize from `synth`
  Quotas quotas{15, 15};
  std::uint64_t sampling_seed = 1;
  friend bool operator==(const CohortSource& a, const CohortSource& b) {
    return a.path == b.path && a.quotas.female == b.quotas.female && a.quotas.male == b.quotas.male &&
           a.sampling_seed == b.sampling_seed;
  }
};

struct CvConfig {
  std::size_t k = 10;
  double tau = 75.0;
  std::uint64_t seed = 1;
  bool subject_vote = false;  // headline accuracy by per-subject majority vote
  friend bool operator==(const CvConfig&, const CvConfig&) = default;
};

struct SweepConfig {
  std::vector<double> tau_list{5, 10, 15, 25, 35, 45, 55, 65, 75, 85};
  std::vector<std::array<double, 4>> weight_ratios{{1, 1, 1, 1}, {1, 1, 1, 2}, {1, 1, 2, 1}, {1, 2, 1, 1}, {2, 1, 1, 1}};
  std::vector<std::string> ablation_variants;  // empty: the full list
  std::size_t sampling_rounds = 5;
  std::vector<std::uint64_t> sampling_seeds;   // empty: derived per round
  std::size_t channel_epochs = 20;
  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct ExperimentConfig {
  SynthSpec synth;
  CohortSource cohort;
  PreprocessConfig preprocess;
  GeneratorConfig generator{8, 128};  // matches the default synthetic cohort
  TrainConfig train;
  loss::Weights weights;
  CvConfig cv;
  SweepConfig sweeps;

  // Cross-checks between sections (window length vs generator points, ...).
  void validate() const;
};

json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);  // also accepts a run manifest

// Applies --seed: every section seed is derived from the root.
void apply_root_seed(ExperimentConfig& c, std::uint64_t seed);

}  // namespace nssi
