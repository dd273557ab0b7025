#pragma once

// Experiment drivers: cross-subject k-fold CV, grouped confusion matrices,
// ablations, labeled-ratio and loss-weight sweeps, sampling-robustness rounds
// and per-channel importance. Every driver on one Experiment shares its
// FoldPlan, so sweep points differ only in the swept setting.

#include "nssi/config.hpp"
#include "nssi/trainer.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nssi {

struct ConfusionMatrix {
  std::string group;  // all, female, male
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double tp_rate = 0.0, fn_rate = 0.0, tn_rate = 0.0, fp_rate = 0.0;  // NaN when the row is empty
};

// Positive class DN+ (1). Groups without samples are omitted.
std::vector<ConfusionMatrix> confusion(std::span<const int> predictions, std::span<const int> labels,
                                       std::span<const Gender> genders);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::string> test_subjects;
  std::vector<std::string> labeled_subjects;
  std::vector<std::string> unlabeled_subjects;
  double accuracy = 0.0;          // per sample
  double subject_accuracy = 0.0;  // per-subject majority vote (ties count as DN-)
  std::vector<int> predictions;   // per target sample
  std::vector<int> labels;
  std::vector<Gender> genders;
  std::vector<std::string> sample_subjects;
  std::vector<LossRecord> curve;
};

struct CVReport {
  std::string label;
  std::vector<FoldResult> folds;
  bool subject_vote = false;
  double mean = 0.0;  // headline accuracy over folds
  double std = 0.0;   // sample standard deviation over folds
  std::vector<ConfusionMatrix> confusion;
  std::string plan_digest;
  json settings;  // train config, weights, tau, seeds

  double fold_accuracy(std::size_t i) const {
    return subject_vote ? folds[i].subject_accuracy : folds[i].accuracy;
  }
};

// mean and sample standard deviation of the per-fold headline accuracies
void summarize(CVReport& report);

struct SweepRow {
  std::string point;  // tau value, ratio, variant or round label
  CVReport report;
};

struct SweepTable {
  std::string axis;
  std::vector<SweepRow> rows;
  json metadata;  // reference values recorded alongside the sweep
};

struct ChannelImportanceMap {
  std::vector<std::string> channels;
  std::vector<double> accuracy;  // raw mean CV accuracy per channel
  std::vector<double> score;     // min-max normalized; all 0.5 when every accuracy is equal
  std::vector<bool> missing;     // channel run failed
  bool low_contrast = false;     // max - min accuracy below kLowContrast
  static constexpr double kLowContrast = 0.05;
};

// Ablation variants: the four single-change rows of the ablation table plus
// the full model, then four head combinations (disease head always present).
struct Variant {
  std::string name;
  HeadToggles heads;
};
const std::vector<Variant>& ablation_variants();
const Variant& find_variant(const std::string& name);

using Progress = std::function<void(const std::string&)>;

// Subject samples after preprocessing, keyed by subject id. Optionally keeps
// a single channel.
class SampleCache {
 public:
  SampleCache(const Cohort& cohort, const PreprocessConfig& pre, std::optional<std::size_t> channel = std::nullopt);
  const std::vector<Sample>& of(const std::string& id) const;
  std::size_t channels() const { return channels_; }
  std::size_t points() const { return points_; }

 private:
  std::map<std::string, std::vector<Sample>> samples_;
  std::size_t channels_ = 0;
  std::size_t points_ = 0;
};

struct CvRun {
  GeneratorConfig generator;
  TrainConfig train;
  loss::Weights weights;
  double tau = 75.0;
  std::string label = "cv";
};

class Experiment {
 public:
  // Draws the balanced cohort and the FoldPlan from the config.
  Experiment(const Cohort& cohort, const ExperimentConfig& config, std::size_t jobs = 1, Progress progress = {});

  const BalancedCohort& balanced() const { return balanced_; }
  const FoldPlan& plan() const { return plan_; }
  const ExperimentConfig& config() const { return config_; }

  CvRun base_run() const;
  CVReport run_cv(const CvRun& run) const;
  CVReport run_cv(const CvRun& run, const SampleCache& cache, const FoldPlan& plan) const;

  SweepTable ablate(const std::vector<std::string>& variants) const;  // empty: all variants
  SweepTable ratio_sweep(const std::vector<double>& taus) const;
  SweepTable weight_sweep(const std::vector<std::array<double, 4>>& ratios) const;
  SweepTable sampling_robustness(std::size_t rounds, const std::vector<std::uint64_t>& seeds) const;
  ChannelImportanceMap channel_importance(std::size_t epochs) const;

 private:
  const Cohort& cohort_;
  ExperimentConfig config_;
  std::size_t jobs_;
  Progress progress_;
  BalancedCohort balanced_;
  FoldPlan plan_;
  SampleCache cache_;
};

// Builds the S_l / S_u / T sample pools of one fold.
DomainData fold_data(const SampleCache& cache, const DomainAssignment& assignment);

// ---------------------------------------------------------------------------
// Report files

json to_json(const ConfusionMatrix& m);
json to_json(const CVReport& r, bool with_curves = true);
json to_json(const SweepTable& t);
json to_json(const ChannelImportanceMap& m);

void write_cv_report(const CVReport& r, const std::filesystem::path& dir);  // cv_report.json, folds.csv, confusion.csv, loss_fold*.csv
void write_sweep(const SweepTable& t, const std::filesystem::path& dir, const std::string& stem);
void write_channel_map(const ChannelImportanceMap& m, const std::filesystem::path& dir);  // csv, json, svg

// Clinical reference values, recorded as non-reproducible metadata.
json reference_metadata(const std::string& axis);

}  // namespace nssi
