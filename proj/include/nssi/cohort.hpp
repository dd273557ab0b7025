#pragma once

// Subjects, trials and samples; resampling and segmentation; balanced
// subject selection, stratified folds and the labeled/unlabeled/target split;
// the on-disk cohort format.

#include "nssi/losses.hpp"
#include "nssi/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace nssi {

enum class Gender { male, female };
enum class Disease { dn_plus, dn_minus };

std::string to_string(Gender g);
std::string to_string(Disease d);
std::string to_string(DomainTag t);
Gender parse_gender(const std::string& s);
Disease parse_disease(const std::string& s);

// Row-major [channels][samples], microvolts.
struct Trial {
  std::size_t channels = 0;
  int rate = 0;
  std::vector<float> data;

  std::size_t samples() const { return channels ? data.size() / channels : 0; }
  float at(std::size_t c, std::size_t t) const { return data[c * samples() + t]; }
  void validate() const;
  friend bool operator==(const Trial&, const Trial&) = default;
};

struct Subject {
  std::string id;
  Gender gender = Gender::female;
  Disease disease = Disease::dn_minus;
  std::vector<Trial> trials;
  friend bool operator==(const Subject&, const Subject&) = default;
};

struct Cohort {
  std::string name;
  int rate = 0;
  std::size_t channels = 0;
  std::vector<std::string> channel_names;  // 10-20 order
  std::vector<Subject> subjects;

  const Subject& subject(const std::string& id) const;
  void validate() const;  // unique ids, consistent shapes and rates, finite data
  friend bool operator==(const Cohort&, const Cohort&) = default;
};

struct Sample {
  Tensor x;  // [C, P]
  std::string subject_id;
  Gender gender = Gender::female;
  Disease disease = Disease::dn_minus;
  DomainTag tag = DomainTag::labeled_source;
};

// ---------------------------------------------------------------------------
// Preprocessing

// Polyphase rational resampling with a Kaiser-windowed sinc low-pass. Each
// polyphase branch is normalized to unit DC gain.
Trial resample(const Trial& trial, int to_rate);

// Non-overlapping windows in temporal order; a trailing partial window is dropped.
std::vector<Sample> segment(const Trial& trial, double window_seconds, const Subject& owner,
                            DomainTag tag = DomainTag::labeled_source);

// Per-channel zero mean, unit variance over the time axis of a [C, P] sample.
// A constant channel becomes all zeros.
void zscore(Tensor& x);

struct PreprocessConfig {
  int target_rate = 0;  // 0 keeps the cohort rate
  double window_seconds = 1.0;
  bool zscore = true;
  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

// All samples of one subject after resampling, segmentation and optional z-scoring.
std::vector<Sample> subject_samples(const Subject& subject, const PreprocessConfig& config, DomainTag tag);

// ---------------------------------------------------------------------------
// Selection and splits

struct Quotas {
  std::size_t female = 18;
  std::size_t male = 12;
};

struct BalancedCohort {
  std::vector<std::string> dn_plus;   // sorted ids
  std::vector<std::string> dn_minus;
  std::uint64_t sampling_seed = 0;

  std::vector<std::string> all() const;
};

// Draws the quota of each gender x disease cell at random (whole cell when it
// holds exactly the quota).
BalancedCohort balanced_sample(const std::vector<Subject>& cohort, const Quotas& quotas, std::uint64_t seed);

struct Fold {
  std::vector<std::string> train;  // sorted
  std::vector<std::string> test;   // sorted
};

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;

  std::string digest() const;  // stable hash of the partition
};

// Stratified by disease x gender: each cell is shuffled and dealt round-robin,
// continuing the fold counter across cells.
FoldPlan make_folds(const std::vector<Subject>& cohort, const BalancedCohort& balanced, std::size_t k,
                    std::uint64_t seed);

struct DomainAssignment {
  std::set<std::string> labeled_source;
  std::set<std::string> unlabeled_source;
  std::set<std::string> target;
  double tau_percent = 100.0;

  DomainTag tag_of(const std::string& subject_id) const;  // throws for unknown ids
  void validate() const;                                  // pairwise disjoint
};

// |S_l| = floor(tau/100 * |train|); the rest becomes S_u. The target set is left empty.
DomainAssignment split_source(const std::vector<std::string>& train_subjects, double tau_percent, std::uint64_t seed);

// Domain classes: 3-way (S_l, S_u, T) or 2-way merged source (S_l + S_u, T).
int domain_class(DomainTag tag, bool merged_source);
Tensor domain_one_hot(std::span<const DomainTag> tags, bool merged_source);

// ---------------------------------------------------------------------------
// Files: manifest.json plus one little-endian float32 file per subject laid out
// [trials][channels][samples].

void save_cohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort load_cohort(const std::filesystem::path& manifest_or_dir);

}  // namespace nssi
