#pragma once

// Synthetic EEG cohorts with planted effects. Every channel carries 1/f
// background noise plus two band-limited oscillations (the class band and the
// gender band). The class-band oscillation is scaled by (1 + a) on the class
// channels of DN+ subjects, the gender-band oscillation by (1 + b) on the
// gender channels of the affected gender, so in-band oscillation power differs
// by (1 + a)^2 between groups. Each subject then gets per-channel gains and
// the channel mixing of its domain group.

#include "nssi/cohort.hpp"
#include "nssi/json_util.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nssi {

struct EffectSpec {
  std::vector<std::size_t> channels;  // 0-based
  double band_lo = 8.0;               // Hz
  double band_hi = 12.0;
  double amplitude = 0.0;
  friend bool operator==(const EffectSpec&, const EffectSpec&) = default;
};

struct SynthSpec {
  std::string name = "synthetic";
  std::size_t n_per_cell = 15;  // subjects per disease x gender cell
  std::size_t channels = 8;
  int rate = 128;
  std::size_t trials_per_subject = 2;
  double trial_seconds = 5.0;
  EffectSpec class_effect{{3}, 8.0, 12.0, 1.0};
  EffectSpec gender_effect{{6}, 16.0, 24.0, 1.0};
  Gender gender_effect_on = Gender::male;
  double oscillation_amplitude = 1.0;  // RMS of each band oscillation before scaling
  double subject_sigma = 0.1;          // log-normal spread of per-channel gains
  std::size_t domain_groups = 1;
  double domain_shift = 0.0;           // mixing = I + shift * R / sqrt(C), R standard normal
  double noise_exponent = 1.0;         // power spectrum ~ 1 / f^exponent
  double noise_amplitude = 1.0;        // RMS of the background
  std::vector<std::string> channel_names;  // empty: default_channel_names(channels)
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t trial_samples() const;
  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

struct SubjectTruth {
  std::string id;
  Gender gender = Gender::female;
  Disease disease = Disease::dn_minus;
  std::size_t domain_group = 0;
  std::vector<double> gains;         // per channel
  std::vector<double> class_scale;   // per channel, 1 or 1 + a
  std::vector<double> gender_scale;  // per channel, 1 or 1 + b
  friend bool operator==(const SubjectTruth&, const SubjectTruth&) = default;
};

struct PlantedGroundTruth {
  SynthSpec spec;
  std::vector<SubjectTruth> subjects;
  std::vector<std::vector<double>> mixing;  // per group, row-major [C, C]
  friend bool operator==(const PlantedGroundTruth&, const PlantedGroundTruth&) = default;
};

struct SynthResult {
  Cohort cohort;
  PlantedGroundTruth truth;
};

PlantedGroundTruth plant(const SynthSpec& spec);
SynthResult generate_cohort(const SynthSpec& spec);
// Noise drawn from `seed`; planted parameters taken from the ground truth.
Cohort rerender(const PlantedGroundTruth& truth, std::uint64_t seed);

json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const json& j, const std::string& path = "synth");
json to_json(const PlantedGroundTruth& truth);
PlantedGroundTruth ground_truth_from_json(const json& j);

// Cohort directory plus ground_truth.json.
void write_synthetic(const SynthResult& result, const std::filesystem::path& dir);
PlantedGroundTruth read_ground_truth(const std::filesystem::path& dir);

}  // namespace nssi
