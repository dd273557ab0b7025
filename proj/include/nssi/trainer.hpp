#pragma once

// Semi-supervised adversarial training. Each step runs the generator once in
// training mode, updates the four heads on detached features, then updates the
// generator against the freshly updated heads:
//
//   L_G = alpha * (-mean ln D(G(x)) + lambda * recon) + theta * L_disease
//         + s * beta * L_gender - delta * L_disc
//
// with s = -1 in invariance mode and +1 in cooperative mode. A disabled head
// is neither trained nor part of L_G; the reconstruction term stays.

#include "nssi/cohort.hpp"
#include "nssi/generator.hpp"
#include "nssi/heads.hpp"
#include "nssi/losses.hpp"
#include "nssi/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nssi {

enum class AdversarialMode { invariance, cooperative };

struct BatchComposition {
  std::size_t labeled = 16;
  std::size_t unlabeled = 16;
  std::size_t target = 16;
  std::size_t total() const { return labeled + unlabeled + target; }
  friend bool operator==(const BatchComposition&, const BatchComposition&) = default;
};

struct HeadToggles {
  bool signal = true;
  bool gender = true;
  bool domain = true;
  bool merged_source = false;  // 2-way domain head: (S_l + S_u) vs T
  friend bool operator==(const HeadToggles&, const HeadToggles&) = default;
};

struct TrainConfig {
  double lr = 1e-3;
  BatchComposition batch;
  std::size_t epochs = 80;
  double l2 = 1e-5;
  double rms_decay = 0.99;
  double rms_epsilon = 1e-8;
  AdversarialMode gender_mode = AdversarialMode::invariance;
  HeadToggles heads;
  bool include_target = true;  // target-fold samples join the unsupervised terms
  std::size_t head_hidden = 64;
  double divergence_factor = 1e3;
  std::uint64_t seed = 1;

  void validate() const;
  RmspropConfig optimizer() const { return {lr, rms_decay, rms_epsilon, l2}; }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Model {
  Generator generator;
  HeadSet heads;
};

Model build_model(const GeneratorConfig& gen, const TrainConfig& train, std::uint64_t seed);

struct OptimizerState {
  RmspropState generator, signal, gender, domain, disease;
};
OptimizerState init_optimizer(const Model& model);

// One row of the loss curve. total = alpha*signal + beta*gender + delta*domain + theta*disease.
struct LossRecord {
  std::size_t epoch = 0;  // 1-based; 0 for a single step
  double signal = 0.0;    // -mean ln D(G(x)) + lambda * recon
  double gender = 0.0;
  double domain = 0.0;
  double disease = 0.0;
  double total = 0.0;
};

// Batch tensors and targets, rows in the order given.
struct StepInputs {
  Tensor x;                         // [B, 1, C, P]
  std::vector<double> male;         // 1 = male
  std::vector<int> domain;          // class index
  std::vector<double> disease;      // 1 = DN+, meaningful on labeled rows
  std::vector<double> labeled;      // 1 on S_l rows, 0 elsewhere
  std::vector<DomainTag> tags;
};
StepInputs assemble(const std::vector<const Sample*>& batch, bool merged_source);

struct HeadUpdate {
  GradientSet signal, gender, domain, disease;  // empty sets for disabled heads
  double signal_loss = 0.0, gender_loss = 0.0, domain_loss = 0.0, disease_loss = 0.0;
};
// Gradients of each head's own loss on detached generator outputs.
HeadUpdate head_gradients(const HeadSet& heads, const ForwardTrace& trace, const StepInputs& in,
                          const TrainConfig& config);

struct GeneratorObjective {
  Tensor d_reconstruction;
  Tensor d_flat;
  LossRecord record;
};
GeneratorObjective generator_objective(const HeadSet& heads, const ForwardTrace& trace, const StepInputs& in,
                                       const TrainConfig& config, const loss::Weights& weights);

LossRecord train_step(Model& model, OptimizerState& opt, const std::vector<const Sample*>& batch,
                      const TrainConfig& config, const loss::Weights& weights, std::uint64_t step_seed);

struct DomainData {
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
  std::vector<Sample> target;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Batches for one epoch. The epoch is one pass over the S_l samples; the S_u
// and T slots cycle through their own shuffled streams. An empty (or
// excluded) pool hands its slot to S_u, then to S_l.
std::vector<std::vector<const Sample*>> epoch_batches(const DomainData& data, const TrainConfig& config,
                                                      std::size_t epoch);

struct TrainResult {
  Model model;
  std::vector<LossRecord> curve;
};

using EpochCallback = std::function<void(const LossRecord&, const Model&)>;

TrainResult train(const DomainData& data, const GeneratorConfig& gen, const TrainConfig& config,
                  const loss::Weights& weights, const EpochCallback& on_epoch = {});

// DN+ probabilities, eval mode.
std::vector<double> predict(const Model& model, const std::vector<Sample>& samples, std::size_t chunk = 128);
// Frozen flat features [N, M*F], eval mode.
Tensor extract_features(const Model& model, const std::vector<Sample>& samples, std::size_t chunk = 128);

Tensor stack_samples(const std::vector<const Sample*>& samples);  // [B, 1, C, P]

void write_loss_csv(const std::vector<LossRecord>& curve, const std::filesystem::path& path);

}  // namespace nssi
