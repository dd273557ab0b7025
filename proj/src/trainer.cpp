#include "nssi/trainer.hpp"

#include "nssi/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace nssi {

namespace {

Tensor flatten_rows(const Tensor& t) { return t.reshaped({t.dim(0), t.size() / t.dim(0)}); }

void add_into(Tensor& acc, const Tensor& t, double scale) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * t[i];
}

struct HeadPass {
  double value = 0.0;
  MlpCache cache;
  loss::LogitLoss l;
};

HeadPass binary_pass(const MlpHead& head, const Tensor& in, std::span<const double> target, loss::Reduction red,
                     std::span<const double> mask = {}) {
  HeadPass p;
  const Tensor logits = head.forward(in, p.cache);
  p.l = loss::binary_logits(logits, target, red, mask);
  p.value = p.l.value;
  return p;
}

HeadPass softmax_pass(const MlpHead& head, const Tensor& in, std::span<const int> label) {
  HeadPass p;
  const Tensor logits = head.forward(in, p.cache);
  p.l = loss::softmax_logits(logits, label, loss::Reduction::sum);
  p.value = p.l.value;
  return p;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("train: lr must be positive");
  if (batch.total() == 0) throw std::invalid_argument("train: empty batch");
  if (batch.labeled == 0) throw std::invalid_argument("train: batch needs at least one labeled slot");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(l2 >= 0)) throw std::invalid_argument("train: l2 must be >= 0");
  if (!(rms_decay >= 0 && rms_decay < 1)) throw std::invalid_argument("train: rms_decay must lie in [0, 1)");
  if (!(rms_epsilon > 0)) throw std::invalid_argument("train: rms_epsilon must be positive");
  if (head_hidden < 1) throw std::invalid_argument("train: head_hidden must be >= 1");
  if (!(divergence_factor > 1)) throw std::invalid_argument("train: divergence_factor must exceed 1");
}

Model build_model(const GeneratorConfig& gen, const TrainConfig& train, std::uint64_t seed) {
  gen.validate();
  Generator g(gen, derive_seed(seed, "generator"));
  HeadSet h = make_heads(gen.signal_size(), gen.flat_size(), train.heads.merged_source ? 2 : 3, train.head_hidden,
                         derive_seed(seed, "heads"));
  return {std::move(g), std::move(h)};
}

OptimizerState init_optimizer(const Model& m) {
  return {rmsprop_init(m.generator.params()), rmsprop_init(m.heads.signal.params()),
          rmsprop_init(m.heads.gender.params()), rmsprop_init(m.heads.domain.params()),
          rmsprop_init(m.heads.disease.params())};
}

Tensor stack_samples(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("stack_samples: empty batch");
  const Shape& s = samples.front()->x.shape();
  if (s.size() != 2) throw std::invalid_argument("stack_samples: samples must be [C, P]");
  Tensor x({samples.size(), 1, s[0], s[1]});
  const std::size_t n = s[0] * s[1];
  for (std::size_t b = 0; b < samples.size(); ++b) {
    if (samples[b]->x.shape() != s) throw std::invalid_argument("stack_samples: mixed sample shapes");
    std::copy(samples[b]->x.data(), samples[b]->x.data() + n, x.data() + b * n);
  }
  return x;
}

StepInputs assemble(const std::vector<const Sample*>& batch, bool merged_source) {
  StepInputs in;
  in.x = stack_samples(batch);
  for (const Sample* s : batch) {
    in.male.push_back(s->gender == Gender::male ? 1.0 : 0.0);
    in.domain.push_back(domain_class(s->tag, merged_source));
    in.disease.push_back(s->disease == Disease::dn_plus ? 1.0 : 0.0);
    in.labeled.push_back(s->tag == DomainTag::labeled_source ? 1.0 : 0.0);
    in.tags.push_back(s->tag);
  }
  return in;
}

HeadUpdate head_gradients(const HeadSet& heads, const ForwardTrace& trace, const StepInputs& in,
                          const TrainConfig& config) {
  HeadUpdate u;
  const std::size_t B = in.male.size();
  if (config.heads.signal) {
    const std::vector<double> ones(B, 1.0), zeros(B, 0.0);
    HeadPass real = binary_pass(heads.signal, flatten_rows(trace.input), ones, loss::Reduction::mean);
    HeadPass fake = binary_pass(heads.signal, flatten_rows(trace.reconstruction), zeros, loss::Reduction::mean);
    u.signal = heads.signal.backward(real.cache, real.l.d_logits).grads;
    u.signal.add_scaled(heads.signal.backward(fake.cache, fake.l.d_logits).grads, 1.0);
    u.signal_loss = real.value + fake.value;
  }
  if (config.heads.gender) {
    HeadPass p = binary_pass(heads.gender, trace.flat, in.male, loss::Reduction::sum);
    u.gender = heads.gender.backward(p.cache, p.l.d_logits).grads;
    u.gender_loss = p.value;
  }
  if (config.heads.domain) {
    HeadPass p = softmax_pass(heads.domain, trace.flat, in.domain);
    u.domain = heads.domain.backward(p.cache, p.l.d_logits).grads;
    u.domain_loss = p.value;
  }
  HeadPass p = binary_pass(heads.disease, trace.flat, in.disease, loss::Reduction::sum, in.labeled);
  u.disease = heads.disease.backward(p.cache, p.l.d_logits).grads;
  u.disease_loss = p.value;
  return u;
}

GeneratorObjective generator_objective(const HeadSet& heads, const ForwardTrace& trace, const StepInputs& in,
                                       const TrainConfig& config, const loss::Weights& w) {
  const std::size_t B = in.male.size();
  GeneratorObjective g;
  LossRecord& r = g.record;

  const double recon = loss::reconstruction(trace.input, trace.reconstruction);
  g.d_reconstruction = loss::reconstruction_grad(trace.input, trace.reconstruction);
  for (auto& v : g.d_reconstruction.storage()) v *= w.alpha * w.lambda;
  r.signal = w.lambda * recon;
  if (config.heads.signal) {
    const std::vector<double> ones(B, 1.0);
    HeadPass p = binary_pass(heads.signal, flatten_rows(trace.reconstruction), ones, loss::Reduction::mean);
    r.signal += p.value;
    const Tensor d_in = heads.signal.backward(p.cache, p.l.d_logits).d_input;
    add_into(g.d_reconstruction, d_in, w.alpha);
  }

  g.d_flat = Tensor(trace.flat.shape());
  {
    HeadPass p = binary_pass(heads.disease, trace.flat, in.disease, loss::Reduction::sum, in.labeled);
    r.disease = p.value;
    add_into(g.d_flat, heads.disease.backward(p.cache, p.l.d_logits).d_input, w.theta);
  }
  if (config.heads.gender) {
    HeadPass p = binary_pass(heads.gender, trace.flat, in.male, loss::Reduction::sum);
    r.gender = p.value;
    const double sign = config.gender_mode == AdversarialMode::invariance ? -1.0 : 1.0;
    add_into(g.d_flat, heads.gender.backward(p.cache, p.l.d_logits).d_input, sign * w.beta);
  }
  if (config.heads.domain) {
    HeadPass p = softmax_pass(heads.domain, trace.flat, in.domain);
    r.domain = p.value;
    add_into(g.d_flat, heads.domain.backward(p.cache, p.l.d_logits).d_input, -w.delta);
  }
  r.total = loss::total({r.signal, r.gender, r.domain, r.disease}, w);
  return g;
}

LossRecord train_step(Model& model, OptimizerState& opt, const std::vector<const Sample*>& batch,
                      const TrainConfig& config, const loss::Weights& weights, std::uint64_t step_seed) {
  const StepInputs in = assemble(batch, config.heads.merged_source);
  const ForwardTrace trace = model.generator.forward(in.x, Mode::train, step_seed);
  const RmspropConfig oc = config.optimizer();

  HeadUpdate hu = head_gradients(model.heads, trace, in, config);
  if (config.heads.signal) rmsprop_step(model.heads.signal.params(), hu.signal, opt.signal, oc);
  if (config.heads.gender) rmsprop_step(model.heads.gender.params(), hu.gender, opt.gender, oc);
  if (config.heads.domain) rmsprop_step(model.heads.domain.params(), hu.domain, opt.domain, oc);
  rmsprop_step(model.heads.disease.params(), hu.disease, opt.disease, oc);

  GeneratorObjective obj = generator_objective(model.heads, trace, in, config, weights);
  const GradientSet grads = model.generator.backward(trace, &obj.d_reconstruction, &obj.d_flat);
  rmsprop_step(model.generator.params(), grads, opt.generator, oc);
  model.generator.commit_statistics(trace);
  return obj.record;
}

std::vector<std::vector<const Sample*>> epoch_batches(const DomainData& data, const TrainConfig& config,
                                                      std::size_t epoch) {
  if (data.labeled.empty()) throw std::invalid_argument("train: no labeled-source samples");
  std::size_t n_l = config.batch.labeled, n_u = config.batch.unlabeled, n_t = config.batch.target;
  const bool have_u = !data.unlabeled.empty();
  const bool have_t = config.include_target && !data.target.empty();
  if (!have_t) {
    (have_u ? n_u : n_l) += n_t;
    n_t = 0;
  }
  if (!have_u) {
    n_l += n_u;
    n_u = 0;
  }

  Rng rng(derive_seed(config.seed, "epoch", epoch));
  auto order = [&rng](std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    return idx;
  };
  struct Stream {
    const std::vector<Sample>* pool;
    std::vector<std::size_t> perm;
    std::size_t pos = 0;
  };
  auto draw = [&order](Stream& s) {
    if (s.pos == s.perm.size()) {
      s.perm = order(s.pool->size());
      s.pos = 0;
    }
    return &(*s.pool)[s.perm[s.pos++]];
  };

  const std::vector<std::size_t> labeled = order(data.labeled.size());
  Stream su{&data.unlabeled, have_u ? order(data.unlabeled.size()) : std::vector<std::size_t>{}};
  Stream st{&data.target, have_t ? order(data.target.size()) : std::vector<std::size_t>{}};

  const std::size_t steps = (labeled.size() + n_l - 1) / n_l;
  std::vector<std::vector<const Sample*>> out(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    auto& b = out[s];
    for (std::size_t j = 0; j < n_l; ++j) b.push_back(&data.labeled[labeled[(s * n_l + j) % labeled.size()]]);
    for (std::size_t j = 0; j < n_u; ++j) b.push_back(draw(su));
    for (std::size_t j = 0; j < n_t; ++j) b.push_back(draw(st));
  }
  return out;
}

TrainResult train(const DomainData& data, const GeneratorConfig& gen, const TrainConfig& config,
                  const loss::Weights& weights, const EpochCallback& on_epoch) {
  config.validate();
  weights.validate();
  TrainResult result{build_model(gen, config, derive_seed(config.seed, "model")), {}};
  OptimizerState opt = init_optimizer(result.model);
  double initial = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = epoch_batches(data, config, epoch);
    LossRecord mean;
    mean.epoch = epoch;
    for (const auto& batch : batches) {
      const LossRecord r = train_step(result.model, opt, batch, config, weights, derive_seed(config.seed, "step", step++));
      if (!std::isfinite(r.total)) throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch));
      if (std::isnan(initial)) initial = std::abs(r.total);
      if (std::abs(r.total) > config.divergence_factor * std::max(initial, 1e-12)) {
        throw TrainingDiverged("total loss " + std::to_string(r.total) + " exceeds " +
                               std::to_string(config.divergence_factor) + " x its initial value " +
                               std::to_string(initial) + " at epoch " + std::to_string(epoch));
      }
      mean.signal += r.signal;
      mean.gender += r.gender;
      mean.domain += r.domain;
      mean.disease += r.disease;
    }
    const double n = static_cast<double>(batches.size());
    mean.signal /= n;
    mean.gender /= n;
    mean.domain /= n;
    mean.disease /= n;
    mean.total = loss::total({mean.signal, mean.gender, mean.domain, mean.disease}, weights);
    result.curve.push_back(mean);
    if (on_epoch) on_epoch(mean, result.model);
  }
  return result;
}

namespace {

template <typename F>
void for_chunks(const Model& model, const std::vector<Sample>& samples, std::size_t chunk, F f) {
  if (chunk == 0) throw std::invalid_argument("chunk must be positive");
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    std::vector<const Sample*> part;
    for (std::size_t i = start; i < std::min(samples.size(), start + chunk); ++i) part.push_back(&samples[i]);
    const ForwardTrace tr = model.generator.forward(stack_samples(part), Mode::eval);
    f(start, tr);
  }
}

}  // namespace

std::vector<double> predict(const Model& model, const std::vector<Sample>& samples, std::size_t chunk) {
  std::vector<double> out;
  for_chunks(model, samples, chunk, [&](std::size_t, const ForwardTrace& tr) {
    MlpCache cache;
    const Tensor logits = model.heads.disease.forward(tr.flat, cache);
    for (std::size_t i = 0; i < logits.size(); ++i) out.push_back(loss::sigmoid(logits[i]));
  });
  return out;
}

Tensor extract_features(const Model& model, const std::vector<Sample>& samples, std::size_t chunk) {
  const std::size_t width = model.generator.config().flat_size();
  Tensor out({samples.size(), width});
  for_chunks(model, samples, chunk, [&](std::size_t start, const ForwardTrace& tr) {
    std::copy(tr.flat.data(), tr.flat.data() + tr.flat.size(), out.data() + start * width);
  });
  return out;
}

void write_loss_csv(const std::vector<LossRecord>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,L_signal,L_gender,L_disc,L_disease,total\n";
  char buf[512];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.signal, r.gender, r.domain,
                  r.disease, r.total);
    out << buf;
  }
}

}  // namespace nssi
