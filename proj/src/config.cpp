#include "nssi/config.hpp"

#include "nssi/rng.hpp"

#include <cmath>
#include <fstream>

namespace nssi {

namespace {

template <typename F>
auto checked(const std::string& path, F f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string mode_name(AdversarialMode m) { return m == AdversarialMode::invariance ? "invariance" : "cooperative"; }

}  // namespace

json to_json(const GeneratorConfig& c) {
  return {{"channels", c.channels}, {"points", c.points},       {"f1", c.f1},
          {"f2", c.f2},             {"pool1", c.pool1},         {"pool2", c.pool2},
          {"gru_hidden", c.gru_hidden}, {"feature_width", c.feature_width}, {"dropout", c.dropout},
          {"bn_momentum", c.bn_momentum}, {"bn_eps", c.bn_eps}};
}

GeneratorConfig generator_config_from_json(const json& j, const std::string& path) {
  GeneratorConfig c;
  JsonReader r(j, path);
  r.get("channels", c.channels);
  r.get("points", c.points);
  r.get("f1", c.f1);
  r.get("f2", c.f2);
  r.get("pool1", c.pool1);
  r.get("pool2", c.pool2);
  r.get("gru_hidden", c.gru_hidden);
  r.get("feature_width", c.feature_width);
  r.get("dropout", c.dropout);
  r.get("bn_momentum", c.bn_momentum);
  r.get("bn_eps", c.bn_eps);
  r.finish();
  checked(path, [&] { c.validate(); return 0; });
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch", {{"labeled", c.batch.labeled}, {"unlabeled", c.batch.unlabeled}, {"target", c.batch.target}}},
          {"epochs", c.epochs},
          {"l2", c.l2},
          {"rms_decay", c.rms_decay},
          {"rms_epsilon", c.rms_epsilon},
          {"gender_mode", mode_name(c.gender_mode)},
          {"heads",
           {{"signal", c.heads.signal},
            {"gender", c.heads.gender},
            {"domain", c.heads.domain},
            {"merged_source", c.heads.merged_source}}},
          {"include_target", c.include_target},
          {"head_hidden", c.head_hidden},
          {"divergence_factor", c.divergence_factor},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
  TrainConfig c;
  JsonReader r(j, path);
  r.get("lr", c.lr);
  if (r.has("batch")) {
    JsonReader b = r.child("batch");
    b.get("labeled", c.batch.labeled);
    b.get("unlabeled", c.batch.unlabeled);
    b.get("target", c.batch.target);
    b.finish();
  }
  r.get("epochs", c.epochs);
  r.get("l2", c.l2);
  r.get("rms_decay", c.rms_decay);
  r.get("rms_epsilon", c.rms_epsilon);
  std::string mode = mode_name(c.gender_mode);
  r.get("gender_mode", mode);
  if (mode == "invariance") {
    c.gender_mode = AdversarialMode::invariance;
  } else if (mode == "cooperative") {
    c.gender_mode = AdversarialMode::cooperative;
  } else {
    throw ConfigError(r.label("gender_mode") + ": expected 'invariance' or 'cooperative', got '" + mode + "'");
  }
  if (r.has("heads")) {
    JsonReader h = r.child("heads");
    h.get("signal", c.heads.signal);
    h.get("gender", c.heads.gender);
    h.get("domain", c.heads.domain);
    h.get("merged_source", c.heads.merged_source);
    h.finish();
  }
  r.get("include_target", c.include_target);
  r.get("head_hidden", c.head_hidden);
  r.get("divergence_factor", c.divergence_factor);
  r.get("seed", c.seed);
  r.finish();
  checked(path, [&] { c.validate(); return 0; });
  return c;
}

json to_json(const loss::Weights& w) {
  return {{"alpha", w.alpha}, {"beta", w.beta}, {"delta", w.delta}, {"theta", w.theta}, {"lambda", w.lambda}};
}

loss::Weights weights_from_json(const json& j, const std::string& path) {
  loss::Weights w;
  JsonReader r(j, path);
  r.get("alpha", w.alpha);
  r.get("beta", w.beta);
  r.get("delta", w.delta);
  r.get("theta", w.theta);
  r.get("lambda", w.lambda);
  r.finish();
  checked(path, [&] { w.validate(); return 0; });
  return w;
}

json to_json(const PreprocessConfig& c) {
  return {{"target_rate", c.target_rate}, {"window_seconds", c.window_seconds}, {"zscore", c.zscore}};
}

PreprocessConfig preprocess_from_json(const json& j, const std::string& path) {
  PreprocessConfig c;
  JsonReader r(j, path);
  r.get("target_rate", c.target_rate);
  r.get("window_seconds", c.window_seconds);
  r.get("zscore", c.zscore);
  r.finish();
  if (c.target_rate < 0) throw ConfigError(r.label("target_rate") + ": must be >= 0");
  if (!(c.window_seconds > 0)) throw ConfigError(r.label("window_seconds") + ": must be positive");
  return c;
}

void ExperimentConfig::validate() const {
  if (cv.k < 2) throw ConfigError("cv.k: must be >= 2");
  if (!(cv.tau > 0 && cv.tau <= 100)) throw ConfigError("cv.tau: must lie in (0, 100]");
  for (double t : sweeps.tau_list) {
    if (!(t > 0 && t <= 100)) throw ConfigError("sweeps.tau_list: " + std::to_string(t) + " outside (0, 100]");
  }
  for (const auto& w : sweeps.weight_ratios) {
    for (double v : w) {
      if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("sweeps.weight_ratios: weights must be >= 0");
    }
  }
  if (sweeps.sampling_rounds < 2) throw ConfigError("sweeps.sampling_rounds: must be >= 2");
  if (!sweeps.sampling_seeds.empty() && sweeps.sampling_seeds.size() != sweeps.sampling_rounds) {
    throw ConfigError("sweeps.sampling_seeds: need one seed per round");
  }
  if (sweeps.channel_epochs < 1) throw ConfigError("sweeps.channel_epochs: must be >= 1");
  if (cohort.path.empty()) {
    if (generator.channels != synth.channels) {
      throw ConfigError("generator.channels (" + std::to_string(generator.channels) + ") differs from synth.channels (" +
                        std::to_string(synth.channels) + ")");
    }
    const int rate = preprocess.target_rate > 0 ? preprocess.target_rate : synth.rate;
    const double points = preprocess.window_seconds * rate;
    if (std::abs(points - static_cast<double>(generator.points)) > 1e-9) {
      throw ConfigError("generator.points (" + std::to_string(generator.points) + ") differs from window length " +
                        std::to_string(points));
    }
    if (cohort.quotas.female > synth.n_per_cell || cohort.quotas.male > synth.n_per_cell) {
      throw ConfigError("cohort.quotas exceed synth.n_per_cell");
    }
  }
}

json to_json(const ExperimentConfig& c) {
  json ratios = json::array();
  for (const auto& w : c.sweeps.weight_ratios) ratios.push_back(std::vector<double>(w.begin(), w.end()));
  return {{"synth", to_json(c.synth)},
          {"cohort",
           {{"path", c.cohort.path},
            {"quotas", {{"female", c.cohort.quotas.female}, {"male", c.cohort.quotas.male}}},
            {"sampling_seed", c.cohort.sampling_seed}}},
          {"preprocess", to_json(c.preprocess)},
          {"generator", to_json(c.generator)},
          {"train", to_json(c.train)},
          {"weights", to_json(c.weights)},
          {"cv", {{"k", c.cv.k}, {"tau", c.cv.tau}, {"seed", c.cv.seed}, {"subject_vote", c.cv.subject_vote}}},
          {"sweeps",
           {{"tau_list", c.sweeps.tau_list},
            {"weight_ratios", ratios},
            {"ablation_variants", c.sweeps.ablation_variants},
            {"sampling_rounds", c.sweeps.sampling_rounds},
            {"sampling_seeds", c.sweeps.sampling_seeds},
            {"channel_epochs", c.sweeps.channel_epochs}}}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  JsonReader r(j, "");
  if (const json* s = r.raw("synth")) c.synth = synth_spec_from_json(*s, "synth");
  if (r.has("cohort")) {
    JsonReader k = r.child("cohort");
    k.get("path", c.cohort.path);
    if (k.has("quotas")) {
      JsonReader q = k.child("quotas");
      q.get("female", c.cohort.quotas.female);
      q.get("male", c.cohort.quotas.male);
      q.finish();
    }
    k.get("sampling_seed", c.cohort.sampling_seed);
    k.finish();
  }
  if (const json* s = r.raw("preprocess")) c.preprocess = preprocess_from_json(*s, "preprocess");
  if (const json* s = r.raw("generator")) c.generator = generator_config_from_json(*s, "generator");
  if (const json* s = r.raw("train")) c.train = train_config_from_json(*s, "train");
  if (const json* s = r.raw("weights")) c.weights = weights_from_json(*s, "weights");
  if (r.has("cv")) {
    JsonReader v = r.child("cv");
    v.get("k", c.cv.k);
    v.get("tau", c.cv.tau);
    v.get("seed", c.cv.seed);
    v.get("subject_vote", c.cv.subject_vote);
    v.finish();
  }
  if (r.has("sweeps")) {
    JsonReader s = r.child("sweeps");
    s.get("tau_list", c.sweeps.tau_list);
    std::vector<std::vector<double>> ratios;
    if (s.has("weight_ratios")) {
      s.get("weight_ratios", ratios);
      c.sweeps.weight_ratios.clear();
      for (const auto& w : ratios) {
        if (w.size() != 4) throw ConfigError("sweeps.weight_ratios: each entry needs 4 weights (alpha, beta, delta, theta)");
        c.sweeps.weight_ratios.push_back({w[0], w[1], w[2], w[3]});
      }
    }
    s.get("ablation_variants", c.sweeps.ablation_variants);
    s.get("sampling_rounds", c.sweeps.sampling_rounds);
    s.get("sampling_seeds", c.sweeps.sampling_seeds);
    s.get("channel_epochs", c.sweeps.channel_epochs);
    s.finish();
  }
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("command") && j.contains("config")) return experiment_from_json(j.at("config"));
  return experiment_from_json(j);
}

void apply_root_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.synth.seed = derive_seed(seed, "synth");
  c.cohort.sampling_seed = derive_seed(seed, "sampling");
  c.train.seed = derive_seed(seed, "train");
  c.cv.seed = derive_seed(seed, "cv");
}

}  // namespace nssi
