#include "nssi/synthgen.hpp"

#include "nssi/rng.hpp"
#include "nssi/topography.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace nssi {

namespace {

void check_effect(const EffectSpec& e, const SynthSpec& spec, const char* what) {
  for (std::size_t c : e.channels) {
    if (c >= spec.channels) {
      throw std::invalid_argument(std::string(what) + ": channel " + std::to_string(c) + " out of range");
    }
  }
  if (!(e.amplitude >= 0) || !std::isfinite(e.amplitude)) {
    throw std::invalid_argument(std::string(what) + ": amplitude must be >= 0");
  }
  const double nyquist = spec.rate / 2.0;
  if (!(e.band_lo > 0 && e.band_lo < e.band_hi && e.band_hi < nyquist)) {
    throw std::invalid_argument(std::string(what) + ": band [" + std::to_string(e.band_lo) + ", " +
                                std::to_string(e.band_hi) + "] Hz must lie inside (0, " + std::to_string(nyquist) +
                                ") Hz");
  }
}

// Unit-variance (in expectation) real sequence whose spectrum is white noise
// times `shape(f)`.
template <typename Shape>
std::vector<double> shaped_noise(Rng& rng, std::size_t n, int rate, Shape shape) {
  static thread_local Eigen::FFT<double> fft;
  std::vector<double> white(n);
  for (auto& v : white) v = rng.normal();
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, white);
  double power = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double f = static_cast<double>(std::min(k, n - k)) * rate / static_cast<double>(n);
    const double s = shape(f);
    spec[k] *= s;
    power += s * s;
  }
  std::vector<double> out;
  fft.inv(out, spec);
  const double norm = power > 0 ? std::sqrt(static_cast<double>(n) / power) : 0.0;
  for (auto& v : out) v *= norm;
  return out;
}

std::vector<double> scales_for(const EffectSpec& e, std::size_t channels, bool active) {
  std::vector<double> s(channels, 1.0);
  if (active) {
    for (std::size_t c : e.channels) s[c] = 1.0 + e.amplitude;
  }
  return s;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_per_cell < 1 || channels < 1 || trials_per_subject < 1) throw std::invalid_argument("synth: counts must be >= 1");
  if (rate <= 0) throw std::invalid_argument("synth: rate must be positive");
  if (!(trial_seconds > 0)) throw std::invalid_argument("synth: trial_seconds must be positive");
  const double n = trial_seconds * rate;
  if (std::abs(n - std::round(n)) > 1e-9) throw std::invalid_argument("synth: trial length is not a whole number of samples");
  check_effect(class_effect, *this, "class_effect");
  check_effect(gender_effect, *this, "gender_effect");
  if (!(oscillation_amplitude >= 0) || !(subject_sigma >= 0) || !(domain_shift >= 0) || !(noise_amplitude >= 0)) {
    throw std::invalid_argument("synth: amplitudes must be >= 0");
  }
  if (noise_amplitude == 0 && oscillation_amplitude == 0) throw std::invalid_argument("synth: all amplitudes are zero");
  if (domain_groups < 1) throw std::invalid_argument("synth: domain_groups must be >= 1");
  if (!channel_names.empty() && channel_names.size() != channels) {
    throw std::invalid_argument("synth: channel_names has " + std::to_string(channel_names.size()) + " entries");
  }
}

std::size_t SynthSpec::trial_samples() const { return static_cast<std::size_t>(std::llround(trial_seconds * rate)); }

PlantedGroundTruth plant(const SynthSpec& spec) {
  spec.validate();
  PlantedGroundTruth gt;
  gt.spec = spec;
  if (gt.spec.channel_names.empty()) gt.spec.channel_names = default_channel_names(spec.channels);
  Rng rng(derive_seed(spec.seed, "plant"));
  const std::size_t C = spec.channels;

  std::size_t index = 0;
  for (Disease d : {Disease::dn_plus, Disease::dn_minus}) {
    for (Gender g : {Gender::female, Gender::male}) {
      // round-robin over a shuffled group order keeps groups balanced per cell
      std::vector<std::size_t> groups;
      for (std::size_t i = 0; i < spec.n_per_cell; ++i) groups.push_back(i % spec.domain_groups);
      rng.shuffle(groups);
      for (std::size_t i = 0; i < spec.n_per_cell; ++i) {
        SubjectTruth s;
        std::ostringstream id;
        id << "sub" << std::setw(3) << std::setfill('0') << ++index;
        s.id = id.str();
        s.gender = g;
        s.disease = d;
        s.domain_group = groups[i];
        for (std::size_t c = 0; c < C; ++c) s.gains.push_back(std::exp(spec.subject_sigma * rng.normal()));
        s.class_scale = scales_for(spec.class_effect, C, d == Disease::dn_plus);
        s.gender_scale = scales_for(spec.gender_effect, C, g == spec.gender_effect_on);
        gt.subjects.push_back(std::move(s));
      }
    }
  }
  for (std::size_t k = 0; k < spec.domain_groups; ++k) {
    std::vector<double> m(C * C, 0.0);
    for (std::size_t i = 0; i < C; ++i) {
      for (std::size_t j = 0; j < C; ++j) {
        m[i * C + j] = (i == j ? 1.0 : 0.0) + spec.domain_shift * rng.normal() / std::sqrt(static_cast<double>(C));
      }
    }
    gt.mixing.push_back(std::move(m));
  }
  return gt;
}

Cohort rerender(const PlantedGroundTruth& gt, std::uint64_t seed) {
  const SynthSpec& spec = gt.spec;
  spec.validate();
  const std::size_t C = spec.channels, N = spec.trial_samples();
  if (gt.mixing.size() != spec.domain_groups) throw std::invalid_argument("ground truth: mixing count mismatch");
  Cohort cohort{spec.name, spec.rate, C, gt.spec.channel_names, {}};
  if (cohort.channel_names.empty()) cohort.channel_names = default_channel_names(C);

  const double exponent = spec.noise_exponent;
  auto pink = [exponent](double f) { return f > 0 ? std::pow(f, -exponent / 2.0) : 0.0; };
  auto band = [](const EffectSpec& e) { return [&e](double f) { return f >= e.band_lo && f <= e.band_hi ? 1.0 : 0.0; }; };

  for (const SubjectTruth& st : gt.subjects) {
    if (st.gains.size() != C || st.class_scale.size() != C || st.gender_scale.size() != C ||
        st.domain_group >= gt.mixing.size()) {
      throw std::invalid_argument("ground truth: malformed entry for subject '" + st.id + "'");
    }
    Subject subject{st.id, st.gender, st.disease, {}};
    const std::vector<double>& mix = gt.mixing[st.domain_group];
    for (std::size_t t = 0; t < spec.trials_per_subject; ++t) {
      Rng rng(derive_seed(seed, "trial:" + st.id, t));
      std::vector<double> source(C * N);
      for (std::size_t c = 0; c < C; ++c) {
        const auto noise = shaped_noise(rng, N, spec.rate, pink);
        const auto osc_class = shaped_noise(rng, N, spec.rate, band(spec.class_effect));
        const auto osc_gender = shaped_noise(rng, N, spec.rate, band(spec.gender_effect));
        for (std::size_t i = 0; i < N; ++i) {
          source[c * N + i] =
              st.gains[c] * (spec.noise_amplitude * noise[i] +
                             spec.oscillation_amplitude * (st.class_scale[c] * osc_class[i] + st.gender_scale[c] * osc_gender[i]));
        }
      }
      Trial trial{C, spec.rate, std::vector<float>(C * N)};
      for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t n = 0; n < N; ++n) {
          double acc = 0.0;
          for (std::size_t j = 0; j < C; ++j) acc += mix[i * C + j] * source[j * N + n];
          trial.data[i * N + n] = static_cast<float>(acc);
        }
      }
      subject.trials.push_back(std::move(trial));
    }
    cohort.subjects.push_back(std::move(subject));
  }
  cohort.validate();
  return cohort;
}

SynthResult generate_cohort(const SynthSpec& spec) {
  PlantedGroundTruth gt = plant(spec);
  Cohort cohort = rerender(gt, spec.seed);
  return {std::move(cohort), std::move(gt)};
}

// ---------------------------------------------------------------------------

namespace {

json effect_json(const EffectSpec& e) {
  return {{"channels", e.channels}, {"band_hz", {e.band_lo, e.band_hi}}, {"amplitude", e.amplitude}};
}

EffectSpec effect_from(const json& j, const std::string& path, EffectSpec e) {
  JsonReader r(j, path);
  r.get("channels", e.channels);
  std::vector<double> band{e.band_lo, e.band_hi};
  r.get("band_hz", band);
  if (band.size() != 2) throw ConfigError(r.label("band_hz") + ": expected [lo, hi]");
  e.band_lo = band[0];
  e.band_hi = band[1];
  r.get("amplitude", e.amplitude);
  r.finish();
  return e;
}

}  // namespace

json to_json(const SynthSpec& s) {
  return {{"name", s.name},
          {"n_per_cell", s.n_per_cell},
          {"channels", s.channels},
          {"rate", s.rate},
          {"trials_per_subject", s.trials_per_subject},
          {"trial_seconds", s.trial_seconds},
          {"class_effect", effect_json(s.class_effect)},
          {"gender_effect", effect_json(s.gender_effect)},
          {"gender_effect_on", to_string(s.gender_effect_on)},
          {"oscillation_amplitude", s.oscillation_amplitude},
          {"subject_sigma", s.subject_sigma},
          {"domain_groups", s.domain_groups},
          {"domain_shift", s.domain_shift},
          {"noise_exponent", s.noise_exponent},
          {"noise_amplitude", s.noise_amplitude},
          {"channel_names", s.channel_names},
          {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const json& j, const std::string& path) {
  SynthSpec s;
  JsonReader r(j, path);
  r.get("name", s.name);
  r.get("n_per_cell", s.n_per_cell);
  r.get("channels", s.channels);
  r.get("rate", s.rate);
  r.get("trials_per_subject", s.trials_per_subject);
  r.get("trial_seconds", s.trial_seconds);
  if (const json* e = r.raw("class_effect")) s.class_effect = effect_from(*e, r.label("class_effect"), s.class_effect);
  if (const json* e = r.raw("gender_effect")) s.gender_effect = effect_from(*e, r.label("gender_effect"), s.gender_effect);
  std::string on = to_string(s.gender_effect_on);
  r.get("gender_effect_on", on);
  try {
    s.gender_effect_on = parse_gender(on);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.label("gender_effect_on") + ": " + e.what());
  }
  r.get("oscillation_amplitude", s.oscillation_amplitude);
  r.get("subject_sigma", s.subject_sigma);
  r.get("domain_groups", s.domain_groups);
  r.get("domain_shift", s.domain_shift);
  r.get("noise_exponent", s.noise_exponent);
  r.get("noise_amplitude", s.noise_amplitude);
  r.get("channel_names", s.channel_names);
  r.get("seed", s.seed);
  r.finish();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return s;
}

json to_json(const PlantedGroundTruth& gt) {
  json subjects = json::array();
  for (const auto& s : gt.subjects) {
    subjects.push_back({{"id", s.id},
                        {"gender", to_string(s.gender)},
                        {"disease", to_string(s.disease)},
                        {"domain_group", s.domain_group},
                        {"gains", s.gains},
                        {"class_scale", s.class_scale},
                        {"gender_scale", s.gender_scale}});
  }
  return {{"spec", to_json(gt.spec)}, {"subjects", subjects}, {"mixing", gt.mixing}};
}

PlantedGroundTruth ground_truth_from_json(const json& j) {
  PlantedGroundTruth gt;
  try {
    gt.spec = synth_spec_from_json(j.at("spec"), "ground_truth.spec");
    for (const auto& js : j.at("subjects")) {
      SubjectTruth s;
      s.id = js.at("id").get<std::string>();
      s.gender = parse_gender(js.at("gender").get<std::string>());
      s.disease = parse_disease(js.at("disease").get<std::string>());
      s.domain_group = js.at("domain_group").get<std::size_t>();
      s.gains = js.at("gains").get<std::vector<double>>();
      s.class_scale = js.at("class_scale").get<std::vector<double>>();
      s.gender_scale = js.at("gender_scale").get<std::vector<double>>();
      gt.subjects.push_back(std::move(s));
    }
    gt.mixing = j.at("mixing").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ground_truth: ") + e.what());
  }
  return gt;
}

void write_synthetic(const SynthResult& result, const std::filesystem::path& dir) {
  save_cohort(result.cohort, dir);
  std::ofstream out(dir / "ground_truth.json");
  out << to_json(result.truth).dump(1) << '\n';
  if (!out) throw std::runtime_error("cannot write " + (dir / "ground_truth.json").string());
}

PlantedGroundTruth read_ground_truth(const std::filesystem::path& dir) {
  std::ifstream in(dir / "ground_truth.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "ground_truth.json").string());
  return ground_truth_from_json(json::parse(in));
}

}  // namespace nssi
