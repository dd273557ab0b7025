#include "nssi/cohort.hpp"

#include "nssi/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace nssi {

static_assert(std::endian::native == std::endian::little, "cohort files are written in host order");

namespace {

using json = nlohmann::json;

std::runtime_error cohort_error(const std::string& what) { return std::runtime_error("cohort: " + what); }

const Subject& find_subject(const std::vector<Subject>& subjects, const std::string& id) {
  for (const auto& s : subjects) {
    if (s.id == id) return s;
  }
  throw cohort_error("unknown subject '" + id + "'");
}

}  // namespace

std::string to_string(Gender g) { return g == Gender::male ? "male" : "female"; }
std::string to_string(Disease d) { return d == Disease::dn_plus ? "DN+" : "DN-"; }
std::string to_string(DomainTag t) {
  switch (t) {
    case DomainTag::labeled_source: return "S_l";
    case DomainTag::unlabeled_source: return "S_u";
    case DomainTag::target: return "T";
  }
  return "?";
}

Gender parse_gender(const std::string& s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  throw std::invalid_argument("unknown gender '" + s + "'");
}

Disease parse_disease(const std::string& s) {
  if (s == "DN+") return Disease::dn_plus;
  if (s == "DN-") return Disease::dn_minus;
  throw std::invalid_argument("unknown disease label '" + s + "'");
}

void Trial::validate() const {
  if (channels == 0) throw cohort_error("trial with zero channels");
  if (rate <= 0) throw cohort_error("trial with non-positive rate");
  if (data.size() % channels != 0) throw cohort_error("trial data is not a whole number of channel rows");
  for (float v : data) {
    if (!std::isfinite(v)) throw cohort_error("non-finite value in trial");
  }
}

const Subject& Cohort::subject(const std::string& id) const { return find_subject(subjects, id); }

void Cohort::validate() const {
  if (channels == 0 || rate <= 0) throw cohort_error("channels and rate must be positive");
  if (!channel_names.empty() && channel_names.size() != channels) {
    throw cohort_error(std::to_string(channel_names.size()) + " channel names for " + std::to_string(channels) +
                       " channels");
  }
  std::unordered_set<std::string> ids;
  for (const auto& s : subjects) {
    if (s.id.empty()) throw cohort_error("empty subject id");
    if (!ids.insert(s.id).second) throw cohort_error("duplicate subject id '" + s.id + "'");
    for (std::size_t t = 0; t < s.trials.size(); ++t) {
      const Trial& tr = s.trials[t];
      const std::string where = "subject '" + s.id + "' trial " + std::to_string(t);
      if (tr.channels != channels) {
        throw cohort_error(where + ": " + std::to_string(tr.channels) + " channels, expected " +
                           std::to_string(channels));
      }
      if (tr.rate != rate) throw cohort_error(where + ": rate " + std::to_string(tr.rate));
      try {
        tr.validate();
      } catch (const std::exception& e) {
        throw cohort_error(where + ": " + e.what());
      }
    }
  }
}

// ---------------------------------------------------------------------------

Trial resample(const Trial& trial, int to_rate) {
  trial.validate();
  if (to_rate <= 0) throw std::invalid_argument("resample: target rate must be positive");
  if (to_rate > trial.rate) throw std::invalid_argument("resample: upsampling is not supported");
  if (to_rate == trial.rate) return trial;
  const std::size_t n_in = trial.samples();
  if ((n_in * static_cast<std::size_t>(to_rate)) % static_cast<std::size_t>(trial.rate) != 0) {
    throw std::invalid_argument("resample: " + std::to_string(n_in) + " samples at " + std::to_string(trial.rate) +
                                " Hz do not map to an integer length at " + std::to_string(to_rate) + " Hz");
  }
  const std::size_t n_out = n_in * static_cast<std::size_t>(to_rate) / static_cast<std::size_t>(trial.rate);
  const std::size_t g = std::gcd(trial.rate, to_rate);
  const std::size_t up = static_cast<std::size_t>(to_rate) / g;
  const std::size_t down = static_cast<std::size_t>(trial.rate) / g;

  // Low-pass at the lower of the two Nyquist rates, on the upsampled grid.
  constexpr std::size_t kZeroCrossings = 10;
  constexpr double kBeta = 5.0;
  const std::size_t half = kZeroCrossings * std::max(up, down);
  const double cutoff = 0.5 / static_cast<double>(std::max(up, down));
  std::vector<double> h(2 * half + 1);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double m = static_cast<double>(i) - static_cast<double>(half);
    const double x = 2.0 * cutoff * m;
    const double sinc = m == 0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
    const double r = m / static_cast<double>(half);
    const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) /
                          std::cyl_bessel_i(0.0, kBeta);
    h[i] = sinc * window;
  }
  std::vector<double> branch_sum(up, 0.0);
  for (std::size_t i = 0; i < h.size(); ++i) branch_sum[i % up] += h[i];

  Trial out{trial.channels, to_rate, std::vector<float>(trial.channels * n_out)};
  for (std::size_t c = 0; c < trial.channels; ++c) {
    const float* x = trial.data.data() + c * n_in;
    float* y = out.data.data() + c * n_out;
    for (std::size_t n = 0; n < n_out; ++n) {
      // y[n] = sum_j x[j] h[t - j*up], t = n*down + half
      const std::size_t t = n * down + half;
      const std::size_t j_hi = std::min(t / up, n_in - 1);
      const std::size_t j_lo = t >= 2 * half ? (t - 2 * half + up - 1) / up : 0;
      double acc = 0.0;
      for (std::size_t j = j_lo; j <= j_hi; ++j) acc += static_cast<double>(x[j]) * h[t - j * up];
      y[n] = static_cast<float>(acc / branch_sum[t % up]);
    }
  }
  return out;
}

std::vector<Sample> segment(const Trial& trial, double window_seconds, const Subject& owner, DomainTag tag) {
  const double w_real = window_seconds * trial.rate;
  const double w_round = std::round(w_real);
  if (!(window_seconds > 0) || w_round < 1 || std::abs(w_real - w_round) > 1e-9) {
    throw std::invalid_argument("segment: window of " + std::to_string(window_seconds) + " s is not a whole number of samples");
  }
  const std::size_t w = static_cast<std::size_t>(w_round);
  const std::size_t n = trial.samples();
  if (w > n) throw std::invalid_argument("segment: window longer than the trial");
  std::vector<Sample> out;
  for (std::size_t s = 0; s + w <= n; s += w) {
    Sample smp{Tensor({trial.channels, w}), owner.id, owner.gender, owner.disease, tag};
    for (std::size_t c = 0; c < trial.channels; ++c) {
      for (std::size_t t = 0; t < w; ++t) smp.x[c * w + t] = trial.data[c * n + s + t];
    }
    out.push_back(std::move(smp));
  }
  return out;
}

void zscore(Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("zscore: expected [C, P]");
  const std::size_t c = x.dim(0), p = x.dim(1);
  for (std::size_t i = 0; i < c; ++i) {
    double* row = x.data() + i * p;
    double mean = 0.0;
    for (std::size_t t = 0; t < p; ++t) mean += row[t];
    mean /= static_cast<double>(p);
    double var = 0.0;
    for (std::size_t t = 0; t < p; ++t) var += (row[t] - mean) * (row[t] - mean);
    var /= static_cast<double>(p);
    const double inv = var > 0 ? 1.0 / std::sqrt(var) : 0.0;
    for (std::size_t t = 0; t < p; ++t) row[t] = (row[t] - mean) * inv;
  }
}

std::vector<Sample> subject_samples(const Subject& subject, const PreprocessConfig& config, DomainTag tag) {
  std::vector<Sample> out;
  for (const Trial& trial : subject.trials) {
    Trial resampled;
    const Trial* use = &trial;
    if (config.target_rate > 0 && config.target_rate != trial.rate) {
      resampled = resample(trial, config.target_rate);
      use = &resampled;
    }
    for (Sample& s : segment(*use, config.window_seconds, subject, tag)) {
      if (config.zscore) zscore(s.x);
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> BalancedCohort::all() const {
  std::vector<std::string> out = dn_plus;
  out.insert(out.end(), dn_minus.begin(), dn_minus.end());
  return out;
}

BalancedCohort balanced_sample(const std::vector<Subject>& cohort, const Quotas& quotas, std::uint64_t seed) {
  BalancedCohort out;
  out.sampling_seed = seed;
  std::uint64_t cell = 0;
  for (Disease d : {Disease::dn_plus, Disease::dn_minus}) {
    auto& group = d == Disease::dn_plus ? out.dn_plus : out.dn_minus;
    for (Gender g : {Gender::female, Gender::male}) {
      const std::size_t quota = g == Gender::female ? quotas.female : quotas.male;
      std::vector<std::string> ids;
      for (const auto& s : cohort) {
        if (s.disease == d && s.gender == g) ids.push_back(s.id);
      }
      if (ids.size() < quota) {
        throw std::invalid_argument("balanced_sample: cell " + to_string(d) + "/" + to_string(g) + " has " +
                                    std::to_string(ids.size()) + " subjects, quota " + std::to_string(quota));
      }
      std::sort(ids.begin(), ids.end());
      Rng rng(derive_seed(seed, "balanced_sample", cell++));
      rng.shuffle(ids);
      group.insert(group.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(quota));
    }
    std::sort(group.begin(), group.end());
  }
  return out;
}

std::string FoldPlan::digest() const {
  std::ostringstream os;
  os << k << ';';
  for (const auto& f : folds) {
    for (const auto& id : f.test) os << id << ',';
    os << '|';
  }
  const std::string s = os.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

FoldPlan make_folds(const std::vector<Subject>& cohort, const BalancedCohort& balanced, std::size_t k,
                    std::uint64_t seed) {
  const std::vector<std::string> ids = balanced.all();
  if (k < 2) throw std::invalid_argument("make_folds: k must be at least 2");
  if (k > ids.size()) {
    throw std::invalid_argument("make_folds: k = " + std::to_string(k) + " exceeds " + std::to_string(ids.size()) +
                                " subjects");
  }
  FoldPlan plan{k, seed, std::vector<Fold>(k)};
  std::size_t next = 0;
  std::uint64_t cell = 0;
  for (Disease d : {Disease::dn_plus, Disease::dn_minus}) {
    for (Gender g : {Gender::female, Gender::male}) {
      std::vector<std::string> members;
      for (const auto& id : ids) {
        const Subject& s = find_subject(cohort, id);
        if (s.disease == d && s.gender == g) members.push_back(id);
      }
      std::sort(members.begin(), members.end());
      Rng rng(derive_seed(seed, "make_folds", cell++));
      rng.shuffle(members);
      for (const auto& id : members) plan.folds[next++ % k].test.push_back(id);
    }
  }
  for (auto& f : plan.folds) {
    std::sort(f.test.begin(), f.test.end());
    for (const auto& id : ids) {
      if (!std::binary_search(f.test.begin(), f.test.end(), id)) f.train.push_back(id);
    }
    std::sort(f.train.begin(), f.train.end());
  }
  return plan;
}

DomainTag DomainAssignment::tag_of(const std::string& id) const {
  if (labeled_source.count(id)) return DomainTag::labeled_source;
  if (unlabeled_source.count(id)) return DomainTag::unlabeled_source;
  if (target.count(id)) return DomainTag::target;
  throw std::invalid_argument("subject '" + id + "' is in no domain");
}

void DomainAssignment::validate() const {
  auto disjoint = [](const std::set<std::string>& a, const std::set<std::string>& b, const char* what) {
    for (const auto& id : a) {
      if (b.count(id)) throw std::invalid_argument(std::string("domain sets overlap (") + what + ") at '" + id + "'");
    }
  };
  disjoint(labeled_source, unlabeled_source, "S_l/S_u");
  disjoint(labeled_source, target, "S_l/T");
  disjoint(unlabeled_source, target, "S_u/T");
  if (!(tau_percent > 0 && tau_percent <= 100)) throw std::invalid_argument("tau must lie in (0, 100]");
}

DomainAssignment split_source(const std::vector<std::string>& train_subjects, double tau_percent, std::uint64_t seed) {
  if (!(tau_percent > 0 && tau_percent <= 100)) {
    throw std::invalid_argument("split_source: tau must lie in (0, 100], got " + std::to_string(tau_percent));
  }
  std::vector<std::string> ids = train_subjects;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw std::invalid_argument("split_source: duplicate ids");
  const auto n_labeled = static_cast<std::size_t>(std::floor(tau_percent * static_cast<double>(ids.size()) / 100.0 + 1e-9));
  if (n_labeled == 0) {
    throw std::invalid_argument("split_source: tau = " + std::to_string(tau_percent) + "% of " +
                                std::to_string(ids.size()) + " subjects labels nobody; use a larger tau");
  }
  Rng rng(derive_seed(seed, "split_source"));
  rng.shuffle(ids);
  DomainAssignment out;
  out.tau_percent = tau_percent;
  out.labeled_source.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_labeled));
  out.unlabeled_source.insert(ids.begin() + static_cast<std::ptrdiff_t>(n_labeled), ids.end());
  return out;
}

int domain_class(DomainTag tag, bool merged_source) {
  switch (tag) {
    case DomainTag::labeled_source: return 0;
    case DomainTag::unlabeled_source: return merged_source ? 0 : 1;
    case DomainTag::target: return merged_source ? 1 : 2;
  }
  return 0;
}

Tensor domain_one_hot(std::span<const DomainTag> tags, bool merged_source) {
  const std::size_t k = merged_source ? 2 : 3;
  Tensor out({tags.size(), k});
  for (std::size_t i = 0; i < tags.size(); ++i) out[i * k + static_cast<std::size_t>(domain_class(tags[i], merged_source))] = 1.0;
  return out;
}

// ---------------------------------------------------------------------------

void save_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  cohort.validate();
  std::filesystem::create_directories(dir);
  json subjects = json::array();
  for (const auto& s : cohort.subjects) {
    const std::string file = s.id + ".f32";
    std::vector<std::size_t> lengths;
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw cohort_error("cannot write " + (dir / file).string());
    for (const auto& t : s.trials) {
      lengths.push_back(t.samples());
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out) throw cohort_error("short write to " + (dir / file).string());
    subjects.push_back({{"id", s.id},
                        {"gender", to_string(s.gender)},
                        {"disease", to_string(s.disease)},
                        {"file", file},
                        {"trial_samples", lengths}});
  }
  json manifest = {{"format", "nssinet-cohort-1"},
                   {"name", cohort.name},
                   {"rate", cohort.rate},
                   {"channels", cohort.channels},
                   {"channel_names", cohort.channel_names},
                   {"subjects", subjects}};
  std::ofstream m(dir / "manifest.json");
  m << manifest.dump(2) << '\n';
  if (!m) throw cohort_error("cannot write manifest in " + dir.string());
}

Cohort load_cohort(const std::filesystem::path& manifest_or_dir) {
  const std::filesystem::path manifest_path = std::filesystem::is_directory(manifest_or_dir)
                                                  ? manifest_or_dir / "manifest.json"
                                                  : manifest_or_dir;
  const std::filesystem::path dir = manifest_path.parent_path();
  std::ifstream in(manifest_path);
  if (!in) throw cohort_error("cannot open " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw cohort_error(manifest_path.string() + ": " + e.what());
  }
  Cohort c;
  try {
    c.name = m.value("name", std::string());
    c.rate = m.at("rate").get<int>();
    c.channels = m.at("channels").get<std::size_t>();
    c.channel_names = m.value("channel_names", std::vector<std::string>());
    for (const auto& js : m.at("subjects")) {
      Subject s;
      s.id = js.at("id").get<std::string>();
      s.gender = parse_gender(js.at("gender").get<std::string>());
      s.disease = parse_disease(js.at("disease").get<std::string>());
      const auto lengths = js.at("trial_samples").get<std::vector<std::size_t>>();
      const std::filesystem::path file = dir / js.at("file").get<std::string>();
      std::size_t expected = 0;
      for (auto n : lengths) expected += n * c.channels;
      std::ifstream bin(file, std::ios::binary | std::ios::ate);
      if (!bin) throw cohort_error("subject '" + s.id + "': cannot open " + file.string());
      const auto bytes = static_cast<std::size_t>(bin.tellg());
      if (bytes != expected * sizeof(float)) {
        throw cohort_error("subject '" + s.id + "': shape mismatch, manifest declares " + std::to_string(c.channels) +
                           " channels x " + std::to_string(expected / std::max<std::size_t>(c.channels, 1)) +
                           " samples (" + std::to_string(expected * sizeof(float)) + " bytes), file holds " +
                           std::to_string(bytes) + " bytes");
      }
      bin.seekg(0);
      for (std::size_t t = 0; t < lengths.size(); ++t) {
        Trial tr{c.channels, c.rate, std::vector<float>(lengths[t] * c.channels)};
        bin.read(reinterpret_cast<char*>(tr.data.data()), static_cast<std::streamsize>(tr.data.size() * sizeof(float)));
        for (float v : tr.data) {
          if (!std::isfinite(v)) {
            throw cohort_error("subject '" + s.id + "' trial " + std::to_string(t) + ": non-finite value");
          }
        }
        s.trials.push_back(std::move(tr));
      }
      c.subjects.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw cohort_error(manifest_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw cohort_error(manifest_path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

}  // namespace nssi
