#include "nssi/eval.hpp"

#include "nssi/rng.hpp"
#include "nssi/topography.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace nssi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double rate(std::size_t num, std::size_t den) { return den ? static_cast<double>(num) / static_cast<double>(den) : kNaN; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string ratio_label(const std::array<double, 4>& r) {
  std::string s;
  for (std::size_t i = 0; i < 4; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", r[i]);
    s += (i ? ":" : "") + std::string(buf);
  }
  return s;
}

// Runs f(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<ConfusionMatrix> confusion(std::span<const int> predictions, std::span<const int> labels,
                                       std::span<const Gender> genders) {
  if (predictions.size() != labels.size() || labels.size() != genders.size()) {
    throw std::invalid_argument("confusion: misaligned inputs");
  }
  std::vector<ConfusionMatrix> out;
  for (const char* group : {"all", "female", "male"}) {
    ConfusionMatrix m;
    m.group = group;
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (m.group == "female" && genders[i] != Gender::female) continue;
      if (m.group == "male" && genders[i] != Gender::male) continue;
      ++n;
      const bool pos = labels[i] == 1, pred = predictions[i] == 1;
      (pos ? (pred ? m.tp : m.fn) : (pred ? m.fp : m.tn))++;
    }
    if (n == 0) continue;
    m.tp_rate = rate(m.tp, m.tp + m.fn);
    m.fn_rate = rate(m.fn, m.tp + m.fn);
    m.tn_rate = rate(m.tn, m.tn + m.fp);
    m.fp_rate = rate(m.fp, m.tn + m.fp);
    out.push_back(m);
  }
  return out;
}

void summarize(CVReport& r) {
  const std::size_t n = r.folds.size();
  r.mean = r.std = kNaN;
  if (n == 0) return;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += r.fold_accuracy(i);
  r.mean = s / static_cast<double>(n);
  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i) v += (r.fold_accuracy(i) - r.mean) * (r.fold_accuracy(i) - r.mean);
  r.std = n > 1 ? std::sqrt(v / static_cast<double>(n - 1)) : 0.0;

  std::vector<int> p, l;
  std::vector<Gender> g;
  for (const auto& f : r.folds) {
    p.insert(p.end(), f.predictions.begin(), f.predictions.end());
    l.insert(l.end(), f.labels.begin(), f.labels.end());
    g.insert(g.end(), f.genders.begin(), f.genders.end());
  }
  r.confusion = confusion(p, l, g);
}

const std::vector<Variant>& ablation_variants() {
  static const std::vector<Variant> v = {
      {"without_signal", {false, true, true, false}},
      {"without_gender", {true, false, true, false}},
      {"without_domain", {true, true, false, false}},
      {"traditional_domain", {true, true, true, true}},
      {"full", {true, true, true, false}},
      {"signal+disease", {true, false, false, false}},
      {"signal+gender+disease", {true, true, false, false}},
      {"gender+domain+disease", {false, true, true, false}},
      {"signal+gender+domain+disease", {true, true, true, false}},
  };
  return v;
}

const Variant& find_variant(const std::string& name) {
  for (const auto& v : ablation_variants()) {
    if (v.name == name) return v;
  }
  throw ConfigError("unknown ablation variant '" + name + "'");
}

// ---------------------------------------------------------------------------

SampleCache::SampleCache(const Cohort& cohort, const PreprocessConfig& pre, std::optional<std::size_t> channel) {
  if (channel && *channel >= cohort.channels) throw std::invalid_argument("channel index out of range");
  for (const Subject& s : cohort.subjects) {
    std::vector<Sample> samples = subject_samples(s, pre, DomainTag::labeled_source);
    if (channel) {
      for (Sample& smp : samples) {
        const std::size_t p = smp.x.dim(1);
        Tensor one({1, p});
        std::copy(smp.x.data() + *channel * p, smp.x.data() + (*channel + 1) * p, one.data());
        smp.x = std::move(one);
      }
    }
    if (!samples.empty()) {
      channels_ = samples.front().x.dim(0);
      points_ = samples.front().x.dim(1);
    }
    samples_.emplace(s.id, std::move(samples));
  }
}

const std::vector<Sample>& SampleCache::of(const std::string& id) const {
  auto it = samples_.find(id);
  if (it == samples_.end()) throw std::invalid_argument("no samples for subject '" + id + "'");
  return it->second;
}

DomainData fold_data(const SampleCache& cache, const DomainAssignment& a) {
  a.validate();
  DomainData d;
  auto fill = [&cache](const std::set<std::string>& ids, DomainTag tag, std::vector<Sample>& out) {
    for (const auto& id : ids) {
      for (const Sample& s : cache.of(id)) {
        out.push_back(s);
        out.back().tag = tag;
      }
    }
  };
  fill(a.labeled_source, DomainTag::labeled_source, d.labeled);
  fill(a.unlabeled_source, DomainTag::unlabeled_source, d.unlabeled);
  fill(a.target, DomainTag::target, d.target);
  return d;
}

Experiment::Experiment(const Cohort& cohort, const ExperimentConfig& config, std::size_t jobs, Progress progress)
    : cohort_(cohort),
      config_(config),
      jobs_(std::max<std::size_t>(1, jobs)),
      progress_(std::move(progress)),
      balanced_(balanced_sample(cohort.subjects, config.cohort.quotas, config.cohort.sampling_seed)),
      plan_(make_folds(cohort.subjects, balanced_, config.cv.k, config.cv.seed)),
      cache_(cohort, config.preprocess) {
  if (cache_.channels() != config.generator.channels || cache_.points() != config.generator.points) {
    throw ConfigError("samples are [" + std::to_string(cache_.channels()) + ", " + std::to_string(cache_.points()) +
                      "] but the generator expects [" + std::to_string(config.generator.channels) + ", " +
                      std::to_string(config.generator.points) + "]");
  }
}

CvRun Experiment::base_run() const {
  return {config_.generator, config_.train, config_.weights, config_.cv.tau, "cv"};
}

CVReport Experiment::run_cv(const CvRun& run) const { return run_cv(run, cache_, plan_); }

CVReport Experiment::run_cv(const CvRun& run, const SampleCache& cache, const FoldPlan& plan) const {
  CVReport report;
  report.label = run.label;
  report.subject_vote = config_.cv.subject_vote;
  report.plan_digest = plan.digest();
  report.settings = {{"generator", to_json(run.generator)},
                     {"train", to_json(run.train)},
                     {"weights", to_json(run.weights)},
                     {"tau", run.tau},
                     {"k", plan.k},
                     {"fold_seed", plan.seed},
                     {"split_seed", config_.cv.seed}};
  report.folds.resize(plan.folds.size());
  parallel_for(plan.folds.size(), jobs_, [&](std::size_t i) {
    const Fold& fold = plan.folds[i];
    DomainAssignment a = split_source(fold.train, run.tau, derive_seed(config_.cv.seed, "split", i));
    a.target.insert(fold.test.begin(), fold.test.end());
    const DomainData data = fold_data(cache, a);
    TrainConfig tc = run.train;
    tc.seed = derive_seed(run.train.seed, "fold", i);
    auto run_fold = [&] {
      try {
        return train(data, run.generator, tc, run.weights);
      } catch (const std::exception& e) {
        throw std::runtime_error(run.label + ": fold " + std::to_string(i) + " failed: " + e.what());
      }
    };
    const TrainResult trained = run_fold();
    FoldResult& r = report.folds[i];
    r.fold = i;
    r.test_subjects = fold.test;
    r.labeled_subjects.assign(a.labeled_source.begin(), a.labeled_source.end());
    r.unlabeled_subjects.assign(a.unlabeled_source.begin(), a.unlabeled_source.end());
    r.curve = trained.curve;
    const std::vector<double> prob = predict(trained.model, data.target);
    std::map<std::string, std::pair<int, int>> votes;  // subject -> (DN+ votes, total)
    std::size_t correct = 0;
    for (std::size_t s = 0; s < data.target.size(); ++s) {
      const Sample& smp = data.target[s];
      const int pred = prob[s] > 0.5 ? 1 : 0;
      const int label = smp.disease == Disease::dn_plus ? 1 : 0;
      r.predictions.push_back(pred);
      r.labels.push_back(label);
      r.genders.push_back(smp.gender);
      r.sample_subjects.push_back(smp.subject_id);
      correct += pred == label;
      auto& v = votes[smp.subject_id];
      v.first += pred;
      v.second += 1;
    }
    r.accuracy = rate(correct, data.target.size());
    std::size_t subj_ok = 0;
    for (const auto& [id, v] : votes) {
      const int pred = 2 * v.first > v.second ? 1 : 0;
      subj_ok += pred == (cohort_.subject(id).disease == Disease::dn_plus ? 1 : 0);
    }
    r.subject_accuracy = rate(subj_ok, votes.size());
    if (progress_) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: fold %zu/%zu accuracy %.4f", run.label.c_str(), i + 1, plan.folds.size(),
                    r.accuracy);
      progress_(buf);
    }
  });
  summarize(report);
  return report;
}

SweepTable Experiment::ablate(const std::vector<std::string>& names) const {
  std::vector<const Variant*> chosen;
  if (names.empty()) {
    for (const auto& v : ablation_variants()) chosen.push_back(&v);
  } else {
    for (const auto& n : names) chosen.push_back(&find_variant(n));
  }
  SweepTable t{"variant", {}, reference_metadata("ablate")};
  std::vector<std::pair<HeadToggles, CVReport>> done;
  for (const Variant* v : chosen) {
    auto hit = std::find_if(done.begin(), done.end(), [&](const auto& d) { return d.first == v->heads; });
    CVReport r;
    if (hit != done.end()) {
      r = hit->second;
    } else {
      CvRun run = base_run();
      run.train.heads = v->heads;
      run.label = v->name;
      if (!v->heads.gender) run.weights.beta = 0.0;
      if (!v->heads.domain) run.weights.delta = 0.0;
      r = run_cv(run);
      done.emplace_back(v->heads, r);
    }
    r.label = v->name;
    t.rows.push_back({v->name, std::move(r)});
  }
  return t;
}

SweepTable Experiment::ratio_sweep(const std::vector<double>& taus) const {
  std::size_t min_train = std::numeric_limits<std::size_t>::max();
  for (const auto& f : plan_.folds) min_train = std::min(min_train, f.train.size());
  for (double tau : taus) {
    if (!(tau > 0 && tau <= 100)) throw ConfigError("tau " + std::to_string(tau) + " outside (0, 100]");
    if (std::floor(tau * static_cast<double>(min_train) / 100.0 + 1e-9) < 1) {
      throw ConfigError("tau " + std::to_string(tau) + "% of " + std::to_string(min_train) +
                        " training subjects labels nobody");
    }
  }
  SweepTable t{"tau_percent", {}, reference_metadata("sweep-ratio")};
  for (double tau : taus) {
    CvRun run = base_run();
    run.tau = tau;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", tau);
    run.label = std::string("tau=") + buf;
    t.rows.push_back({buf, run_cv(run)});
  }
  return t;
}

SweepTable Experiment::weight_sweep(const std::vector<std::array<double, 4>>& ratios) const {
  for (const auto& r : ratios) {
    for (double v : r) {
      if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("negative or non-finite weight in ratio " + ratio_label(r));
    }
  }
  SweepTable t{"alpha:beta:delta:theta", {}, reference_metadata("sweep-weights")};
  for (const auto& r : ratios) {
    CvRun run = base_run();
    run.weights.alpha = r[0];
    run.weights.beta = r[1];
    run.weights.delta = r[2];
    run.weights.theta = r[3];
    run.label = ratio_label(r);
    t.rows.push_back({run.label, run_cv(run)});
  }
  return t;
}

SweepTable Experiment::sampling_robustness(std::size_t rounds, const std::vector<std::uint64_t>& seeds) const {
  if (rounds < 2) throw ConfigError("sampling: rounds must be >= 2");
  if (!seeds.empty() && seeds.size() != rounds) throw ConfigError("sampling: need one seed per round");
  SweepTable t{"round", {}, reference_metadata("sampling")};
  double lo = kNaN, hi = kNaN;
  for (std::size_t k = 0; k < rounds; ++k) {
    const std::uint64_t seed = seeds.empty() ? derive_seed(config_.cohort.sampling_seed, "round", k) : seeds[k];
    const BalancedCohort b = balanced_sample(cohort_.subjects, config_.cohort.quotas, seed);
    const FoldPlan plan = make_folds(cohort_.subjects, b, config_.cv.k, config_.cv.seed);
    CvRun run = base_run();
    run.label = "round " + std::to_string(k + 1);
    CVReport r = run_cv(run, cache_, plan);
    r.settings["sampling_seed"] = seed;
    lo = k == 0 ? r.mean : std::min(lo, r.mean);
    hi = k == 0 ? r.mean : std::max(hi, r.mean);
    t.rows.push_back({std::to_string(k + 1), std::move(r)});
  }
  t.metadata["spread"] = {{"min_mean_accuracy", lo}, {"max_mean_accuracy", hi}};
  return t;
}

ChannelImportanceMap Experiment::channel_importance(std::size_t epochs) const {
  ChannelImportanceMap m;
  const std::size_t C = cohort_.channels;
  m.channels = cohort_.channel_names.size() == C ? cohort_.channel_names : default_channel_names(C);
  m.accuracy.assign(C, kNaN);
  m.missing.assign(C, false);
  for (std::size_t c = 0; c < C; ++c) {
    try {
      const SampleCache cache(cohort_, config_.preprocess, c);
      CvRun run = base_run();
      run.generator.channels = 1;
      run.train.epochs = epochs;
      run.label = "channel " + m.channels[c];
      m.accuracy[c] = run_cv(run, cache, plan_).mean;
    } catch (const std::exception& e) {
      m.missing[c] = true;
      if (progress_) progress_("channel " + m.channels[c] + " failed: " + e.what());
    }
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t c = 0; c < C; ++c) {
    if (m.missing[c]) continue;
    lo = std::min(lo, m.accuracy[c]);
    hi = std::max(hi, m.accuracy[c]);
  }
  m.score.assign(C, kNaN);
  for (std::size_t c = 0; c < C; ++c) {
    if (m.missing[c]) continue;
    m.score[c] = hi > lo ? (m.accuracy[c] - lo) / (hi - lo) : 0.5;
  }
  m.low_contrast = !(hi - lo >= ChannelImportanceMap::kLowContrast);
  return m;
}

// ---------------------------------------------------------------------------

json reference_metadata(const std::string& axis) {
  json ref = {{"reproducible", false}, {"note", "clinical cohort values; the dataset is private"}};
  if (axis == "cv") {
    ref["accuracy_percent"] = {{"mean", 70.00}, {"std", 13.90}};
  } else if (axis == "ablate") {
    ref["accuracy_percent"] = {{"without_signal", {65.47, 10.22}},
                               {"without_gender", {66.63, 9.66}},
                               {"without_domain", {64.30, 9.88}},
                               {"traditional_domain", {67.17, 12.99}},
                               {"full", {70.00, 13.90}}};
  } else if (axis == "sweep-ratio") {
    ref["accuracy_percent"] = {{"5", 50.97}, {"10", 65.71}, {"75", 70.00}};
  } else if (axis == "sweep-weights") {
    ref["accuracy_percent"] = {{"1:1:1:1", {70.00, 13.90}},
                               {"1:1:1:2", {65.12, 9.07}},
                               {"1:1:2:1", {69.10, 10.18}},
                               {"1:2:1:1", {69.11, 13.93}},
                               {"2:1:1:1", {63.56, 8.73}}};
  } else if (axis == "sampling") {
    ref["accuracy_percent"] = {{"min", 65.21}, {"max", 70.48}};
  } else {
    return json::object();
  }
  return ref;
}

json to_json(const ConfusionMatrix& m) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return {{"group", m.group},       {"tp", m.tp},
          {"tn", m.tn},             {"fp", m.fp},
          {"fn", m.fn},             {"tp_rate", num(m.tp_rate)},
          {"fn_rate", num(m.fn_rate)}, {"tn_rate", num(m.tn_rate)},
          {"fp_rate", num(m.fp_rate)}};
}

json to_json(const CVReport& r, bool with_curves) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    json jf = {{"fold", f.fold},
               {"test_subjects", f.test_subjects},
               {"labeled_subjects", f.labeled_subjects},
               {"unlabeled_subjects", f.unlabeled_subjects},
               {"accuracy", f.accuracy},
               {"subject_accuracy", f.subject_accuracy},
               {"samples", f.predictions.size()}};
    if (with_curves) {
      json curve = json::array();
      for (const auto& l : f.curve) curve.push_back({l.epoch, l.signal, l.gender, l.domain, l.disease, l.total});
      jf["loss_curve"] = {{"columns", {"epoch", "L_signal", "L_gender", "L_disc", "L_disease", "total"}},
                          {"rows", curve}};
    }
    folds.push_back(jf);
  }
  json conf = json::array();
  for (const auto& m : r.confusion) conf.push_back(to_json(m));
  return {{"label", r.label},
          {"accuracy_basis", r.subject_vote ? "subject_majority_vote" : "sample"},
          {"mean", r.mean},
          {"std", r.std},
          {"folds", folds},
          {"confusion", conf},
          {"plan_digest", r.plan_digest},
          {"settings", r.settings}};
}

json to_json(const SweepTable& t) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json jr = to_json(row.report, false);
    jr["point"] = row.point;
    rows.push_back(jr);
  }
  return {{"axis", t.axis}, {"rows", rows}, {"reference", t.metadata}};
}

json to_json(const ChannelImportanceMap& m) {
  json rows = json::array();
  for (std::size_t c = 0; c < m.channels.size(); ++c) {
    rows.push_back({{"channel", m.channels[c]},
                    {"accuracy", m.missing[c] ? json(nullptr) : json(m.accuracy[c])},
                    {"score", m.missing[c] ? json(nullptr) : json(m.score[c])},
                    {"missing", bool(m.missing[c])}});
  }
  return {{"channels", rows}, {"low_contrast", m.low_contrast}, {"low_contrast_threshold", ChannelImportanceMap::kLowContrast}};
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

void write_cv_report(const CVReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "cv_report.json", to_json(r).dump(2) + "\n");
  std::string folds = "fold,accuracy,subject_accuracy,samples,test_subjects\n";
  for (const auto& f : r.folds) {
    std::string ids;
    for (const auto& id : f.test_subjects) ids += (ids.empty() ? "" : " ") + id;
    folds += std::to_string(f.fold) + "," + fmt(f.accuracy) + "," + fmt(f.subject_accuracy) + "," +
             std::to_string(f.predictions.size()) + "," + ids + "\n";
    write_loss_csv(f.curve, dir / ("loss_fold" + std::to_string(f.fold) + ".csv"));
  }
  write_text(dir / "folds.csv", folds);
  std::string conf = "group,tp,fn,tn,fp,tp_rate,fn_rate,tn_rate,fp_rate\n";
  for (const auto& m : r.confusion) {
    conf += m.group + "," + std::to_string(m.tp) + "," + std::to_string(m.fn) + "," + std::to_string(m.tn) + "," +
            std::to_string(m.fp) + "," + fmt(m.tp_rate) + "," + fmt(m.fn_rate) + "," + fmt(m.tn_rate) + "," +
            fmt(m.fp_rate) + "\n";
  }
  write_text(dir / "confusion.csv", conf);
}

void write_sweep(const SweepTable& t, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  write_text(dir / (stem + ".json"), to_json(t).dump(2) + "\n");
  std::string csv = "point,mean,std,plan_digest\n";
  for (const auto& row : t.rows) {
    csv += row.point + "," + fmt(row.report.mean) + "," + fmt(row.report.std) + "," + row.report.plan_digest + "\n";
  }
  write_text(dir / (stem + ".csv"), csv);
}

void write_channel_map(const ChannelImportanceMap& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "channel_importance.json", to_json(m).dump(2) + "\n");
  std::string csv = "channel,score,accuracy\n";
  std::vector<double> scores;
  for (std::size_t c = 0; c < m.channels.size(); ++c) {
    csv += m.channels[c] + "," + fmt(m.score[c]) + "," + fmt(m.accuracy[c]) + "\n";
    scores.push_back(m.missing[c] ? 0.0 : m.score[c]);
  }
  write_text(dir / "channel_importance.csv", csv);
  write_text(dir / "topography.svg",
             topography_svg(m.channels, scores, m.low_contrast ? "channel importance (low contrast)" : "channel importance"));
}

}  // namespace nssi
