// Acceptance checks. Prints one PASS/FAIL line per criterion. Exits 0 when
// every criterion outside --expect-fail passes and every listed one fails.

#include "checks.hpp"
#include "cli_harness.hpp"
#include "oracles.hpp"
#include "reference_table.hpp"
#include "nssi/config.hpp"
#include "nssi/eval.hpp"
#include "nssi/generator.hpp"
#include "nssi/losses.hpp"
#include "nssi/synthgen.hpp"
#include "nssi/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace nssi;
using namespace nssi::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome parameter_exactness() {
  const GeneratorConfig ref;
  const Generator gen(ref, 1);
  const auto table = layer_table(ref, 384);
  std::size_t mismatched = 0;
  std::string first;
  for (std::size_t i = 0; i < reference_rows().size(); ++i) {
    const ReferenceRow& p = reference_rows()[i];
    std::size_t owned = 0;
    if (i < table.size())
      for (const auto& name : table[i].tensors) owned += gen.params()[name].size();
    if (i >= table.size() || table[i].id != p.id || table[i].params != p.params || owned != p.params) {
      if (first.empty()) first = p.id;
      ++mismatched;
    }
  }
  const std::size_t total = gen.parameter_count();
  Outcome o;
  o.pass = mismatched == 0 && table.size() == reference_rows().size() && total == kReferenceTotalParams;
  o.detail = fmt("rows %zu/%zu match, trainable total %zu vs printed %zu", reference_rows().size() - mismatched,
                 reference_rows().size(), total, kReferenceTotalParams);
  if (!first.empty()) o.detail += ", first mismatch " + first;
  if (mismatched == 0 && total != kReferenceTotalParams) o.detail += " (the printed total is not the row sum)";
  return o;
}

Outcome shape_exactness() {
  const GeneratorConfig ref;
  const Generator gen(ref, 3);
  Rng rng(4);
  std::size_t bad = 0;
  for (std::size_t batch : {std::size_t{2}, std::size_t{5}}) {
    const ForwardTrace tr = gen.forward(random_tensor({batch, 1, ref.channels, ref.points}, rng), Mode::train, 5);
    if (tr.row_shapes.size() != reference_rows().size()) return {false, "trace has " + std::to_string(tr.row_shapes.size()) + " rows"};
    for (std::size_t i = 0; i < reference_rows().size(); ++i) {
      Shape want = reference_rows()[i].output;
      want[0] = batch;
      bad += tr.row_shapes[i].second != want || tr.row_shapes[i].first != reference_rows()[i].id;
    }
  }
  std::size_t table_bad = 0;
  for (std::size_t i = 0; i < reference_rows().size(); ++i) table_bad += layer_table(ref, 384)[i].output != reference_rows()[i].output;
  return {bad == 0 && table_bad == 0, fmt("%zu shape mismatches over batches 2 and 5, %zu in the batch-384 table", bad, table_bad)};
}

Outcome gradient_correctness(std::uint64_t seed) {
  GradStats all;
  std::size_t kinds = 0;
  std::string failed;
  for (const auto& group : {layer_gradient_checks(seed, 20), loss_gradient_checks(seed, 20)}) {
    for (const auto& [name, s] : group) {
      ++kinds;
      if (s.failed || !s.checked) failed += (failed.empty() ? "" : ",") + name;
      all.merge(s);
    }
  }
  Outcome o{failed.empty(), fmt("%zu checks over %zu layer and loss kinds, %zu failed, %zu passed on a retry step, worst %.2e",
                                all.checked, kinds, all.failed, all.retried, all.worst)};
  if (!failed.empty()) o.detail += " in " + failed;
  return o;
}

Outcome analytic_losses(std::uint64_t seed) {
  const double ln2 = std::log(2.0), ln3 = std::log(3.0);
  double worst = 0.0;
  auto near = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

  const std::vector<double> half(48, 0.5);
  near(loss::gan(half, half), -2 * ln2);
  near(loss::gender(std::span(half).first(24), std::span(half).last(24)), 48 * ln2);
  Tensor uniform({48, 3}, 1.0 / 3.0), onehot({48, 3});
  for (std::size_t i = 0; i < 48; ++i) onehot[i * 3 + i % 3] = 1.0;
  near(loss::domain(uniform, onehot), 48 * ln3);
  std::vector<int> y(48);
  for (std::size_t i = 0; i < 48; ++i) y[i] = static_cast<int>(i % 2);
  near(loss::disease(half, y, std::vector<DomainTag>(48, DomainTag::labeled_source)), 48 * ln2);

  Rng rng(seed);
  double additivity = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const loss::Components c{rng.uniform() * 10, rng.uniform() * 50, rng.uniform() * 60, rng.uniform() * 40};
    const loss::Weights w{rng.uniform() * 3, rng.uniform() * 3, rng.uniform() * 3, rng.uniform() * 3, 1.0};
    const long double manual = static_cast<long double>(w.alpha) * c.signal + static_cast<long double>(w.beta) * c.gender +
                               static_cast<long double>(w.delta) * c.domain + static_cast<long double>(w.theta) * c.disease;
    additivity = std::max(additivity, static_cast<double>(std::abs(loss::total(c, w) - manual)));
  }
  return {worst < 1e-6 && additivity < 1e-9,
          fmt("worst closed-form error %.1e, worst additivity error %.1e over 1000 random cases", worst, additivity)};
}

Outcome protocol_invariants(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const PropertyStats s = protocol_property_checks(seed, 1000);
  const double secs = seconds_since(t0);
  Outcome o{s.total_failures() == 0 && secs < 60.0, fmt("%zu cases, %zu failures, %.1f s", s.cases, s.total_failures(), secs)};
  for (const auto& m : s.first) o.detail += "; " + m;
  return o;
}

Outcome planted_signal(std::size_t jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = load_experiment(fs::path(NSSINET_SOURCE_DIR) / "configs" / "planted.json");
  const Cohort cohort = generate_cohort(cfg.synth).cohort;
  const Experiment ex(cohort, cfg, jobs);
  const double oracle = band_power_cv_accuracy(
      band_features(cohort, cfg.synth.class_effect.band_lo, cfg.synth.class_effect.band_hi), ex.plan());
  const CVReport r = ex.run_cv(ex.base_run());
  const double secs = seconds_since(t0);
  const double budget = jobs >= 10 ? 600.0 : 1800.0;
  return {r.mean >= 0.85 && oracle >= 0.95 && secs <= budget,
          fmt("%zu subjects, %zu folds, network mean %.3f (std %.3f), band-power oracle %.3f, %.0f s with %zu job(s)",
              ex.balanced().all().size(), r.folds.size(), r.mean, r.std, oracle, secs, jobs)};
}

// Probe accuracy of a softmax classifier predicting the domain pool of each
// sample from frozen features. Subjects alternate between probe training and
// probe testing within each pool.
double domain_probe(const Model& model, const DomainData& data) {
  std::vector<Sample> all;
  std::vector<int> y;
  int k = 0;
  for (const auto* pool : {&data.labeled, &data.unlabeled, &data.target}) {
    for (const auto& s : *pool) {
      all.push_back(s);
      y.push_back(k);
    }
    ++k;
  }
  const Tensor f = extract_features(model, all);
  const std::size_t d = f.dim(1);
  std::map<std::string, std::size_t> order;
  std::map<int, std::size_t> seen;
  std::vector<std::vector<double>> xtr, xte;
  std::vector<int> ytr, yte;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!order.count(all[i].subject_id)) order[all[i].subject_id] = seen[y[i]]++;
    std::vector<double> row(f.data() + i * d, f.data() + (i + 1) * d);
    if (order[all[i].subject_id] % 2 == 0) {
      xtr.push_back(std::move(row));
      ytr.push_back(y[i]);
    } else {
      xte.push_back(std::move(row));
      yte.push_back(y[i]);
    }
  }
  return softmax_probe_accuracy(xtr, ytr, xte, yte, 3);
}

struct DomainProbeSetup {
  double shift = 6.0;
  std::size_t epochs = 60;
  double adversarial_weight = 10.0;
  std::size_t n_per_cell = 10;
};

Outcome domain_invariance(const DomainProbeSetup& setup) {
  double adv_sum = 0.0, plain_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    SynthSpec s;
    s.n_per_cell = setup.n_per_cell;
    s.rate = 128;
    s.trial_seconds = 3;
    s.class_effect = {{3}, 8.0, 12.0, 3.0};
    s.domain_groups = 3;
    s.domain_shift = setup.shift;
    s.seed = seed;
    const SynthResult r = generate_cohort(s);
    DomainAssignment a;
    for (const auto& st : r.truth.subjects) {
      (st.domain_group == 0 ? a.labeled_source : st.domain_group == 1 ? a.unlabeled_source : a.target).insert(st.id);
    }
    const SampleCache cache(r.cohort, PreprocessConfig{}, std::nullopt);
    const DomainData data = fold_data(cache, a);
    double acc[2];
    for (int plain = 0; plain < 2; ++plain) {
      TrainConfig tc;
      tc.epochs = setup.epochs;
      tc.seed = seed;
      loss::Weights w;
      w.beta = w.delta = plain ? 0.0 : setup.adversarial_weight;
      acc[plain] = domain_probe(train(data, GeneratorConfig{s.channels, static_cast<std::size_t>(s.rate)}, tc, w).model, data);
    }
    adv_sum += acc[0];
    plain_sum += acc[1];
    per_seed += fmt(" [seed %llu: %.3f vs %.3f]", static_cast<unsigned long long>(seed), acc[0], acc[1]);
  }
  const double chance = 1.0 / 3.0, adv = adv_sum / 3, plain = plain_sum / 3;
  return {std::abs(adv - chance) <= 0.15 && plain >= chance + 0.30,
          fmt("probe accuracy after adversarial training %.3f (needs within 0.15 of %.3f), with beta=delta=0 %.3f (needs >= %.3f);",
              adv, chance, plain, chance + 0.30) + per_seed};
}

struct LocalizationSetup {
  std::size_t n_per_cell = 6;
  std::size_t k = 4;
  std::size_t epochs = 8;
};

Outcome channel_localization(const LocalizationSetup& setup) {
  std::size_t hits = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ExperimentConfig c;
    c.synth.n_per_cell = setup.n_per_cell;
    c.synth.trial_seconds = 3;
    const std::size_t planted = (seed * 3) % c.synth.channels;
    c.synth.class_effect = {{planted}, 8.0, 12.0, 3.0};
    c.synth.seed = seed;
    c.cohort.quotas = {setup.n_per_cell, setup.n_per_cell};
    c.cv.k = setup.k;
    c.cv.seed = seed;
    c.train.seed = seed;
    c.validate();
    const Cohort cohort = generate_cohort(c.synth).cohort;
    const Experiment ex(cohort, c);
    const ChannelImportanceMap m = ex.channel_importance(setup.epochs);
    const bool hit = !m.missing[planted] && m.score[planted] == 1.0;
    hits += hit;
    per_seed += fmt(" [seed %llu: channel %zu score %.2f acc %.3f]", static_cast<unsigned long long>(seed), planted,
                    m.score[planted], m.accuracy[planted]);
  }
  return {hits >= 4, fmt("planted channel ranked first in %zu of 5 seeds;", hits) + per_seed};
}

struct Scratch {
  fs::path root;
  Scratch() : root(fs::temp_directory_path() / ("nssinet_acceptance_" + std::to_string(::getpid()))) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
  fs::path config(const std::string& name, const ExperimentConfig& c) const {
    std::ofstream(root / name) << to_json(c).dump(2);
    return root / name;
  }
};

Outcome determinism() {
  const Scratch box;
  ExperimentConfig c = micro_experiment();
  c.synth.n_per_cell = 4;
  c.cohort.quotas = {4, 4};
  c.train.epochs = 6;
  c.sweeps.channel_epochs = 4;
  c.validate();
  const fs::path cfg = box.config("busy.json", c);
  const fs::path runs = box.root / "runs";
  std::vector<std::string> bad;
  auto twice = [&](const std::string& name, const std::vector<std::string>& args) {
    for (const char* tag : {"_a", "_b"}) {
      std::vector<std::string> full = args;
      full.insert(full.end(), {"--out", name + tag});
      if (run_cli(full, runs, box.root / "log.txt").exit_code != 0) {
        bad.push_back(name + " (exit)");
        return;
      }
    }
    if (!diff_run_dirs(runs / (name + "_a"), runs / (name + "_b")).empty() || relative_files(runs / (name + "_a")).size() < 2) {
      bad.push_back(name);
    }
  };
  const std::vector<std::string> commands{"synth", "train", "cv", "ablate", "sweep-ratio", "sweep-weights", "sampling",
                                          "channels"};
  for (const auto& c : commands) twice(c, {c, "--config", cfg.string(), "--seed", "7", "--deterministic"});
  twice("report", {"report", (runs / "cv_a").string()});
  Outcome o{bad.empty(), fmt("%zu subcommands run twice", commands.size() + 1)};
  o.detail += bad.empty() ? ", all outputs bit-identical" : ", differing:";
  for (const auto& b : bad) o.detail += " " + b;
  return o;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

Outcome harness_completeness() {
  const Scratch box;
  ExperimentConfig c = micro_experiment();
  c.synth.n_per_cell = 8;
  c.cohort.quotas = {8, 8};
  c.cv.k = 8;
  c.sweeps = SweepConfig{};
  c.validate();
  const fs::path cfg = box.config("c10.json", c);
  const fs::path runs = box.root / "runs";

  const std::vector<std::string> variants{"without_signal", "without_gender", "without_domain", "traditional_domain",
                                          "full", "signal+disease", "signal+gender+disease", "gender+domain+disease",
                                          "signal+gender+domain+disease"};
  const std::vector<std::string> ratios{"1:1:1:1", "1:1:1:2", "1:1:2:1", "1:2:1:1", "2:1:1:1"};
  const std::vector<std::string> taus{"5", "10", "15", "25", "35", "45", "55", "65", "75", "85"};
  struct Probe {
    std::string command, stem;
    const std::vector<std::string>* expected;
  };
  std::string detail;
  bool pass = true;
  for (const Probe& p : {Probe{"ablate", "ablation", &variants}, Probe{"sweep-weights", "sweep_weights", &ratios},
                         Probe{"sweep-ratio", "sweep_ratio", &taus}}) {
    const CliResult r = run_cli({p.command, "--config", cfg.string(), "--out", p.command}, runs, box.root / "log.txt");
    std::vector<std::string> points;
    std::size_t finite = 0;
    for (const auto& row : csv_rows(runs / p.command / (p.stem + ".csv"))) {
      points.push_back(row.at(0));
      finite += row.size() > 1 && std::isfinite(std::stod(row[1]));
    }
    const bool ok = r.exit_code == 0 && points == *p.expected && finite == points.size();
    pass = pass && ok;
    detail += fmt("%s%s %zu/%zu rows%s", detail.empty() ? "" : ", ", p.command.c_str(), points.size(),
                  p.expected->size(), ok ? "" : " (mismatch)");
  }
  return {pass, detail};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string only, expect_fail;
  std::uint64_t seed = 2024;
  std::size_t jobs = 1;
  DomainProbeSetup probe;
  LocalizationSetup local;
  app.add_option("--only", only, "comma-separated criteria to run (default: all)");
  app.add_option("--expect-fail", expect_fail, "comma-separated criteria documented as unattainable");
  app.add_option("--seed", seed, "seed for the randomized checks");
  app.add_option("--jobs", jobs, "workers for the planted-signal cross-validation");
  app.add_option("--probe-shift", probe.shift);
  app.add_option("--probe-epochs", probe.epochs);
  app.add_option("--probe-weight", probe.adversarial_weight);
  app.add_option("--probe-subjects", probe.n_per_cell);
  app.add_option("--local-epochs", local.epochs);
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected = parse_list(only), expected = parse_list(expect_fail);
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, parameter_exactness},
      {2, shape_exactness},
      {3, [&] { return gradient_correctness(seed); }},
      {4, [&] { return analytic_losses(seed); }},
      {5, [&] { return protocol_invariants(seed); }},
      {6, [&] { return planted_signal(jobs); }},
      {7, [&] { return domain_invariance(probe); }},
      {8, [&] { return channel_localization(local); }},
      {9, determinism},
      {10, harness_completeness},
  };
  const char* names[] = {"",
                         "parameter exactness",
                         "shape exactness",
                         "gradient correctness",
                         "analytic loss values",
                         "protocol invariants",
                         "planted-signal learning",
                         "domain invariance",
                         "channel localization",
                         "determinism",
                         "harness completeness"};
  int unexpected = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool documented = expected.count(id) > 0;
    std::printf("criterion %d %s: %s (%s) [%.1f s]%s\n", id, names[id], o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0), documented ? (o.pass ? " expected FAIL but passed" : " documented as unattainable") : "");
    std::fflush(stdout);
    unexpected += o.pass == documented;
  }
  return unexpected == 0 ? 0 : 1;
}
