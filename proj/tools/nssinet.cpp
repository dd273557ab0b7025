#include "nssi/checkpoint.hpp"
#include "nssi/config.hpp"
#include "nssi/eval.hpp"
#include "nssi/rng.hpp"
#include "nssi/synthgen.hpp"
#include "nssi/topography.hpp"

#include <CLI11.hpp>
#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace nssi;

namespace {

constexpr const char* kVersion = "nssinet 1.0.0";

struct Options {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out;
  bool deterministic = true;
  std::string report_dir;
};

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_root() {
  const char* env = std::getenv("NSSINET_OUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

// --out names the run directory (relative paths resolve under the output
// root when NSSINET_OUT_ROOT is set); otherwise a fresh <command>-<time>
// directory is created under the root.
fs::path make_run_dir(const Options& o) {
  fs::path dir;
  if (!o.out.empty()) {
    dir = o.out;
    if (dir.is_relative() && std::getenv("NSSINET_OUT_ROOT")) dir = output_root() / dir;
  } else {
    std::string stamp = timestamp();
    for (char& c : stamp) {
      if (c == ':') c = '-';
    }
    dir = output_root() / (o.command + "-" + stamp);
    for (int n = 2; fs::exists(dir); ++n) dir = output_root() / (o.command + "-" + stamp + "-" + std::to_string(n));
  }
  if (fs::exists(dir / "manifest.json")) {
    throw ConfigError("run directory " + dir.string() + " already holds a run; runs are immutable");
  }
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct Run {
  Options options;
  ExperimentConfig config;
  fs::path dir;
  std::string started;
  std::vector<std::string> artifacts;

  void record(const fs::path& p) { artifacts.push_back(fs::relative(p, dir).generic_string()); }
  void record_tree(const fs::path& sub) {
    std::vector<std::string> found;
    for (const auto& e : fs::recursive_directory_iterator(sub)) {
      if (e.is_regular_file()) found.push_back(fs::relative(e.path(), dir).generic_string());
    }
    std::sort(found.begin(), found.end());
    artifacts.insert(artifacts.end(), found.begin(), found.end());
  }

  void finish(const char* status) const {
    json seeds = {{"root", options.seed ? json(*options.seed) : json(nullptr)},
                  {"synth", config.synth.seed},
                  {"sampling", config.cohort.sampling_seed},
                  {"train", config.train.seed},
                  {"cv", config.cv.seed}};
    write_json(dir / "manifest.json", {{"command", options.command},
                                       {"config_path", options.config_path},
                                       {"config", to_json(config)},
                                       {"seeds", seeds},
                                       {"jobs", options.jobs},
                                       {"deterministic", options.deterministic},
                                       {"status", status},
                                       {"artifacts", artifacts},
                                       {"started", started},
                                       {"finished", timestamp()},
                                       {"version", kVersion}});
  }
};

void progress(const std::string& line) { std::cerr << line << std::endl; }

Cohort obtain_cohort(const ExperimentConfig& c) {
  if (!c.cohort.path.empty()) return load_cohort(c.cohort.path);
  return generate_cohort(c.synth).cohort;
}

void cmd_synth(Run& run) {
  const SynthResult r = generate_cohort(run.config.synth);
  write_synthetic(r, run.dir / "cohort");
  run.record_tree(run.dir / "cohort");
  progress("wrote " + std::to_string(r.cohort.subjects.size()) + " subjects to " + (run.dir / "cohort").string());
}

void cmd_train(Run& run) {
  const Cohort cohort = obtain_cohort(run.config);
  const Experiment ex(cohort, run.config, 1, progress);
  const Fold& fold = ex.plan().folds.front();
  DomainAssignment a = split_source(fold.train, run.config.cv.tau, derive_seed(run.config.cv.seed, "split", 0));
  a.target.insert(fold.test.begin(), fold.test.end());
  const DomainData data = fold_data(SampleCache(cohort, run.config.preprocess), a);
  const TrainResult r = train(data, run.config.generator, run.config.train, run.config.weights,
                              [](const LossRecord& l, const Model&) {
                                char buf[128];
                                std::snprintf(buf, sizeof buf, "epoch %zu total %.6g disease %.6g", l.epoch, l.total,
                                              l.disease);
                                progress(buf);
                              });
  const json extra = {{"labeled_subjects", a.labeled_source},
                      {"unlabeled_subjects", a.unlabeled_source},
                      {"target_subjects", a.target}};
  save_checkpoint(r.model, run.config.train, extra, run.dir / "checkpoint.bin");
  write_loss_csv(r.curve, run.dir / "loss.csv");
  run.record(run.dir / "checkpoint.bin");
  run.record(run.dir / "loss.csv");
}

void cmd_cv(Run& run) {
  const Cohort cohort = obtain_cohort(run.config);
  const Experiment ex(cohort, run.config, run.options.jobs, progress);
  CVReport r = ex.run_cv(ex.base_run());
  write_cv_report(r, run.dir);
  run.record_tree(run.dir);
  std::printf("mean accuracy %.4f +- %.4f over %zu folds\n", r.mean, r.std, r.folds.size());
}

void emit_sweep(Run& run, const SweepTable& t, const std::string& stem) {
  write_sweep(t, run.dir, stem);
  for (const auto& row : t.rows) std::printf("%-32s %.4f +- %.4f\n", row.point.c_str(), row.report.mean, row.report.std);
  run.record(run.dir / (stem + ".json"));
  run.record(run.dir / (stem + ".csv"));
}

void cmd_sweep(Run& run) {
  const Cohort cohort = obtain_cohort(run.config);
  const Experiment ex(cohort, run.config, run.options.jobs, progress);
  const SweepConfig& s = run.config.sweeps;
  const std::string& cmd = run.options.command;
  if (cmd == "ablate") emit_sweep(run, ex.ablate(s.ablation_variants), "ablation");
  if (cmd == "sweep-ratio") emit_sweep(run, ex.ratio_sweep(s.tau_list), "sweep_ratio");
  if (cmd == "sweep-weights") emit_sweep(run, ex.weight_sweep(s.weight_ratios), "sweep_weights");
  if (cmd == "sampling") emit_sweep(run, ex.sampling_robustness(s.sampling_rounds, s.sampling_seeds), "sampling");
}

void cmd_channels(Run& run) {
  const Cohort cohort = obtain_cohort(run.config);
  const Experiment ex(cohort, run.config, run.options.jobs, progress);
  const ChannelImportanceMap m = ex.channel_importance(run.config.sweeps.channel_epochs);
  write_channel_map(m, run.dir);
  for (std::size_t c = 0; c < m.channels.size(); ++c) {
    std::printf("%-6s %.4f %.4f\n", m.channels[c].c_str(), m.score[c], m.accuracy[c]);
  }
  for (const char* f : {"channel_importance.csv", "channel_importance.json", "topography.svg"}) run.record(run.dir / f);
}

// Bar chart of per-row mean accuracies.
std::string bars_svg(const std::vector<std::pair<std::string, double>>& rows, const std::string& title) {
  const int w = 640, bar = 22, top = 40;
  const int h = top + static_cast<int>(rows.size()) * (bar + 6) + 20;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
                  std::to_string(h) + "\">\n<text x=\"10\" y=\"24\" font-size=\"16\">" + title + "</text>\n";
  int y = top;
  for (const auto& [label, v] : rows) {
    const double len = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) * 380.0 : 0.0;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "<text x=\"10\" y=\"%d\" font-size=\"12\">%s</text><rect x=\"220\" y=\"%d\" width=\"%.1f\" "
                  "height=\"%d\" fill=\"#4a7ab5\"/><text x=\"%.1f\" y=\"%d\" font-size=\"12\">%.4f</text>\n",
                  y + 15, label.c_str(), y, len, bar, 226 + len, y + 15, v);
    s += buf;
    y += bar + 6;
  }
  return s + "</svg>\n";
}

void cmd_report(Run& run, const fs::path& source) {
  if (!fs::exists(source / "manifest.json")) throw ConfigError("no manifest found in " + source.string());
  std::ifstream in(source / "manifest.json");
  const json manifest = json::parse(in);
  json summary = {{"source", fs::absolute(source).lexically_normal().string()},
                  {"command", manifest.at("command")},
                  {"entries", json::array()}};
  std::vector<std::pair<std::string, double>> bars;
  std::string csv = "kind,point,mean,std\n";
  auto add = [&](const std::string& kind, const std::string& point, const json& mean, const json& sd) {
    const double m = mean.is_number() ? mean.get<double>() : std::nan("");
    const double d = sd.is_number() ? sd.get<double>() : std::nan("");
    summary["entries"].push_back({{"kind", kind}, {"point", point}, {"mean", mean}, {"std", sd}});
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", m, d);
    csv += kind + "," + point + "," + buf + "\n";
    bars.emplace_back(kind == "cv" ? point : kind + " " + point, m);
  };
  for (const auto& rel : manifest.value("artifacts", json::array())) {
    const fs::path p = source / rel.get<std::string>();
    if (p.extension() != ".json") continue;
    std::ifstream f(p);
    const json j = json::parse(f);
    const std::string name = p.stem().string();
    if (name == "cv_report") {
      add("cv", j.value("label", "cv"), j.at("mean"), j.at("std"));
    } else if (j.contains("axis") && j.contains("rows")) {
      for (const auto& row : j.at("rows")) add(name, row.at("point"), row.at("mean"), row.at("std"));
      summary["reference"][name] = j.at("reference");
    } else if (name == "channel_importance") {
      for (const auto& row : j.at("channels")) add("channel", row.at("channel"), row.at("accuracy"), nullptr);
      fs::copy_file(source / "topography.svg", run.dir / "topography.svg", fs::copy_options::overwrite_existing);
      run.record(run.dir / "topography.svg");
    }
  }
  write_json(run.dir / "summary.json", summary);
  std::ofstream(run.dir / "summary.csv") << csv;
  std::ofstream(run.dir / "summary.svg") << bars_svg(bars, manifest.at("command").get<std::string>() + " accuracy");
  for (const char* f : {"summary.json", "summary.csv", "summary.svg"}) run.record(run.dir / f);
  std::printf("%zu entries from %s\n", summary["entries"].size(), source.string().c_str());
}

int dispatch(Options& o) {
  Run run;
  run.options = o;
  run.started = timestamp();
  if (!o.config_path.empty()) {
    run.config = load_experiment(o.config_path);
    if (!run.config.cohort.path.empty() && fs::path(run.config.cohort.path).is_relative()) {
      const fs::path base = fs::path(o.config_path).parent_path();
      run.config.cohort.path = fs::absolute(base / run.config.cohort.path).lexically_normal().string();
    }
  } else if (o.command != "report") {
    throw ConfigError("--config is required");
  }
  if (o.seed) apply_root_seed(run.config, *o.seed);
  run.config.validate();
  if (o.jobs == 0) throw ConfigError("--jobs must be >= 1");
  if (o.command == "report" && !fs::exists(fs::path(o.report_dir) / "manifest.json")) {
    throw ConfigError("no manifest found in " + o.report_dir);
  }
  run.dir = make_run_dir(o);
  try {
    if (o.command == "synth") cmd_synth(run);
    else if (o.command == "train") cmd_train(run);
    else if (o.command == "cv") cmd_cv(run);
    else if (o.command == "channels") cmd_channels(run);
    else if (o.command == "report") cmd_report(run, o.report_dir);
    else cmd_sweep(run);
  } catch (...) {
    run.finish("failed");
    throw;
  }
  run.finish("ok");
  std::cerr << "run directory: " << run.dir.string() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Semi-supervised adversarial EEG pipeline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"synth", "write a planted-signal synthetic cohort"},
      {"train", "train one model on fold 0; writes a checkpoint and loss curve"},
      {"cv", "cross-subject k-fold cross-validation"},
      {"ablate", "ablation variants"},
      {"sweep-ratio", "labeled-ratio sweep"},
      {"sweep-weights", "loss-weight ratio sweep"},
      {"sampling", "balanced-sampling robustness rounds"},
      {"channels", "per-channel importance map"},
      {"report", "consolidate a run directory into CSV/JSON/SVG"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "experiment JSON (or a run manifest to replay)");
    sub->add_option("--seed", o.seed, "root seed; derives every section seed");
    sub->add_option("--jobs", o.jobs, "parallel folds")->capture_default_str();
    sub->add_option("--out", o.out, "run directory");
    sub->add_flag("--deterministic,!--no-deterministic", o.deterministic, "bit-reproducible outputs")
        ->capture_default_str();
    if (std::string(name) == "report") sub->add_option("run_dir", o.report_dir, "run directory to summarize")->required();
    sub->callback([&o, sub] { o.command = sub->get_name(); });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    return dispatch(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << std::endl;
    return 2;
  }
}
