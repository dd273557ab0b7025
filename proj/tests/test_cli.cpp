#include "checks.hpp"
#include "cli_harness.hpp"
#include "nssi/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace nssi;
using namespace nssi::testing;
namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path root;
  explicit Sandbox(const std::string& name)
      : root(fs::temp_directory_path() / ("nssinet_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Sandbox() { fs::remove_all(root); }

  fs::path write(const std::string& file, const json& j) const {
    std::ofstream(root / file) << j.dump(2);
    return root / file;
  }
  CliResult run(const std::vector<std::string>& args, const std::string& log = "log.txt") const {
    return run_cli(args, root / "runs", root / log);
  }
};

json read_json(const fs::path& p) { return json::parse(std::ifstream(p)); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("cv on the shipped small config writes ten fold entries") {
    const Sandbox box("small");
    const CliResult r = box.run({"cv", "--config", fs::path(NSSINET_SOURCE_DIR) / "configs" / "small.json", "--out", "cv"});
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const fs::path run = box.root / "runs" / "cv";
    const json report = read_json(run / "cv_report.json");
    CHECK(report.at("folds").size() == 10);
    const json m = read_json(run / "manifest.json");
    CHECK(m.at("command") == "cv");
    CHECK(m.at("status") == "ok");
    CHECK(m.at("deterministic") == true);
    CHECK(m.at("jobs") == 1);
    CHECK(m.at("version") == "nssinet 1.0.0");
    for (const char* s : {"root", "synth", "sampling", "train", "cv"}) CHECK(m.at("seeds").contains(s));
    for (const auto& a : m.at("artifacts")) CHECK(fs::exists(run / a.get<std::string>()));
  }

  TEST_CASE("report on an empty directory exits 1") {
    const Sandbox box("empty");
    fs::create_directories(box.root / "nothing");
    const CliResult r = box.run({"report", (box.root / "nothing").string()});
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("no manifest found") != std::string::npos);
  }

  TEST_CASE("config errors exit 1 and name the key") {
    const Sandbox box("config");
    const CliResult typo = box.run({"cv", "--config", box.write("typo.json", {{"train", {{"epoch", 1}}}}).string()});
    CHECK(typo.exit_code == 1);
    CHECK(typo.output.find("train.epoch") != std::string::npos);
    CHECK(box.run({"cv", "--config", (box.root / "missing.json").string()}).exit_code == 1);
    CHECK(box.run({"cv"}).exit_code == 1);
    CHECK(box.run({"frobnicate"}).exit_code == 1);
  }

  TEST_CASE("runtime failures exit 2 and leave a failed manifest") {
    const Sandbox box("runtime");
    const fs::path cfg = box.write("c.json", {{"cohort", {{"path", (box.root / "absent").string()}}}});
    const CliResult r = box.run({"cv", "--config", cfg.string(), "--out", "bad"});
    CHECK(r.exit_code == 2);
    CHECK(read_json(box.root / "runs" / "bad" / "manifest.json").at("status") == "failed");
  }

  TEST_CASE("run directories are immutable") {
    const Sandbox box("immutable");
    const fs::path cfg = box.write("micro.json", to_json(micro_experiment()));
    REQUIRE(box.run({"synth", "--config", cfg.string(), "--out", "s"}).exit_code == 0);
    const CliResult again = box.run({"synth", "--config", cfg.string(), "--out", "s"});
    CHECK(again.exit_code == 1);
    CHECK(again.output.find("immutable") != std::string::npos);
  }

  TEST_CASE("the output root hosts timestamped run directories") {
    const Sandbox box("root");
    const fs::path cfg = box.write("micro.json", to_json(micro_experiment()));
    REQUIRE(box.run({"synth", "--config", cfg.string()}).exit_code == 0);
    std::size_t runs = 0;
    for (const auto& e : fs::directory_iterator(box.root / "runs")) {
      CHECK(e.path().filename().string().rfind("synth-", 0) == 0);
      CHECK(fs::exists(e.path() / "manifest.json"));
      ++runs;
    }
    CHECK(runs == 1);
  }

  TEST_CASE("every subcommand is bit-reproducible and a manifest replays its run") {
    const Sandbox box("determinism");
    const fs::path cfg = box.write("micro.json", to_json(micro_experiment()));
    const std::vector<std::string> commands{"synth", "train", "cv", "ablate", "sweep-ratio", "sweep-weights",
                                            "sampling", "channels"};
    for (const auto& c : commands) {
      for (const char* tag : {"a", "b"}) {
        const CliResult r = box.run({c, "--config", cfg.string(), "--seed", "7", "--out", c + "_" + tag});
        INFO(c, " ", r.output);
        REQUIRE(r.exit_code == 0);
      }
      INFO(c);
      const auto diffs = diff_run_dirs(box.root / "runs" / (c + "_a"), box.root / "runs" / (c + "_b"));
      CHECK(diffs.empty());
      CHECK(relative_files(box.root / "runs" / (c + "_a")).size() > 1);
    }
    for (const char* tag : {"a", "b"}) {
      REQUIRE(box.run({"report", (box.root / "runs" / "cv_a").string(), "--out", std::string("report_") + tag}).exit_code ==
              0);
    }
    CHECK(diff_run_dirs(box.root / "runs" / "report_a", box.root / "runs" / "report_b").empty());
    CHECK(fs::exists(box.root / "runs" / "report_a" / "summary.svg"));

    const CliResult replay =
        box.run({"cv", "--config", (box.root / "runs" / "cv_a" / "manifest.json").string(), "--out", "cv_replay"});
    REQUIRE(replay.exit_code == 0);
    CHECK(diff_run_dirs(box.root / "runs" / "cv_a", box.root / "runs" / "cv_replay").empty());
  }

  TEST_CASE("worker count does not change the numbers") {
    const Sandbox box("jobs");
    const fs::path cfg = box.write("micro.json", to_json(micro_experiment()));
    REQUIRE(box.run({"cv", "--config", cfg.string(), "--out", "one"}).exit_code == 0);
    REQUIRE(box.run({"cv", "--config", cfg.string(), "--jobs", "4", "--out", "four"}).exit_code == 0);
    CHECK(diff_run_dirs(box.root / "runs" / "one", box.root / "runs" / "four").empty());
  }
}
