#pragma once

// Runs the command-line driver as a child process and compares run
// directories. The driver path comes from NSSINET_CLI, falling back to the
// path baked in at build time.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nssi::testing {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline std::string cli_path() {
  if (const char* p = std::getenv("NSSINET_CLI"); p && *p) return p;
#ifdef NSSINET_CLI_PATH
  return NSSINET_CLI_PATH;
#else
  throw std::runtime_error("NSSINET_CLI is not set");
#endif
}

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// `out_root` sets NSSINET_OUT_ROOT for the child; empty leaves it unset.
inline CliResult run_cli(const std::vector<std::string>& args, const std::filesystem::path& out_root,
                         const std::filesystem::path& log) {
  std::string cmd = out_root.empty() ? "env -u NSSINET_OUT_ROOT " : "NSSINET_OUT_ROOT=" + shell_quote(out_root.string()) + " ";
  cmd += shell_quote(cli_path());
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " > " + shell_quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  return r;
}

inline std::set<std::string> relative_files(const std::filesystem::path& dir) {
  std::set<std::string> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.insert(std::filesystem::relative(e.path(), dir).generic_string());
  }
  return out;
}

// Relative paths that differ between two run directories, ignoring the
// manifest (it carries timestamps). An empty result means bit-identical.
inline std::vector<std::string> diff_run_dirs(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::vector<std::string> diffs;
  const auto fa = relative_files(a), fb = relative_files(b);
  std::set<std::string> all(fa);
  all.insert(fb.begin(), fb.end());
  for (const auto& f : all) {
    if (f == "manifest.json") continue;
    if (!fa.count(f) || !fb.count(f) || slurp(a / f) != slurp(b / f)) diffs.push_back(f);
  }
  return diffs;
}

}  // namespace nssi::testing
