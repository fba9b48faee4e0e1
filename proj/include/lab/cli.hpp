#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lab::cli {

/// Everything a run depends on, in canonical string form.  Two runs with equal
/// configs must produce byte-identical artifacts.
struct RunConfig {
  std::string subcommand;  // "kinematics", "design", "control", "fisher", "fisher cramer-rao"
  std::map<std::string, std::string> params;
  std::uint64_t seed = 0;
  std::string out;     // artifact path; empty writes the artifact to stdout
  std::string format;  // "csv" or "json"; empty picks the subcommand default
};

/// Summary of one executed run: config echo, versioning, wall-clock, the
/// pass/fail list of built-in cross-checks and headline metrics.
struct RunManifest {
  RunConfig config;
  std::string version;
  std::string hash;  // manifest_hash(config)
  double duration_seconds = 0.0;
  std::vector<std::pair<std::string, bool>> checks;
  std::vector<std::pair<std::string, double>> metrics;
  bool ok = true;      // false when a domain error aborted the run
  std::string error;   // the domain error text when ok is false
};

/// Key-sorted plain-text rendering of a config; the hash input.
std::string canonical_config(const RunConfig& config);

/// FNV-1a 64-bit hash of canonical_config, as 16 lowercase hex digits.  Every
/// emitted artifact starts with "# manifest <hash>".
std::string manifest_hash(const RunConfig& config);

/// Parses command-line tokens (program name excluded).  --config FILE merges
/// key=value lines with explicit flags taking precedence.  Returns the
/// validated config, or a config with subcommand "help" when help was
/// requested.  Bad input throws LabError(UsageError).
RunConfig parse_args(const std::vector<std::string>& args);

/// Executes a parsed config: dispatches to the domain module, writes the
/// artifact (file given by `out`, stdout otherwise), and returns the manifest.
/// Domain errors are captured in the manifest rather than thrown.
RunManifest run(const RunConfig& config);

/// JSON rendering of a manifest (printed to stdout after file-backed runs).
std::string manifest_json(const RunManifest& manifest);

/// Full process entry: parse, run, report.  Exit code 0 on success (including
/// --help), 1 when the run hit a domain error, 2 on usage errors.
int main_entry(const std::vector<std::string>& args);

}  // namespace lab::cli
