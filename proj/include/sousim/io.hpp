#ifndef SOUSIM_IO_HPP
#define SOUSIM_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sousim/experiments.hpp"

namespace sousim {

// A run request: a built-in scenario plus the overrides taken from the config
// file and the command line.
struct RunSpec {
  Scenario scenario;
  std::uint64_t seed_base = 0;
  std::filesystem::path out_dir = "out";
  std::uint64_t grid_stride = 1;  // record every stride-th diffusion step
};

// Parses the documented key set (sections model/numerics/scenario/output plus
// top-level seed); unknown keys are errors. Values override the named built-in
// scenario's parameters.
RunSpec parse_config(const std::filesystem::path& path);
RunSpec parse_config_text(const std::string& text, const std::string& origin);

// Canonical emission; parse(emit(spec)) == spec.
std::string emit_canonical(const RunSpec& spec);

// FNV-1a 64 content digest, hex.
std::string digest_hex(const std::string& bytes);
std::string digest_file(const std::filesystem::path& path);

struct WriteResult {
  std::vector<std::filesystem::path> files;
};

// timeseries.csv, summaries.jsonl, report.json, manifest.json.
WriteResult write_outputs(const RunSpec& spec, const std::vector<ReplicateOutput>& runs,
                          const StatMap& stats, const std::vector<Verdict>& verdicts,
                          int threads, const std::filesystem::path& dir);

// Round-trip helpers for summaries (JSONL) and verdict evaluation on disk.
std::string summary_to_json(const ReplicateSummary& s);
ReplicateSummary summary_from_json(const std::string& line);

struct ReportCheck {
  bool digests_ok = true;
  bool verdicts_match = true;
  bool all_gating_pass = true;
  std::vector<std::string> notes;
  StatMap stats;
  std::vector<Verdict> verdicts;
  std::string scenario_name;
  bool gating_scenario = true;
};

// Re-evaluates a finished run directory from its persisted outputs.
ReportCheck evaluate_report(const std::filesystem::path& dir);

}  // namespace sousim

#endif  // SOUSIM_IO_HPP
