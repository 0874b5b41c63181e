#ifndef SOUSIM_EXPERIMENTS_HPP
#define SOUSIM_EXPERIMENTS_HPP

#include <map>
#include <string>
#include <vector>

#include "sousim/engine.hpp"
#include "sousim/model.hpp"

namespace sousim {

// One verdict rule: compare a named statistic against a target.
//   le:     value <= target
//   ge:     value >= target
//   within: |value - target| <= tolerance
struct PassRule {
  std::string statistic;
  std::string comparator;  // "le", "ge", "within"
  double target = 0.0;
  double tolerance = 0.0;
};

struct Scenario {
  std::string name;
  std::string description;
  SimConfig config;
  EngineOptions engine;
  std::uint64_t replicate_count = 1;
  Conditioning conditioning = Conditioning::none;
  std::vector<PassRule> pass_rules;
  bool gating = true;  // diagnostics run and report but never fail
  // coupling_study replicates run the same seed at h and h/2 and (for the
  // second half of the replicate range) at the repelling gamma.
  bool coupling_study = false;
  double coupling_gamma_alt = 0.0;
};

std::vector<std::string> scenario_names();
Scenario make_scenario(const std::string& name);

// R independent replicates, seeds seed_base + index, deterministic under any
// thread count (results land in replicate-index order).
std::vector<ReplicateOutput> run_replicates(const Scenario& scenario,
                                            std::uint64_t seed_base, int threads);

using StatMap = std::map<std::string, double>;

// Every statistic a scenario's pass rules mention, computed from persisted
// replicate summaries alone.
StatMap compute_statistics(const Scenario& scenario,
                           const std::vector<ReplicateSummary>& summaries);

struct Verdict {
  PassRule rule;
  double value = 0.0;
  bool pass = false;
};

std::vector<Verdict> evaluate_rules(const Scenario& scenario, const StatMap& stats);

// Convenience: median / mean / standard error over a sample.
double median(std::vector<double> v);
double mean(const std::vector<double>& v);
double standard_error(const std::vector<double>& v);

}  // namespace sousim

#endif  // SOUSIM_EXPERIMENTS_HPP
