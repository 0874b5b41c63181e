#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "sousim/io.hpp"
#include "sousim/version.hpp"

namespace {

int default_threads() {
  const char* env = std::getenv("SOUSIM_THREADS");
  if (env != nullptr) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void print_verdicts(const std::vector<sousim::Verdict>& verdicts, bool gating) {
  for (const auto& v : verdicts) {
    std::cout << (v.pass ? "PASS" : (gating ? "FAIL" : "info")) << "  " << v.rule.statistic
              << " = " << v.value << "  (" << v.rule.comparator << " " << v.rule.target;
    if (v.rule.comparator == "within") std::cout << " +- " << v.rule.tolerance;
    std::cout << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sousim: branching Ornstein-Uhlenbeck / center-of-mass particle simulator"};
  app.set_version_flag("--version", std::string("sousim ") + sousim::kVersion);
  app.require_subcommand(1);

  // run
  std::string config_path;
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  int threads = default_threads();
  std::string out_override;
  auto* run_cmd = app.add_subcommand("run", "execute a scenario from a config file");
  run_cmd->add_option("config", config_path, "config file")->required();
  run_cmd->add_option("--seed", seed_override, "override the seed base")
      ->each([&](const std::string&) { seed_given = true; });
  run_cmd->add_option("--threads", threads, "worker thread count");
  run_cmd->add_option("--out", out_override, "override the output directory");

  // report
  std::string report_dir;
  auto* report_cmd =
      app.add_subcommand("report", "re-evaluate verdicts from saved outputs");
  report_cmd->add_option("dir", report_dir, "run output directory")->required();

  // list-scenarios
  auto* list_cmd = app.add_subcommand("list-scenarios", "print built-in scenario names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (list_cmd->parsed()) {
      for (const auto& name : sousim::scenario_names()) {
        const auto sc = sousim::make_scenario(name);
        std::cout << name << (sc.gating ? "" : "  [diagnostic]") << "\n";
      }
      return 0;
    }

    if (run_cmd->parsed()) {
      sousim::RunSpec spec = sousim::parse_config(config_path);
      if (seed_given) {
        spec.seed_base = seed_override;
        spec.scenario.config.seed = seed_override;
      }
      if (!out_override.empty()) spec.out_dir = out_override;

      std::cout << "scenario " << spec.scenario.name << ": "
                << spec.scenario.replicate_count << " replicates, seed "
                << spec.seed_base << ", " << threads << " threads\n";
      const auto runs = sousim::run_replicates(spec.scenario, spec.seed_base, threads);
      std::vector<sousim::ReplicateSummary> summaries;
      summaries.reserve(runs.size());
      for (const auto& r : runs) summaries.push_back(r.summary);
      const auto stats = sousim::compute_statistics(spec.scenario, summaries);
      const auto verdicts = sousim::evaluate_rules(spec.scenario, stats);
      sousim::write_outputs(spec, runs, stats, verdicts, threads, spec.out_dir);

      print_verdicts(verdicts, spec.scenario.gating);
      std::cout << "outputs written to " << spec.out_dir.string() << "\n";
      if (!spec.scenario.gating) return 0;
      for (const auto& v : verdicts)
        if (!v.pass) return 1;
      return 0;
    }

    if (report_cmd->parsed()) {
      const auto check = sousim::evaluate_report(report_dir);
      for (const auto& note : check.notes) std::cout << "warning: " << note << "\n";
      std::cout << "scenario " << check.scenario_name << "\n";
      print_verdicts(check.verdicts, check.gating_scenario);
      if (!check.digests_ok) std::cout << "warning: digest verification failed\n";
      if (!check.verdicts_match)
        std::cout << "warning: stored verdicts do not match recomputation\n";
      return check.all_gating_pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
