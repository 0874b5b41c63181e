#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sousim/io.hpp"

using namespace sousim;
namespace fs = std::filesystem;

namespace {

std::string minimal_config = R"([scenario]
name = volterra_identity
replicates = 2
)";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("sousim_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("parse_config: minimal file with defaults") {
  const auto spec = parse_config_text(minimal_config, "mem");
  CHECK(spec.scenario.name == "volterra_identity");
  CHECK(spec.scenario.replicate_count == 2);
  CHECK(spec.seed_base == spec.scenario.config.seed);
  CHECK(spec.grid_stride >= 1);
}

TEST_CASE("parse_config: unknown key is an error") {
  CHECK_THROWS_WITH_AS(
      parse_config_text("[scenario]\nname = volterra_identity\nbogus = 1\n", "mem"),
      doctest::Contains("unknown key 'scenario.bogus'"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[model]\ngamma = 1\n", "mem"), ConfigError);
}

TEST_CASE("parse_config: type mismatch names the key") {
  CHECK_THROWS_WITH_AS(
      parse_config_text("[scenario]\nname = volterra_identity\n[model]\ngamma = []\n",
                        "mem"),
      doctest::Contains("model.gamma"), ConfigError);
}

TEST_CASE("parse_config: canonical round trip") {
  const auto spec = parse_config_text(minimal_config, "mem");
  const std::string canon = emit_canonical(spec);
  const auto spec2 = parse_config_text(canon, "mem2");
  CHECK(emit_canonical(spec2) == canon);
}

TEST_CASE("digest is stable and content-sensitive") {
  CHECK(digest_hex("") == digest_hex(""));
  CHECK(digest_hex("a") != digest_hex("b"));
  CHECK(digest_hex("sousim") == digest_hex("sousim"));
}

TEST_CASE("summary json round trip") {
  ReplicateSummary s;
  s.replicate_index = 3;
  s.seed = 45;
  s.survived = false;
  s.eta = 1.25;
  s.t_final = 1.25;
  s.w_estimate = 0.0;
  s.zbar_final = std::vector<double>{0.125};
  s.extinction = ExtinctionReport{1.25, {0.125}, {0.5}, {0.375}};
  s.mass_probes = {{1.0, 2.5}};
  s.martingale = {{1.0, -0.017, 0.042}};
  s.dybar_early = 0.3;
  const auto line = summary_to_json(s);
  const auto back = summary_from_json(line);
  CHECK(summary_to_json(back) == line);
  CHECK(back.extinction->f_prime_estimate[0] == 0.5);
}

TEST_CASE("write_outputs produces the documented files; reruns are byte-identical") {
  auto spec = parse_config_text(minimal_config, "mem");
  spec.scenario.replicate_count = 2;

  const auto runs = run_replicates(spec.scenario, spec.seed_base, 2);
  std::vector<ReplicateSummary> summaries;
  for (const auto& r : runs) summaries.push_back(r.summary);
  const auto stats = compute_statistics(spec.scenario, summaries);
  const auto verdicts = evaluate_rules(spec.scenario, stats);

  const fs::path dir1 = temp_dir("w1"), dir2 = temp_dir("w2");
  write_outputs(spec, runs, stats, verdicts, 2, dir1);
  write_outputs(spec, runs, stats, verdicts, 1, dir2);

  for (const char* name : {"timeseries.csv", "summaries.jsonl", "report.json",
                           "manifest.json"})
    CHECK(fs::exists(dir1 / name));

  // header shape
  {
    std::ifstream csv(dir1 / "timeseries.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header ==
          "replicate,t,mass,com_1,spread,bl_ordinary,bl_interacting,"
          "exp_gamma_t_zbar_1,com_y_1");
  }

  // identical data files regardless of thread count (timestamps live in manifest)
  CHECK(read_file(dir1 / "timeseries.csv") == read_file(dir2 / "timeseries.csv"));
  CHECK(read_file(dir1 / "summaries.jsonl") == read_file(dir2 / "summaries.jsonl"));
  CHECK(read_file(dir1 / "report.json") == read_file(dir2 / "report.json"));
}

TEST_CASE("evaluate_report: verdicts reproduce and tampering is detected") {
  auto spec = parse_config_text(minimal_config, "mem");
  const auto runs = run_replicates(spec.scenario, spec.seed_base, 2);
  std::vector<ReplicateSummary> summaries;
  for (const auto& r : runs) summaries.push_back(r.summary);
  const auto stats = compute_statistics(spec.scenario, summaries);
  const auto verdicts = evaluate_rules(spec.scenario, stats);
  const fs::path dir = temp_dir("rep");
  write_outputs(spec, runs, stats, verdicts, 1, dir);

  const auto check = evaluate_report(dir);
  CHECK(check.digests_ok);
  CHECK(check.verdicts_match);
  CHECK(check.scenario_name == "volterra_identity");

  // tamper with the summaries
  {
    std::ofstream out(dir / "summaries.jsonl", std::ios::app);
    out << "\n";
  }
  const auto tampered = evaluate_report(dir);
  CHECK_FALSE(tampered.digests_ok);
}
