#include "sousim/io.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "sousim/version.hpp"

namespace sousim {

using nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::runtime_error io_error(const std::filesystem::path& p, const std::string& what) {
  return std::runtime_error(p.string() + ": " + what);
}

struct KeyValue {
  std::string key;  // section.name or bare name
  std::string value;
  int line = 0;
};

std::vector<KeyValue> tokenize_config(const std::string& text, const std::string& origin) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    trim(key);
    trim(value);
    if (key.empty() || value.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
    out.push_back({section.empty() ? key : section + "." + key, value, lineno});
  }
  return out;
}

double parse_number(const KeyValue& kv, const std::string& origin) {
  try {
    std::size_t used = 0;
    const double v = std::stod(kv.value, &used);
    if (used != kv.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin + ":" + std::to_string(kv.line) + ": key '" + kv.key +
                      "': expected a number, got '" + kv.value + "'");
  }
}

std::uint64_t parse_uint(const KeyValue& kv, const std::string& origin) {
  const double v = parse_number(kv, origin);
  if (v < 0 || v != std::floor(v))
    throw ConfigError(origin + ":" + std::to_string(kv.line) + ": key '" + kv.key +
                      "': expected a nonnegative integer");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

RunSpec parse_config_text(const std::string& text, const std::string& origin) {
  const auto kvs = tokenize_config(text, origin);

  std::string scenario_name;
  for (const auto& kv : kvs)
    if (kv.key == "scenario.name") scenario_name = kv.value;
  if (scenario_name.empty())
    throw ConfigError(origin + ": missing required key scenario.name");

  RunSpec spec;
  spec.scenario = make_scenario(scenario_name);
  spec.seed_base = spec.scenario.config.seed;
  const double h0 = spec.scenario.config.step;
  spec.grid_stride = std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(std::llround(spec.scenario.engine.record_dt / h0)));

  bool h_set = false, stride_set = false;
  for (const auto& kv : kvs) {
    auto& cfg = spec.scenario.config;
    if (kv.key == "scenario.name") {
      // already consumed
    } else if (kv.key == "model.gamma") {
      cfg.gamma = parse_number(kv, origin);
    } else if (kv.key == "model.beta") {
      cfg.beta = parse_number(kv, origin);
    } else if (kv.key == "model.d") {
      cfg.dimension = static_cast<int>(parse_uint(kv, origin));
    } else if (kv.key == "numerics.N") {
      cfg.particles_per_unit_mass = parse_uint(kv, origin);
    } else if (kv.key == "numerics.h") {
      cfg.step = parse_number(kv, origin);
      h_set = true;
    } else if (kv.key == "numerics.t_max") {
      cfg.t_max = parse_number(kv, origin);
    } else if (kv.key == "numerics.Q") {
      cfg.slice_count = static_cast<int>(parse_uint(kv, origin));
    } else if (kv.key == "scenario.replicates") {
      spec.scenario.replicate_count = parse_uint(kv, origin);
    } else if (kv.key == "scenario.conditioning") {
      spec.scenario.conditioning = conditioning_from_string(kv.value);
    } else if (kv.key == "output.dir") {
      spec.out_dir = kv.value;
    } else if (kv.key == "output.grid_stride") {
      spec.grid_stride = std::max<std::uint64_t>(1, parse_uint(kv, origin));
      stride_set = true;
    } else if (kv.key == "seed") {
      spec.seed_base = parse_uint(kv, origin);
    } else {
      throw ConfigError(origin + ":" + std::to_string(kv.line) + ": unknown key '" +
                        kv.key + "'");
    }
  }
  if (h_set && !stride_set) {
    // keep the scenario's record spacing roughly intact under a new h
    spec.grid_stride = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(
               std::llround(spec.scenario.engine.record_dt / spec.scenario.config.step)));
  }
  spec.scenario.config.seed = spec.seed_base;
  spec.scenario.engine.record_dt =
      spec.scenario.config.step * static_cast<double>(spec.grid_stride);
  validate_config(spec.scenario.config);
  return spec;
}

RunSpec parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::string emit_canonical(const RunSpec& spec) {
  const auto& c = spec.scenario.config;
  std::ostringstream out;
  out << "seed = " << spec.seed_base << "\n\n";
  out << "[model]\n";
  out << "gamma = " << fmt17(c.gamma) << "\n";
  out << "beta = " << fmt17(c.beta) << "\n";
  out << "d = " << c.dimension << "\n\n";
  out << "[numerics]\n";
  out << "N = " << c.particles_per_unit_mass << "\n";
  out << "h = " << fmt17(c.step) << "\n";
  out << "t_max = " << fmt17(c.t_max) << "\n";
  out << "Q = " << c.slice_count << "\n\n";
  out << "[scenario]\n";
  out << "name = " << spec.scenario.name << "\n";
  out << "replicates = " << spec.scenario.replicate_count << "\n";
  out << "conditioning = " << to_string(spec.scenario.conditioning) << "\n\n";
  out << "[output]\n";
  out << "dir = " << spec.out_dir.string() << "\n";
  out << "grid_stride = " << spec.grid_stride << "\n";
  return out.str();
}

std::string digest_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open for digest");
  std::stringstream ss;
  ss << in.rdbuf();
  return digest_hex(ss.str());
}

// --- summary JSON -----------------------------------------------------------

namespace {

json probes_to_json(const std::vector<std::pair<double, std::vector<double>>>& v) {
  json arr = json::array();
  for (const auto& [t, vals] : v) arr.push_back({{"t", t}, {"value", vals}});
  return arr;
}

void probes_from_json(const json& arr,
                      std::vector<std::pair<double, std::vector<double>>>& out) {
  for (const auto& e : arr)
    out.emplace_back(e.at("t").get<double>(), e.at("value").get<std::vector<double>>());
}

}  // namespace

std::string summary_to_json(const ReplicateSummary& s) {
  json j;
  j["replicate"] = s.replicate_index;
  j["seed"] = s.seed;
  j["survived"] = s.survived;
  j["censored_early"] = s.censored_early;
  if (s.eta) j["eta"] = *s.eta;
  j["t_final"] = s.t_final;
  j["final_mass"] = s.final_mass;
  j["w_estimate"] = s.w_estimate;
  if (s.zbar_final) j["zbar_final"] = *s.zbar_final;
  if (s.ybar_final) j["ybar_final"] = *s.ybar_final;
  if (s.bl_ordinary_final) j["bl_ordinary_final"] = *s.bl_ordinary_final;
  if (s.bl_interacting_final) j["bl_interacting_final"] = *s.bl_interacting_final;
  if (s.extinction) {
    j["extinction"] = {{"eta", s.extinction->eta},
                       {"F", s.extinction->f_estimate},
                       {"F_prime", s.extinction->f_prime_estimate},
                       {"offset_at_eta", s.extinction->offset_at_eta}};
  }
  if (s.sup_coupling_error) j["sup_coupling_error"] = *s.sup_coupling_error;
  if (s.sup_coupling_error_half)
    j["sup_coupling_error_half"] = *s.sup_coupling_error_half;
  if (s.volterra_max_residual) j["volterra_max_residual"] = *s.volterra_max_residual;
  if (!s.martingale.empty()) {
    json arr = json::array();
    for (const auto& p : s.martingale)
      arr.push_back({{"t", p.t}, {"nhat", p.nhat}, {"predicted_qv", p.predicted_qv}});
    j["martingale"] = arr;
  }
  if (!s.mass_probes.empty()) {
    json arr = json::array();
    for (const auto& [t, m] : s.mass_probes) arr.push_back({{"t", t}, {"value", m}});
    j["mass_probes"] = arr;
  }
  if (!s.exp_gamma_t_zbar_probes.empty())
    j["exp_gamma_t_zbar_probes"] = probes_to_json(s.exp_gamma_t_zbar_probes);
  if (!s.ybar_probes.empty()) j["ybar_probes"] = probes_to_json(s.ybar_probes);
  if (!s.spread_probes.empty()) {
    json arr = json::array();
    for (const auto& [t, v] : s.spread_probes) arr.push_back({{"t", t}, {"value", v}});
    j["spread_probes"] = arr;
  }
  if (!s.window_mass_probes.empty())
    j["window_mass_probes"] = probes_to_json(s.window_mass_probes);
  j["initial_spread"] = s.initial_spread;
  if (s.spread_last_5plus) j["spread_last_5plus"] = *s.spread_last_5plus;
  if (s.dybar_early) j["dybar_early"] = *s.dybar_early;
  if (s.dybar_late) j["dybar_late"] = *s.dybar_late;
  return j.dump();
}

ReplicateSummary summary_from_json(const std::string& line) {
  const json j = json::parse(line);
  ReplicateSummary s;
  s.replicate_index = j.at("replicate").get<std::uint64_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.survived = j.at("survived").get<bool>();
  s.censored_early = j.value("censored_early", false);
  if (j.contains("eta")) s.eta = j["eta"].get<double>();
  s.t_final = j.at("t_final").get<double>();
  s.final_mass = j.at("final_mass").get<double>();
  s.w_estimate = j.at("w_estimate").get<double>();
  if (j.contains("zbar_final")) s.zbar_final = j["zbar_final"].get<std::vector<double>>();
  if (j.contains("ybar_final")) s.ybar_final = j["ybar_final"].get<std::vector<double>>();
  if (j.contains("bl_ordinary_final"))
    s.bl_ordinary_final = j["bl_ordinary_final"].get<double>();
  if (j.contains("bl_interacting_final"))
    s.bl_interacting_final = j["bl_interacting_final"].get<double>();
  if (j.contains("extinction")) {
    ExtinctionReport r;
    r.eta = j["extinction"].at("eta").get<double>();
    r.f_estimate = j["extinction"].at("F").get<std::vector<double>>();
    r.f_prime_estimate = j["extinction"].at("F_prime").get<std::vector<double>>();
    r.offset_at_eta = j["extinction"].at("offset_at_eta").get<std::vector<double>>();
    s.extinction = std::move(r);
  }
  if (j.contains("sup_coupling_error"))
    s.sup_coupling_error = j["sup_coupling_error"].get<double>();
  if (j.contains("sup_coupling_error_half"))
    s.sup_coupling_error_half = j["sup_coupling_error_half"].get<double>();
  if (j.contains("volterra_max_residual"))
    s.volterra_max_residual = j["volterra_max_residual"].get<double>();
  if (j.contains("martingale"))
    for (const auto& e : j["martingale"])
      s.martingale.push_back({e.at("t").get<double>(), e.at("nhat").get<double>(),
                              e.at("predicted_qv").get<double>()});
  if (j.contains("mass_probes"))
    for (const auto& e : j["mass_probes"])
      s.mass_probes.emplace_back(e.at("t").get<double>(), e.at("value").get<double>());
  if (j.contains("exp_gamma_t_zbar_probes"))
    probes_from_json(j["exp_gamma_t_zbar_probes"], s.exp_gamma_t_zbar_probes);
  if (j.contains("ybar_probes")) probes_from_json(j["ybar_probes"], s.ybar_probes);
  if (j.contains("spread_probes"))
    for (const auto& e : j["spread_probes"])
      s.spread_probes.emplace_back(e.at("t").get<double>(), e.at("value").get<double>());
  if (j.contains("window_mass_probes"))
    probes_from_json(j["window_mass_probes"], s.window_mass_probes);
  s.initial_spread = j.value("initial_spread", 0.0);
  if (j.contains("spread_last_5plus"))
    s.spread_last_5plus = j["spread_last_5plus"].get<double>();
  if (j.contains("dybar_early")) s.dybar_early = j["dybar_early"].get<double>();
  if (j.contains("dybar_late")) s.dybar_late = j["dybar_late"].get<double>();
  return s;
}

// --- output files -----------------------------------------------------------

namespace {

json verdicts_to_json(const std::vector<Verdict>& verdicts) {
  json arr = json::array();
  for (const auto& v : verdicts)
    arr.push_back({{"statistic", v.rule.statistic},
                   {"comparator", v.rule.comparator},
                   {"target", v.rule.target},
                   {"tolerance", v.rule.tolerance},
                   {"value", v.value},
                   {"pass", v.pass}});
  return arr;
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

WriteResult write_outputs(const RunSpec& spec, const std::vector<ReplicateOutput>& runs,
                          const StatMap& stats, const std::vector<Verdict>& verdicts,
                          int threads, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const std::string started = timestamp_now();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error(dir, "cannot create output directory: " + ec.message());

  const int d = spec.scenario.config.dimension;
  WriteResult result;

  // timeseries.csv
  const fs::path csv_path = dir / "timeseries.csv";
  {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw io_error(csv_path, "cannot open for writing");
    csv << "replicate,t,mass";
    for (int k = 1; k <= d; ++k) csv << ",com_" << k;
    csv << ",spread,bl_ordinary,bl_interacting";
    for (int k = 1; k <= d; ++k) csv << ",exp_gamma_t_zbar_" << k;
    for (int k = 1; k <= d; ++k) csv << ",com_y_" << k;
    csv << "\n";
    for (const auto& run : runs) {
      for (const auto& pt : run.trajectory.points) {
        csv << run.summary.replicate_index << ',' << fmt17(pt.t) << ',' << fmt17(pt.mass);
        for (int k = 0; k < d; ++k)
          csv << ','
              << (static_cast<int>(pt.com.size()) == d ? fmt17(pt.com[k]) : std::string());
        csv << ',' << fmt17(pt.spread);
        csv << ',' << (std::isnan(pt.bl_ordinary) ? std::string() : fmt17(pt.bl_ordinary));
        csv << ','
            << (std::isnan(pt.bl_interacting) ? std::string() : fmt17(pt.bl_interacting));
        for (int k = 0; k < d; ++k)
          csv << ','
              << (static_cast<int>(pt.exp_gamma_t_zbar.size()) == d
                      ? fmt17(pt.exp_gamma_t_zbar[k])
                      : std::string());
        for (int k = 0; k < d; ++k)
          csv << ','
              << (static_cast<int>(pt.com_y.size()) == d ? fmt17(pt.com_y[k])
                                                         : std::string());
        csv << '\n';
      }
    }
  }
  result.files.push_back(csv_path);

  // summaries.jsonl
  const fs::path sum_path = dir / "summaries.jsonl";
  {
    std::ofstream out(sum_path, std::ios::binary);
    if (!out) throw io_error(sum_path, "cannot open for writing");
    for (const auto& run : runs) out << summary_to_json(run.summary) << "\n";
  }
  result.files.push_back(sum_path);

  // report.json
  const fs::path rep_path = dir / "report.json";
  {
    json rep;
    rep["scenario"] = spec.scenario.name;
    rep["description"] = spec.scenario.description;
    rep["gating"] = spec.scenario.gating;
    rep["statistics"] = stats;
    rep["verdicts"] = verdicts_to_json(verdicts);
    bool all = true;
    for (const auto& v : verdicts) all = all && v.pass;
    rep["overall_pass"] = !spec.scenario.gating || all;
    std::ofstream out(rep_path, std::ios::binary);
    if (!out) throw io_error(rep_path, "cannot open for writing");
    out << rep.dump(2) << "\n";
  }
  result.files.push_back(rep_path);

  // manifest.json (timestamps live here only, keeping data files reproducible)
  const fs::path man_path = dir / "manifest.json";
  {
    json man;
    man["version"] = kVersion;
    man["scenario"] = spec.scenario.name;
    man["config"] = emit_canonical(spec);
    man["seed_base"] = spec.seed_base;
    json seeds = json::array();
    for (std::uint64_t i = 0; i < spec.scenario.replicate_count; ++i)
      seeds.push_back(spec.seed_base + i);
    man["replicate_seeds"] = seeds;
    man["threads"] = threads;
    man["started"] = started;
    man["finished"] = timestamp_now();
    json files;
    for (const auto& f : result.files) files[f.filename().string()] = digest_file(f);
    man["files"] = files;
    man["digest"] = "fnv1a64";
    std::ofstream out(man_path, std::ios::binary);
    if (!out) throw io_error(man_path, "cannot open for writing");
    out << man.dump(2) << "\n";
  }
  result.files.push_back(man_path);
  return result;
}

ReportCheck evaluate_report(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  ReportCheck check;

  const fs::path man_path = dir / "manifest.json";
  std::ifstream man_in(man_path);
  if (!man_in) throw io_error(man_path, "cannot open manifest");
  json man = json::parse(man_in);

  for (const auto& [name, digest] : man.at("files").items()) {
    const fs::path f = dir / name;
    if (!fs::exists(f)) {
      check.digests_ok = false;
      check.notes.push_back("missing file " + name);
      continue;
    }
    const std::string actual = digest_file(f);
    if (actual != digest.get<std::string>()) {
      check.digests_ok = false;
      check.notes.push_back("digest mismatch for " + name +
                            " (tampered or regenerated?)");
    }
  }

  RunSpec spec = parse_config_text(man.at("config").get<std::string>(), man_path.string());
  check.scenario_name = spec.scenario.name;
  check.gating_scenario = spec.scenario.gating;

  std::vector<ReplicateSummary> summaries;
  {
    const fs::path sum_path = dir / "summaries.jsonl";
    std::ifstream in(sum_path);
    if (!in) throw io_error(sum_path, "cannot open summaries");
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) summaries.push_back(summary_from_json(line));
  }

  check.stats = compute_statistics(spec.scenario, summaries);
  check.verdicts = evaluate_rules(spec.scenario, check.stats);

  // Compare with the stored verdicts.
  {
    const fs::path rep_path = dir / "report.json";
    std::ifstream in(rep_path);
    if (!in) throw io_error(rep_path, "cannot open report");
    json rep = json::parse(in);
    const json stored = rep.at("verdicts");
    const json fresh = verdicts_to_json(check.verdicts);
    check.verdicts_match = stored == fresh;
    if (!check.verdicts_match)
      check.notes.push_back("recomputed verdicts differ from stored report.json");
  }

  check.all_gating_pass = true;
  if (check.gating_scenario)
    for (const auto& v : check.verdicts) check.all_gating_pass &= v.pass;
  return check;
}

}  // namespace sousim
