// Acceptance suite: one pass/fail line per criterion, exit 1 on any gating
// failure. Statistical thresholds are frozen in the scenario registry.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <thread>
#include <vector>

#include "sousim/experiments.hpp"
#include "sousim/io.hpp"
#include "sousim/measure.hpp"

using namespace sousim;

namespace {

int g_threads = 2;
bool g_all_pass = true;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

struct CriterionResult {
  bool pass = true;
  std::string detail;
};

void report(int criterion, const std::string& name, const CriterionResult& r) {
  std::cout << (r.pass ? "PASS" : "FAIL") << "  criterion " << criterion << " (" << name
            << ")";
  if (!r.detail.empty()) std::cout << ": " << r.detail;
  std::cout << "\n" << std::flush;
  if (!r.pass) g_all_pass = false;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Runs a registry scenario and folds its rule verdicts into one result.
CriterionResult run_scenario_criterion(const std::string& name,
                                       std::vector<ReplicateSummary>* keep = nullptr) {
  const Scenario sc = make_scenario(name);
  const double t0 = now_seconds();
  const auto runs = run_replicates(sc, sc.config.seed, g_threads);
  std::vector<ReplicateSummary> summaries;
  summaries.reserve(runs.size());
  for (const auto& r : runs) summaries.push_back(r.summary);
  if (keep != nullptr) *keep = summaries;
  const auto stats = compute_statistics(sc, summaries);
  const auto verdicts = evaluate_rules(sc, stats);
  CriterionResult res;
  std::string detail;
  for (const auto& v : verdicts) {
    if (!detail.empty()) detail += ", ";
    detail += v.rule.statistic + "=" + fmt(v.value);
    if (!v.pass) {
      detail += "[FAIL vs " + v.rule.comparator + " " + fmt(v.rule.target) + "]";
      res.pass = false;
    }
  }
  res.detail = detail + "  [" + fmt(now_seconds() - t0) + "s]";
  return res;
}

// --- criterion 8: exact invariants, no statistics --------------------------

CriterionResult invariant_suite() {
  CriterionResult res;
  auto fail = [&](const std::string& why) {
    res.pass = false;
    if (!res.detail.empty()) res.detail += "; ";
    res.detail += why;
  };

  // BL metric axioms and the cap
  {
    Rng rng(Key128{1001, 7});
    for (int trial = 0; trial < 25; ++trial) {
      auto draw = [&](int n) {
        std::vector<double> v(n);
        for (auto& x : v) x = 2.0 * rng.normal();
        return v;
      };
      const auto a = draw(11), b = draw(17), c = draw(8);
      const double ab = bl_distance_1d(a, b), ba = bl_distance_1d(b, a);
      const double bc = bl_distance_1d(b, c), ac = bl_distance_1d(a, c);
      if (std::abs(ab - ba) > 1e-12) fail("bl symmetry");
      if (ab < 0.0 || ab > 2.0) fail("bl range/cap");
      if (ac > ab + bc + 1e-12) fail("bl triangle");
      if (bl_distance_1d(a, a) != 0.0) fail("bl identity");
    }
    if (std::abs(bl_distance_1d({0.0}, {1.3}) - 1.3) > 1e-14) fail("bl point pair");
    if (bl_distance_1d({0.0}, {9.0}) != 2.0) fail("bl cap at 2");
  }

  // OU step moment formulas
  {
    const auto s = ou_step_coefficients(1.0, 0.5);
    if (std::abs(s.decay - std::exp(-0.5)) > 1e-14) fail("ou decay");
    if (std::abs(s.noise_sd * s.noise_sd - (1.0 - std::exp(-1.0)) / 2.0) > 1e-14)
      fail("ou variance");
    const auto z = ou_step_coefficients(0.0, 0.04);
    if (z.decay != 1.0 || std::abs(z.noise_sd - 0.2) > 1e-15) fail("ou gamma=0");
  }

  SimConfig base;
  base.dimension = 1;
  base.gamma = 1.0;
  base.beta = 0.5;
  base.particles_per_unit_mass = 40;
  base.step = 0.01;
  base.t_max = 1.5;
  base.initial_measure.kind = InitialMeasure::Kind::gaussian_cloud;
  base.initial_measure.total_mass = 1.0;
  base.initial_measure.cloud.mean = {0.0};
  base.initial_measure.cloud.variance_per_coordinate = 1.0;

  // gamma = 0 equivalence: Zbar_t = Ybar_t, coupling error exactly zero
  {
    auto c = base;
    c.mode = Mode::coupled;
    c.gamma = 0.0;
    EngineOptions opt;
    opt.record_dt = 0.1;
    opt.track_coupling = true;
    const auto out = run_replicate(validate_config(c), opt, 81, 0);
    if (!out.summary.sup_coupling_error || *out.summary.sup_coupling_error != 0.0)
      fail("gamma=0 coupling not exact");
    for (const auto& pt : out.trajectory.points)
      if (pt.com[0] != pt.com_y[0]) fail("gamma=0 Zbar != Ybar");
  }

  // single-particle zero drift: one interacting particle is a pure Brownian path
  {
    SimConfig c = base;
    c.mode = Mode::interacting;
    c.gamma = 5.0;
    c.particles_per_unit_mass = 1;
    c.initial_measure = InitialMeasure{};
    c.initial_measure.total_mass = 1.0;
    c.beta = 0.1;  // rare branching
    EngineOptions opt;
    opt.record_dt = 0.1;
    const auto a = run_replicate(validate_config(c), opt, 82, 0);
    c.gamma = 0.0;
    const auto b = run_replicate(validate_config(c), opt, 82, 0);
    const std::size_t n = std::min(a.trajectory.points.size(), b.trajectory.points.size());
    for (std::size_t i = 0; i < n; ++i)
      if (a.trajectory.points[i].com != b.trajectory.points[i].com)
        fail("single-particle drift not zero");
  }

  // translation equivariance (interacting) and its failure (ordinary)
  {
    auto c = base;
    c.mode = Mode::interacting;
    auto shifted = c;
    shifted.initial_measure.cloud.mean = {3.0};
    EngineOptions opt;
    opt.record_dt = 0.5;
    const auto a = run_replicate(validate_config(c), opt, 83, 0);
    const auto b = run_replicate(validate_config(shifted), opt, 83, 0);
    for (std::size_t i = 0; i < a.trajectory.points.size(); ++i)
      if (std::abs(b.trajectory.points[i].com_y[0] -
                   a.trajectory.points[i].com_y[0] - 3.0) > 1e-9)
        fail("interacting translation equivariance");

    auto co = base;
    co.mode = Mode::ordinary;
    auto so = co;
    so.initial_measure.cloud.mean = {3.0};
    const auto ao = run_replicate(validate_config(co), opt, 83, 0);
    const auto bo = run_replicate(validate_config(so), opt, 83, 0);
    const double gap = bo.trajectory.points.back().com[0] -
                       ao.trajectory.points.back().com[0];
    if (std::abs(gap - 3.0) < 0.5) fail("ordinary dynamics unexpectedly equivariant");
  }

  // mass bookkeeping exactness across branch events
  {
    auto c = base;
    c.mode = Mode::ordinary;
    const auto cfg = validate_config(c);
    Rng root(replicate_key(84, 0));
    auto s = init_population(cfg.raw.initial_measure, cfg, root);
    Rng branch = root.substream(kStreamBranch);
    for (int e = 0; e < 500 && s.count() > 0; ++e) {
      const auto ev = next_branch_event(s, 40.0, branch);
      const int off = branch.uniform() < 0.51 ? 2 : 0;
      const auto pos_before = s.count() > 1 ? s.pos[1] : 0.0;
      apply_branch_at(s, ev.index, off, ev.time);
      const double scaled = s.total_mass() * 40.0;
      if (std::abs(scaled - std::nearbyint(scaled)) > 1e-9) fail("mass*N not integral");
      if (std::nearbyint(scaled) != static_cast<double>(s.count()))
        fail("mass != count/N");
      (void)pos_before;
    }
  }

  // byte-level determinism under fixed seeds and varying parallelism
  {
    Scenario sc = make_scenario("volterra_identity");
    sc.replicate_count = 3;
    const auto r1 = run_replicates(sc, 4242, 1);
    const auto r3 = run_replicates(sc, 4242, 3);
    for (std::size_t i = 0; i < r1.size(); ++i)
      if (summary_to_json(r1[i].summary) != summary_to_json(r3[i].summary))
        fail("parallelism changed results");
  }

  if (res.pass) res.detail = "bl axioms/cap, ou moments, gamma=0, single-particle, "
                             "equivariance, mass exactness, parallel determinism";
  return res;
}

CriterionResult volterra_criterion() {
  CriterionResult res;
  double worst = 0.0;
  for (double gamma : {1.0, -0.2}) {
    Scenario sc = make_scenario("volterra_identity");
    sc.config.gamma = gamma;
    const auto runs = run_replicates(sc, sc.config.seed, g_threads);
    std::vector<ReplicateSummary> summaries;
    for (const auto& r : runs) summaries.push_back(r.summary);
    const auto stats = compute_statistics(sc, summaries);
    const auto verdicts = evaluate_rules(sc, stats);
    for (const auto& v : verdicts) {
      worst = std::max(worst, v.value);
      if (!v.pass) res.pass = false;
    }
  }
  res.detail = "max residual " + fmt(worst) + " (tolerance on both signs of gamma)";
  return res;
}

void run_diagnostics() {
  for (const std::string name : {"local_limit", "local_extinction", "conjecture_scan"}) {
    const Scenario sc = make_scenario(name);
    const double t0 = now_seconds();
    const auto runs = run_replicates(sc, sc.config.seed, g_threads);
    std::vector<ReplicateSummary> summaries;
    for (const auto& r : runs) summaries.push_back(r.summary);
    const auto stats = compute_statistics(sc, summaries);
    std::cout << "info  diagnostic " << name << ":";
    for (const auto& [k, v] : stats)
      if (k.rfind("local", 0) == 0 || k.rfind("alpha", 0) == 0)
        std::cout << " " << k << "=" << fmt(v);
    std::cout << "  [" << fmt(now_seconds() - t0) << "s]\n";
  }
}

}  // namespace

int main() {
  const char* env = std::getenv("SOUSIM_THREADS");
  g_threads = env != nullptr ? std::max(1, std::atoi(env))
                             : std::max(1u, std::thread::hardware_concurrency());
  std::cout << "acceptance suite, " << g_threads << " threads\n";

  std::vector<ReplicateSummary> mass_summaries;
  const auto mass = run_scenario_criterion("mass_martingale", &mass_summaries);

  // criteria 1 and 2 share the mass_martingale scenario run
  {
    const Scenario sc = make_scenario("mass_martingale");
    const auto stats = compute_statistics(sc, mass_summaries);
    CriterionResult c1;
    const double freq = stats.at("extinction_frequency");
    c1.pass = std::abs(freq - std::exp(-1.0)) <= 0.02;
    c1.detail = "extinction frequency " + fmt(freq) + " vs e^-1=" +
                fmt(std::exp(-1.0)) + " +-0.02";
    report(1, "extinction probability", c1);

    CriterionResult c2;
    c2.pass = stats.at("mass_martingale_max_dev_se") <= 3.0 &&
              stats.at("laplace_dev_se") <= 3.0;
    c2.detail = "max |mean e^{-bt}M_t - m0|/SE = " +
                fmt(stats.at("mass_martingale_max_dev_se")) +
                ", laplace dev/SE = " + fmt(stats.at("laplace_dev_se")) + "  " +
                mass.detail;
    c2.pass = c2.pass && mass.pass;
    report(2, "mass martingale + laplace", c2);
  }

  report(3, "correspondence coupling", run_scenario_criterion("coupling_convergence"));
  report(4, "attractive gaussian limit", run_scenario_criterion("attractive_convergence"));
  report(5, "extinction concentration", run_scenario_criterion("extinction_point"));
  report(6, "repelling regime", run_scenario_criterion("repelling_com"));
  report(7, "martingale problem", run_scenario_criterion("martingale_problem"));
  report(8, "invariant suite", invariant_suite());
  report(9, "volterra identity", volterra_criterion());

  run_diagnostics();

  std::cout << (g_all_pass ? "ALL ACCEPTANCE CRITERIA PASS" : "ACCEPTANCE FAILURES PRESENT")
            << "\n";
  return g_all_pass ? 0 : 1;
}
