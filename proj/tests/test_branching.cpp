#include <doctest.h>

#include <cmath>
#include <vector>

#include "sousim/branching.hpp"
#include "sousim/model.hpp"

using namespace sousim;

namespace {

ValidatedConfig make_cfg(double m0, std::uint64_t n_unit, Mode mode = Mode::ordinary,
                         InitialMeasure::Kind kind = InitialMeasure::Kind::point_mass_origin,
                         double cloud_var = 1.0) {
  SimConfig c;
  c.dimension = 1;
  c.gamma = 1.0;
  c.beta = 0.5;
  c.particles_per_unit_mass = n_unit;
  c.step = 0.01;
  c.t_max = 10.0;
  c.mode = mode;
  c.initial_measure.kind = kind;
  c.initial_measure.total_mass = m0;
  c.initial_measure.cloud.mean = {0.0};
  c.initial_measure.cloud.variance_per_coordinate = cloud_var;
  return validate_config(c);
}

}  // namespace

TEST_CASE("init_population: point mass") {
  auto cfg = make_cfg(1.0, 100);
  Rng rng(replicate_key(7, 0));
  const auto s = init_population(cfg.raw.initial_measure, cfg, rng);
  CHECK(s.count() == 100);
  CHECK(s.time == 0.0);
  CHECK(s.total_mass() == doctest::Approx(1.0).epsilon(1e-15));
  for (std::size_t i = 0; i < s.count(); ++i) CHECK(s.pos[i] == 0.0);
  // keys unique
  for (std::size_t i = 1; i < s.count(); ++i) CHECK_FALSE(s.key[i] == s.key[0]);
}

TEST_CASE("init_population: m0=2, N=50 gives 100 particles") {
  auto cfg = make_cfg(2.0, 50);
  Rng rng(replicate_key(7, 1));
  const auto s = init_population(cfg.raw.initial_measure, cfg, rng);
  CHECK(s.count() == 100);
}

TEST_CASE("init_population: gaussian cloud sample mean within CLT band") {
  auto cfg = make_cfg(1.0, 100, Mode::ordinary, InitialMeasure::Kind::gaussian_cloud, 1.0);
  Rng rng(replicate_key(7, 2));
  const auto s = init_population(cfg.raw.initial_measure, cfg, rng);
  double mean = 0.0;
  for (std::size_t i = 0; i < s.count(); ++i) mean += s.pos[i];
  mean /= static_cast<double>(s.count());
  CHECK(std::abs(mean) <= 3.0 / std::sqrt(100.0));  // 3 sd / sqrt(n), sd = 1
}

TEST_CASE("next_branch_event: empirical mean waiting time") {
  auto cfg = make_cfg(1.0, 100);
  Rng root(replicate_key(11, 0));
  auto s = init_population(cfg.raw.initial_measure, cfg, root);
  Rng branch = root.substream(kStreamBranch);
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto ev = next_branch_event(s, 100.0, branch);
    CHECK(ev.index < s.count());
    acc += ev.time - s.time;
  }
  const double expected = 1.0 / (100.0 * 100.0);
  // exponential sd equals the mean
  CHECK(std::abs(acc / n - expected) < 3.0 * expected / std::sqrt(n));
}

TEST_CASE("next_branch_event refuses an extinct population") {
  auto cfg = make_cfg(0.01, 100);  // one particle
  Rng root(replicate_key(11, 1));
  auto s = init_population(cfg.raw.initial_measure, cfg, root);
  Rng branch = root.substream(kStreamBranch);
  apply_branch_at(s, 0, 0, 0.5);
  CHECK(s.count() == 0);
  CHECK_THROWS_AS(next_branch_event(s, 100.0, branch), std::logic_error);
}

TEST_CASE("apply_branch: death of the last particle records extinction") {
  auto cfg = make_cfg(0.01, 100);
  Rng root(replicate_key(11, 2));
  auto s = init_population(cfg.raw.initial_measure, cfg, root);
  CHECK(s.count() == 1);
  apply_branch(s, s.id[0], 0, 3.21);
  CHECK(s.count() == 0);
  REQUIRE(detect_extinction(s).has_value());
  CHECK(*detect_extinction(s) == 3.21);
  CHECK_FALSE(s.mean_position().has_value());
}

TEST_CASE("apply_branch: split places both children at the parent site") {
  auto cfg = make_cfg(0.01, 100);
  Rng root(replicate_key(11, 3));
  auto s = init_population(cfg.raw.initial_measure, cfg, root);
  s.pos[0] = 3.0;
  const auto parent = s.particle(0);
  apply_branch_at(s, 0, 2, 0.25);
  REQUIRE(s.count() == 2);
  CHECK(s.pos[0] == 3.0);
  CHECK(s.pos[1] == 3.0);
  CHECK(s.parent[0] == parent.id);
  CHECK(s.parent[1] == parent.id);
  CHECK(s.birth[0] == 0.25);
  CHECK_FALSE(s.key[0] == parent.noise_stream_key);
  CHECK_FALSE(s.key[1] == parent.noise_stream_key);
  CHECK_FALSE(s.key[0] == s.key[1]);
  CHECK_FALSE(detect_extinction(s).has_value());
}

TEST_CASE("apply_branch: mass bookkeeping is exact") {
  auto cfg = make_cfg(1.0, 100);
  Rng root(replicate_key(11, 4));
  auto s = init_population(cfg.raw.initial_measure, cfg, root);
  CHECK(s.total_mass() == doctest::Approx(1.0).epsilon(1e-15));
  apply_branch_at(s, 17, 2, 0.1);
  CHECK(s.total_mass() == doctest::Approx(1.01).epsilon(1e-14));
  const double scaled = s.total_mass() * 100.0;
  CHECK(std::nearbyint(scaled) == 101.0);
  CHECK(std::abs(scaled - 101.0) < 1e-9);
  apply_branch_at(s, 3, 0, 0.2);
  CHECK(s.count() == 100);
  CHECK_THROWS_AS(apply_branch(s, 999999, 0, 0.3), std::logic_error);
  CHECK_THROWS_AS(apply_branch_at(s, 0, 1, 0.3), std::logic_error);
}

TEST_CASE("branch skeleton is deterministic for a fixed seed") {
  auto cfg = make_cfg(1.0, 50);
  for (int trial = 0; trial < 2; ++trial) {
    static std::vector<double> first_times;
    Rng root(replicate_key(99, 5));
    auto s = init_population(cfg.raw.initial_measure, cfg, root);
    Rng branch = root.substream(kStreamBranch);
    std::vector<double> times;
    for (int e = 0; e < 200 && s.count() > 0; ++e) {
      auto ev = next_branch_event(s, 50.0, branch);
      const int off = branch.uniform() < 0.505 ? 2 : 0;
      apply_branch_at(s, ev.index, off, ev.time);
      times.push_back(ev.time);
    }
    if (trial == 0)
      first_times = times;
    else
      CHECK(first_times == times);
  }
}

TEST_CASE("run_mass_only: martingale mean and Feller variance") {
  // Oracle: Feller moments m0 e^{beta t} and (m0/beta)(e^{2 beta t} - e^{beta t}).
  SimConfig c;
  c.mode = Mode::mass_only;
  c.beta = 0.5;
  c.particles_per_unit_mass = 200;
  c.step = 0.1;
  c.t_max = 3.0;
  c.initial_measure.total_mass = 1.0;
  const auto cfg = validate_config(c);

  const int reps = 3000;
  const double t_probe = 3.0;
  std::vector<double> masses;
  int extinct = 0;
  for (int r = 0; r < reps; ++r) {
    Rng root(replicate_key(2024, static_cast<std::uint64_t>(r)));
    const auto traj = run_mass_only(cfg, root, 0.5);
    masses.push_back(traj.mass.back());
    if (traj.extinction_time) {
      ++extinct;
      CHECK(*traj.extinction_time <= 3.0);
      CHECK(traj.mass.back() == 0.0);
    }
  }
  double mean = 0.0;
  for (double m : masses) mean += m;
  mean /= reps;
  double var = 0.0;
  for (double m : masses) var += (m - mean) * (m - mean);
  var /= reps - 1;

  const double em = feller_mean_mass(0.5, 1.0, t_probe);
  const double ev = feller_var_mass(0.5, 1.0, t_probe);
  const double se_mean = std::sqrt(var / reps);
  CHECK(std::abs(mean - em) <= 3.0 * se_mean);
  CHECK(std::abs(var - ev) <= 4.0 * ev * std::sqrt(2.0 / reps) + 0.02 * ev);
}

TEST_CASE("run_mass_only: grid is padded with zeros after extinction") {
  SimConfig c;
  c.mode = Mode::mass_only;
  c.beta = 0.5;
  c.particles_per_unit_mass = 1;
  c.step = 0.1;
  c.t_max = 5.0;
  c.initial_measure.total_mass = 1.0;
  const auto cfg = validate_config(c);
  for (int r = 0; r < 50; ++r) {
    Rng root(replicate_key(555, static_cast<std::uint64_t>(r)));
    const auto traj = run_mass_only(cfg, root, 0.5);
    REQUIRE(traj.times.size() == 11);
    if (traj.extinction_time) {
      for (std::size_t i = 0; i < traj.times.size(); ++i)
        if (traj.times[i] >= *traj.extinction_time) CHECK(traj.mass[i] == 0.0);
    }
    for (std::size_t i = 0; i < traj.mass.size(); ++i) {
      const double scaled = traj.mass[i] * 1.0;
      CHECK(scaled == std::floor(scaled));  // integer particle counts
    }
  }
}
