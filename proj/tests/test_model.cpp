#include <doctest.h>

#include <cmath>

#include "sousim/model.hpp"

using namespace sousim;

namespace {

SimConfig base_config() {
  SimConfig c;
  c.dimension = 1;
  c.gamma = 1.0;
  c.beta = 0.5;
  c.particles_per_unit_mass = 100;
  c.step = 0.01;
  c.t_max = 10.0;
  c.initial_measure.total_mass = 1.0;
  return c;
}

}  // namespace

TEST_CASE("validate_config materializes derived fields") {
  const auto v = validate_config(base_config());
  CHECK(v.initial_particle_count == 100);
  CHECK(v.grid_steps == 1000);
  CHECK_FALSE(v.rounding_warning);
}

TEST_CASE("validate_config rejects bad inputs") {
  auto c = base_config();
  c.step = 0.0;
  CHECK_THROWS_WITH_AS(validate_config(c), "step must be positive", ConfigError);

  c = base_config();
  c.t_max = 0.005;
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = base_config();
  c.beta = 0.0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = base_config();
  c.initial_measure.total_mass = 0.0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = base_config();
  c.initial_measure.total_mass = 0.004;  // rounds to zero particles
  CHECK_THROWS_AS(validate_config(c), ConfigError);
}

TEST_CASE("validate_config flags coarse rounding") {
  auto c = base_config();
  c.particles_per_unit_mass = 10;
  c.initial_measure.total_mass = 0.26;  // 2.6 particles -> 3, 15% error
  const auto v = validate_config(c);
  CHECK(v.initial_particle_count == 3);
  CHECK(v.rounding_warning);
}

TEST_CASE("stationary law matches the OU density") {
  const auto g1 = stationary_law(1.0, 1);
  CHECK(g1.variance_per_coordinate == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(g1.mean.size() == 1);
  CHECK(g1.mean[0] == 0.0);

  const auto g3 = stationary_law(0.5, 3);
  CHECK(g3.variance_per_coordinate == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(g3.mean.size() == 3);

  CHECK_THROWS_AS(stationary_law(0.0, 1), ConfigError);
  CHECK_THROWS_AS(stationary_law(-0.3, 1), ConfigError);
}

TEST_CASE("stationary variance scales as 1/gamma") {
  const double v1 = stationary_law(0.7, 1).variance_per_coordinate;
  const double v2 = stationary_law(2.1, 1).variance_per_coordinate;
  CHECK(v1 / v2 == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(stationary_law(0.2, 1).variance_per_coordinate >
        stationary_law(0.3, 1).variance_per_coordinate);
}

TEST_CASE("extinction probability closed form") {
  CHECK(extinction_probability(0.5, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(extinction_probability(1.0, 0.25) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(extinction_probability(0.5, 1e6) < 1e-300);  // m0 -> infinity limit
  // strictly decreasing in both arguments
  CHECK(extinction_probability(0.5, 1.0) > extinction_probability(0.6, 1.0));
  CHECK(extinction_probability(0.5, 1.0) > extinction_probability(0.5, 1.1));
  // m0 -> 0 boundary tends to 1
  CHECK(extinction_probability(0.5, 1e-12) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("offspring calibration") {
  const auto law = offspring_probabilities(0.5, 100);
  CHECK(law.p2 == doctest::Approx(0.5025).epsilon(1e-14));
  CHECK(law.p0 == doctest::Approx(0.4975).epsilon(1e-14));
  CHECK(law.per_particle_rate == 100.0);
  CHECK(law.p0 + law.p2 == doctest::Approx(1.0).epsilon(1e-15));

  const auto crit = offspring_probabilities(0.0, 7);
  CHECK(crit.p0 == 0.5);
  CHECK(crit.p2 == 0.5);

  CHECK_THROWS_AS(offspring_probabilities(5.0, 4), ConfigError);
}

TEST_CASE("offspring law mean and variance") {
  for (double beta : {0.1, 0.5, 2.0}) {
    for (std::uint64_t n : {std::uint64_t(10), std::uint64_t(100), std::uint64_t(5000)}) {
      if (static_cast<double>(n) <= beta) continue;
      const auto law = offspring_probabilities(beta, n);
      const double mean_off = 2.0 * law.p2;
      CHECK(mean_off == doctest::Approx(1.0 + beta / static_cast<double>(n)).epsilon(1e-12));
      const double var = 4.0 * law.p2 - mean_off * mean_off;
      const double bn = beta / static_cast<double>(n);
      CHECK(std::abs(var - 1.0) <= 2.0 * bn + bn * bn + 1e-15);
    }
  }
}

TEST_CASE("per-particle extinction probability approaches exp(-2 beta m0)") {
  const auto law = offspring_probabilities(0.5, 100);
  const double q = law.p0 / law.p2;
  CHECK(std::pow(q, 100.0) == doctest::Approx(0.368).epsilon(2e-3));
  CHECK(std::abs(std::pow(q, 100.0) - extinction_probability(0.5, 1.0)) < 2e-5);

  const auto law2 = offspring_probabilities(0.5, 2000);
  const double q2 = law2.p0 / law2.p2;
  CHECK(std::abs(std::pow(q2, 2000.0) - extinction_probability(0.5, 1.0)) < 5e-8);
}

TEST_CASE("feller reference moments and the mass laplace transform") {
  CHECK(feller_mean_mass(0.5, 1.0, 2.0) == doctest::Approx(std::exp(1.0)));
  CHECK(feller_var_mass(0.5, 1.0, 2.0) ==
        doctest::Approx(2.0 * (std::exp(2.0) - std::exp(1.0))));
  // lambda -> infinity recovers the extinction probability
  CHECK(mass_laplace_transform(0.5, 1.0, 1e9, 1e9) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
}
