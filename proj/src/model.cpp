#include "sousim/model.hpp"

#include <cmath>

namespace sousim {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::ordinary: return "ordinary";
    case Mode::interacting: return "interacting";
    case Mode::coupled: return "coupled";
    case Mode::mass_only: return "mass_only";
  }
  return "?";
}

std::string to_string(Conditioning c) {
  switch (c) {
    case Conditioning::none: return "none";
    case Conditioning::survival: return "survival";
    case Conditioning::extinction: return "extinction";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "ordinary") return Mode::ordinary;
  if (s == "interacting") return Mode::interacting;
  if (s == "coupled") return Mode::coupled;
  if (s == "mass_only") return Mode::mass_only;
  throw ConfigError("unknown mode '" + s + "'");
}

Conditioning conditioning_from_string(const std::string& s) {
  if (s == "none") return Conditioning::none;
  if (s == "survival") return Conditioning::survival;
  if (s == "extinction") return Conditioning::extinction;
  throw ConfigError("unknown conditioning '" + s + "'");
}

ValidatedConfig validate_config(const SimConfig& raw) {
  if (raw.dimension < 1) throw ConfigError("dimension must be >= 1");
  if (!(raw.beta > 0.0)) throw ConfigError("beta must be positive");
  if (raw.particles_per_unit_mass < 1) throw ConfigError("N must be >= 1");
  if (!(raw.step > 0.0)) throw ConfigError("step must be positive");
  if (!(raw.t_max > 0.0)) throw ConfigError("t_max must be positive");
  if (raw.t_max < raw.step) throw ConfigError("t_max must be >= step");
  if (!(raw.initial_measure.total_mass > 0.0))
    throw ConfigError("initial total mass must be positive");
  if (raw.slice_count < 1) throw ConfigError("slice_count must be >= 1");
  if (static_cast<double>(raw.particles_per_unit_mass) <= raw.beta)
    throw ConfigError("refine N: particles_per_unit_mass must exceed beta");
  if (raw.initial_measure.kind == InitialMeasure::Kind::gaussian_cloud &&
      !(raw.initial_measure.cloud.variance_per_coordinate > 0.0))
    throw ConfigError("gaussian cloud variance must be positive");
  if (raw.initial_measure.kind == InitialMeasure::Kind::point_list) {
    if (raw.initial_measure.points.empty())
      throw ConfigError("point list must not be empty");
    for (const auto& p : raw.initial_measure.points)
      if (static_cast<int>(p.size()) != raw.dimension)
        throw ConfigError("point list entries must have length d");
  }

  ValidatedConfig v;
  v.raw = raw;
  const double exact =
      raw.initial_measure.total_mass * static_cast<double>(raw.particles_per_unit_mass);
  const double rounded = std::nearbyint(exact);
  if (rounded < 0.5)
    throw ConfigError("initial particle count rounds to zero; increase m0 or N");
  v.initial_particle_count = static_cast<std::uint64_t>(rounded);
  v.rounding_warning = std::abs(rounded - exact) > 0.01 * exact;
  v.grid_steps = static_cast<std::uint64_t>(std::ceil(raw.t_max / raw.step - 1e-9));
  return v;
}

GaussianSpec stationary_law(double gamma, int dimension) {
  if (!(gamma > 0.0))
    throw ConfigError("no stationary law in repelling/neutral regime (gamma <= 0)");
  if (dimension < 1) throw ConfigError("dimension must be >= 1");
  GaussianSpec g;
  g.mean.assign(static_cast<std::size_t>(dimension), 0.0);
  g.variance_per_coordinate = 1.0 / (2.0 * gamma);
  return g;
}

double extinction_probability(double beta, double m0) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(m0 > 0.0)) throw ConfigError("m0 must be positive");
  return std::exp(-2.0 * beta * m0);
}

OffspringLaw offspring_probabilities(double beta, std::uint64_t n_per_unit_mass) {
  if (beta < 0.0) throw ConfigError("beta must be nonnegative");
  const double nd = static_cast<double>(n_per_unit_mass);
  if (n_per_unit_mass == 0 || (beta > 0.0 && nd <= beta))
    throw ConfigError("refine N: need N > beta for a probability law");
  OffspringLaw law;
  law.p2 = 0.5 + beta / (2.0 * nd);
  law.p0 = 0.5 - beta / (2.0 * nd);
  law.per_particle_rate = nd;
  return law;
}

double feller_mean_mass(double beta, double m0, double t) {
  return m0 * std::exp(beta * t);
}

double feller_var_mass(double beta, double m0, double t) {
  return m0 / beta * (std::exp(2.0 * beta * t) - std::exp(beta * t));
}

double mass_laplace_transform(double beta, double m0, double t, double lambda) {
  return std::exp(-2.0 * lambda * beta * m0 /
                  (2.0 * beta + lambda * (1.0 - std::exp(-beta * t))));
}

}  // namespace sousim
