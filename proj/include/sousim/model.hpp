#ifndef SOUSIM_MODEL_HPP
#define SOUSIM_MODEL_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sousim {

enum class Mode { ordinary, interacting, coupled, mass_only };

enum class Conditioning { none, survival, extinction };

std::string to_string(Mode m);
std::string to_string(Conditioning c);
Mode mode_from_string(const std::string& s);
Conditioning conditioning_from_string(const std::string& s);

// Isotropic Gaussian on R^d: mean vector plus one variance per coordinate.
// Also carries the stationary OU law N(0, 1/(2 gamma) I) and its recentered
// variant used as convergence targets.
struct GaussianSpec {
  std::vector<double> mean;
  double variance_per_coordinate = 1.0;
};

struct InitialMeasure {
  enum class Kind { point_mass_origin, point_list, gaussian_cloud };
  Kind kind = Kind::point_mass_origin;
  double total_mass = 1.0;
  std::vector<std::vector<double>> points;  // point_list only
  GaussianSpec cloud;                       // gaussian_cloud only
};

struct SimConfig {
  int dimension = 1;
  double gamma = 1.0;      // attraction rate; > 0 attract, < 0 repel
  double beta = 0.5;       // supercritical branching bias, > 0
  std::uint64_t particles_per_unit_mass = 100;  // N; each particle has mass 1/N
  double step = 0.01;      // diffusion grid step h
  double t_max = 10.0;
  Mode mode = Mode::ordinary;
  InitialMeasure initial_measure;
  std::uint64_t seed = 1;
  int slice_count = 32;    // Q, sliced-metric directions
};

struct ValidatedConfig {
  SimConfig raw;
  std::uint64_t initial_particle_count = 0;
  std::uint64_t grid_steps = 0;  // number of diffusion steps to reach t_max
  bool rounding_warning = false; // m0*N rounded with > 1% relative error
};

// 0 offspring with probability p0, 2 with p2; branch rate N per particle.
struct OffspringLaw {
  double p0 = 0.5;
  double p2 = 0.5;
  double per_particle_rate = 1.0;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checks every invariant and materializes derived fields. Throws ConfigError.
ValidatedConfig validate_config(const SimConfig& raw);

// Stationary law of the origin-attracting OU: N(0, 1/(2 gamma) I).
GaussianSpec stationary_law(double gamma, int dimension);

// P(extinction in finite time) = exp(-2 beta m0).
double extinction_probability(double beta, double m0);

// Particle calibration matching the beta-supercritical Feller mass diffusion:
// p2 = 1/2 + beta/(2N), p0 = 1/2 - beta/(2N), rate N. Per-particle extinction
// probability p0/p2 satisfies (p0/p2)^{N m0} -> exp(-2 beta m0).
OffspringLaw offspring_probabilities(double beta, std::uint64_t n_per_unit_mass);

// Feller mass-diffusion reference moments, E M_t = m0 e^{beta t} and
// Var M_t = (m0/beta)(e^{2 beta t} - e^{beta t}).
double feller_mean_mass(double beta, double m0, double t);
double feller_var_mass(double beta, double m0, double t);

// Laplace transform of the normalized mass martingale:
// E exp(-lambda e^{-beta t} M_t) = exp(-2 lambda beta m0 / (2 beta + lambda (1 - e^{-beta t}))).
double mass_laplace_transform(double beta, double m0, double t, double lambda);

}  // namespace sousim

#endif  // SOUSIM_MODEL_HPP
