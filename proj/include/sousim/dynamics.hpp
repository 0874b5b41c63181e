#ifndef SOUSIM_DYNAMICS_HPP
#define SOUSIM_DYNAMICS_HPP

#include <vector>

#include "sousim/branching.hpp"
#include "sousim/rng.hpp"

namespace sousim {

// Exact OU transition coefficients over a step of length h:
//   x' = decay * x + noise_sd * xi,  xi ~ N(0, I)
// decay = e^{-gamma h}, noise_sd^2 = (1 - e^{-2 gamma h}) / (2 gamma),
// with the small-|gamma h| series h (1 - gamma h + (2/3) gamma^2 h^2).
struct OuStep {
  double decay = 1.0;
  double noise_sd = 0.0;
};
OuStep ou_step_coefficients(double gamma, double h);

// One exact OU step of a single d-vector (noise: d iid N(0,1) values).
void ou_exact_step(double* position, int dim, double gamma, double h,
                   const double* noise);

// Euler step of the COM-interacting system, COM frozen at step start:
//   y' = y + gamma (ybar - y) h + sqrt(h) * xi.
void interacting_em_step_one(double* position, int dim, const double* com_frozen,
                             double gamma, double h, const double* noise);

// Whole-population variants (all masses equal; COM = arithmetic mean).
void ordinary_step(PopulationState& state, double gamma, double h, const NoiseGrid& noise,
                   std::uint64_t step_index);
void interacting_em_step(PopulationState& state, double gamma, double h,
                         const NoiseGrid& noise, std::uint64_t step_index);

// Running value of gamma * int_0^t Zbar_s ds, trapezoid with nodes at grid
// times and at branch events (the integrand jumps there).
class OffsetAccumulator {
 public:
  explicit OffsetAccumulator(int dim) : value_(static_cast<std::size_t>(dim), 0.0) {}

  // Plain trapezoid: value += gamma * dt * (zbar_prev + zbar_next) / 2.
  void add_interval(const std::vector<double>& zbar_prev,
                    const std::vector<double>& zbar_next, double dt, double gamma);

  // OU-bridge weighted trapezoid: per-endpoint weight tanh(gamma dt / 2)/gamma
  // is the exact conditional mean of int Z ds given the interval endpoints;
  // reduces to the plain rule as gamma dt -> 0. Used by the engine on coarse
  // sync grids where the plain rule would pick up exponential-trend curvature.
  void add_interval_bridge(const std::vector<double>& zbar_prev,
                           const std::vector<double>& zbar_next, double dt,
                           double gamma);

  const std::vector<double>& value() const { return value_; }

 private:
  std::vector<double> value_;
};

// Spec-facing free function: acc += gamma * dt * (zbar_prev + zbar_next)/2.
void com_offset_update(OffsetAccumulator& acc, const std::vector<double>& zbar_prev,
                       const std::vector<double>& zbar_next, double dt, double gamma);

// Shifts every position of the primary system by the accumulated offset;
// identities preserved. Realizes X'_t(phi) = X_t(phi(. + gamma int Zbar)).
PopulationState correspondence_transform(const PopulationState& z_state,
                                         const OffsetAccumulator& acc);

}  // namespace sousim

#endif  // SOUSIM_DYNAMICS_HPP
