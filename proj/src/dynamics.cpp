#include "sousim/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace sousim {

OuStep ou_step_coefficients(double gamma, double h) {
  OuStep s;
  const double gh = gamma * h;
  s.decay = std::exp(-gh);
  double var;
  if (std::abs(gh) < 1e-8) {
    var = h * (1.0 - gh + (2.0 / 3.0) * gh * gh);
  } else {
    var = -std::expm1(-2.0 * gh) / (2.0 * gamma);
  }
  s.noise_sd = std::sqrt(var);
  return s;
}

void ou_exact_step(double* position, int dim, double gamma, double h,
                   const double* noise) {
  const OuStep s = ou_step_coefficients(gamma, h);
  for (int k = 0; k < dim; ++k) position[k] = s.decay * position[k] + s.noise_sd * noise[k];
}

void interacting_em_step_one(double* position, int dim, const double* com_frozen,
                             double gamma, double h, const double* noise) {
  const double sqh = std::sqrt(h);
  for (int k = 0; k < dim; ++k)
    position[k] += gamma * (com_frozen[k] - position[k]) * h + sqh * noise[k];
}

namespace {

double* system_pos(PopulationState& state, bool secondary) {
  return secondary ? state.pos2.data() : state.pos.data();
}

}  // namespace

void ordinary_step(PopulationState& state, double gamma, double h, const NoiseGrid& noise,
                   std::uint64_t step_index) {
  if (state.count() == 0) throw std::logic_error("ordinary_step: empty population");
  const int d = state.dim;
  std::vector<double> xi(static_cast<std::size_t>(d));
  double* p = system_pos(state, false);
  for (std::size_t i = 0; i < state.count(); ++i) {
    noise.gaussians(state.key[i], step_index, state.substep[i]++, d, xi.data());
    ou_exact_step(p + i * d, d, gamma, h, xi.data());
  }
  state.time += h;
}

void interacting_em_step(PopulationState& state, double gamma, double h,
                         const NoiseGrid& noise, std::uint64_t step_index) {
  if (state.count() == 0) throw std::logic_error("interacting_em_step: empty population");
  const int d = state.dim;
  const auto com = *state.mean_position();
  std::vector<double> xi(static_cast<std::size_t>(d));
  double* p = system_pos(state, false);
  for (std::size_t i = 0; i < state.count(); ++i) {
    noise.gaussians(state.key[i], step_index, state.substep[i]++, d, xi.data());
    interacting_em_step_one(p + i * d, d, com.data(), gamma, h, xi.data());
  }
  state.time += h;
}

void OffsetAccumulator::add_interval(const std::vector<double>& zbar_prev,
                                     const std::vector<double>& zbar_next, double dt,
                                     double gamma) {
  if (!(dt > 0.0)) throw std::invalid_argument("offset interval: dt must be positive");
  for (std::size_t k = 0; k < value_.size(); ++k)
    value_[k] += gamma * dt * 0.5 * (zbar_prev[k] + zbar_next[k]);
}

void OffsetAccumulator::add_interval_bridge(const std::vector<double>& zbar_prev,
                                            const std::vector<double>& zbar_next,
                                            double dt, double gamma) {
  if (!(dt > 0.0)) throw std::invalid_argument("offset interval: dt must be positive");
  const double x = gamma * dt * 0.5;
  // tanh(x)/gamma -> dt/2 as gamma -> 0
  const double w = std::abs(x) < 1e-8 ? dt * 0.5 * (1.0 - x * x / 3.0)
                                      : std::tanh(x) / gamma;
  for (std::size_t k = 0; k < value_.size(); ++k)
    value_[k] += gamma * w * (zbar_prev[k] + zbar_next[k]);
}

void com_offset_update(OffsetAccumulator& acc, const std::vector<double>& zbar_prev,
                       const std::vector<double>& zbar_next, double dt, double gamma) {
  acc.add_interval(zbar_prev, zbar_next, dt, gamma);
}

PopulationState correspondence_transform(const PopulationState& z_state,
                                         const OffsetAccumulator& acc) {
  PopulationState out = z_state;
  const auto& shift = acc.value();
  const int d = out.dim;
  for (std::size_t i = 0; i < out.count(); ++i)
    for (int k = 0; k < d; ++k) out.pos[i * d + k] += shift[static_cast<std::size_t>(k)];
  return out;
}

}  // namespace sousim
