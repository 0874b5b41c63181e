#include "sousim/branching.hpp"

#include <cmath>
#include <stdexcept>

#include "sousim/samplers.hpp"

namespace sousim {

Particle PopulationState::particle(std::size_t index) const {
  Particle p;
  p.id = id[index];
  p.parent_id = parent[index];
  p.birth_time = birth[index];
  p.noise_stream_key = key[index];
  p.position.assign(pos.begin() + static_cast<std::ptrdiff_t>(index * dim),
                    pos.begin() + static_cast<std::ptrdiff_t>((index + 1) * dim));
  return p;
}

std::optional<std::vector<double>> PopulationState::mean_position(bool secondary) const {
  if (count() == 0) return std::nullopt;
  const std::vector<double>& p = secondary ? pos2 : pos;
  std::vector<double> m(static_cast<std::size_t>(dim), 0.0);
  for (std::size_t i = 0; i < count(); ++i)
    for (int k = 0; k < dim; ++k) m[static_cast<std::size_t>(k)] += p[i * dim + k];
  for (double& v : m) v /= static_cast<double>(count());
  return m;
}

PopulationState init_population(const InitialMeasure& init, const ValidatedConfig& cfg,
                                Rng& rng) {
  const std::uint64_t n = cfg.initial_particle_count;
  if (n == 0) throw ConfigError("initial population is empty");
  const int d = cfg.raw.dimension;

  PopulationState s;
  s.dim = d;
  s.mass_per_particle = 1.0 / static_cast<double>(cfg.raw.particles_per_unit_mass);
  s.dual = cfg.raw.mode == Mode::coupled;
  s.id.resize(n);
  s.parent.assign(n, kNoParent);
  s.birth.assign(n, 0.0);
  s.key.resize(n);
  s.local_time.assign(n, 0.0);
  s.substep.assign(n, 0);
  s.pos.assign(n * static_cast<std::uint64_t>(d), 0.0);
  s.next_id = n;

  Key128 rep_key = rng.key();
  for (std::uint64_t i = 0; i < n; ++i) {
    s.id[i] = i;
    s.key[i] = root_particle_key(rep_key, i);
  }

  Rng init_rng = rng.substream(kStreamInit);
  switch (init.kind) {
    case InitialMeasure::Kind::point_mass_origin:
      break;  // zeros already
    case InitialMeasure::Kind::point_list:
      for (std::uint64_t i = 0; i < n; ++i) {
        const auto& pt = init.points[i % init.points.size()];
        for (int k = 0; k < d; ++k) s.pos[i * d + k] = pt[static_cast<std::size_t>(k)];
      }
      break;
    case InitialMeasure::Kind::gaussian_cloud: {
      const double sd = std::sqrt(init.cloud.variance_per_coordinate);
      for (std::uint64_t i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) {
          const double mean_k = init.cloud.mean.empty()
                                    ? 0.0
                                    : init.cloud.mean[static_cast<std::size_t>(k)];
          s.pos[i * d + k] = mean_k + sd * init_rng.normal();
        }
      break;
    }
  }
  if (s.dual) s.pos2 = s.pos;  // X0 = X'0
  return s;
}

BranchEvent next_branch_event(const PopulationState& state, double rate_per_particle,
                              Rng& rng) {
  if (state.count() == 0)
    throw std::logic_error("next_branch_event: population already extinct");
  const double total_rate = rate_per_particle * static_cast<double>(state.count());
  BranchEvent ev;
  ev.time = state.time + rng.exponential(total_rate);
  ev.index = static_cast<std::size_t>(rng.uniform_index(state.count()));
  // scale runs drop the id array; the index addresses the particle either way
  ev.particle_id = ev.index < state.id.size() ? state.id[ev.index] : ev.index;
  return ev;
}

namespace {

void swap_remove(PopulationState& s, std::size_t index) {
  const std::size_t last = s.count() - 1;
  const int d = s.dim;
  if (index != last) {
    s.id[index] = s.id[last];
    s.parent[index] = s.parent[last];
    s.birth[index] = s.birth[last];
    s.key[index] = s.key[last];
    s.local_time[index] = s.local_time[last];
    s.substep[index] = s.substep[last];
    for (int k = 0; k < d; ++k) s.pos[index * d + k] = s.pos[last * d + k];
    if (s.dual)
      for (int k = 0; k < d; ++k) s.pos2[index * d + k] = s.pos2[last * d + k];
  }
  s.id.pop_back();
  s.parent.pop_back();
  s.birth.pop_back();
  s.key.pop_back();
  s.local_time.pop_back();
  s.substep.pop_back();
  s.pos.resize(last * static_cast<std::size_t>(d));
  if (s.dual) s.pos2.resize(last * static_cast<std::size_t>(d));
}

}  // namespace

void apply_branch_at(PopulationState& state, std::size_t index, int offspring,
                     double event_time) {
  if (index >= state.count()) throw std::logic_error("apply_branch: bad index");
  if (offspring != 0 && offspring != 2)
    throw std::logic_error("apply_branch: offspring must be 0 or 2");
  if (event_time < state.time)
    throw std::logic_error("apply_branch: time must be nondecreasing");

  state.time = event_time;
  ++state.event_counter;

  if (offspring == 0) {
    swap_remove(state, index);
    if (state.count() == 0) state.extinction_time = event_time;
    return;
  }

  const int d = state.dim;
  const Key128 parent_key = state.key[index];
  const std::uint64_t parent_id = state.id[index];

  // Child A takes over the parent's slot; child B is appended. Both start at
  // the parent's stored position (caller advanced it to event_time).
  state.id[index] = state.next_id++;
  state.parent[index] = parent_id;
  state.birth[index] = event_time;
  state.key[index] = child_key(parent_key, state.event_counter, 0);
  state.local_time[index] = event_time;
  state.substep[index] = 0;

  state.id.push_back(state.next_id++);
  state.parent.push_back(parent_id);
  state.birth.push_back(event_time);
  state.key.push_back(child_key(parent_key, state.event_counter, 1));
  state.local_time.push_back(event_time);
  state.substep.push_back(0);
  for (int k = 0; k < d; ++k) state.pos.push_back(state.pos[index * d + k]);
  if (state.dual)
    for (int k = 0; k < d; ++k) state.pos2.push_back(state.pos2[index * d + k]);
}

void apply_branch(PopulationState& state, std::uint64_t particle_id, int offspring,
                  double event_time) {
  for (std::size_t i = 0; i < state.count(); ++i) {
    if (state.id[i] == particle_id) {
      apply_branch_at(state, i, offspring, event_time);
      return;
    }
  }
  throw std::logic_error("apply_branch: unknown particle id");
}

// --- Mass-only engine ------------------------------------------------------

namespace {

// Below this count the birth-death chain is simulated event by event, which
// pins extinction to an exact event time; transitions from above it that kill
// the population get their extinction time from the closed-form conditional
// law instead.
constexpr std::uint64_t kEventDrivenBelow = 64;

struct BirthDeathStep {
  double alpha;  // P(single line extinct by dt)
  double eta;    // geometric tail parameter of a surviving line
};

BirthDeathStep transition_params(double birth_rate, double death_rate, double dt) {
  const double lambda = birth_rate - death_rate;  // = beta
  const double em1 = std::expm1(lambda * dt);
  const double denom = birth_rate * em1 + lambda;
  return {death_rate * em1 / denom, birth_rate * em1 / denom};
}

// Given that all n lines die within dt, the extinction time is the max of n
// iid line-death times: P(eta <= s | all dead by dt) = (alpha(s)/alpha(dt))^n.
// Inverting alpha(s) = a for s is closed-form.
double sample_extinction_within(Rng& rng, double birth_rate, double death_rate,
                                double dt, std::uint64_t n, double alpha_dt) {
  const double lambda = birth_rate - death_rate;
  const double u = rng.uniform();
  const double a = alpha_dt * std::pow(u, 1.0 / static_cast<double>(n));
  const double em1 = a * lambda / (death_rate - a * birth_rate);
  const double s = std::log1p(em1) / lambda;
  return std::min(std::max(s, 0.0), dt);
}

}  // namespace

MassTrajectory run_mass_only(const ValidatedConfig& cfg, Rng& rng, double record_dt) {
  const double beta = cfg.raw.beta;
  const double n_unit = static_cast<double>(cfg.raw.particles_per_unit_mass);
  const OffspringLaw law = offspring_probabilities(beta, cfg.raw.particles_per_unit_mass);
  const double birth_rate = law.per_particle_rate * law.p2;
  const double death_rate = law.per_particle_rate * law.p0;

  Rng mass_rng = rng.substream(kStreamMass);

  MassTrajectory traj;
  const std::uint64_t n_records =
      static_cast<std::uint64_t>(std::ceil(cfg.raw.t_max / record_dt - 1e-9));
  traj.times.reserve(n_records + 1);
  traj.mass.reserve(n_records + 1);

  std::uint64_t count = cfg.initial_particle_count;
  double t = 0.0;
  traj.times.push_back(0.0);
  traj.mass.push_back(static_cast<double>(count) / n_unit);

  const BirthDeathStep full = transition_params(birth_rate, death_rate, record_dt);

  for (std::uint64_t k = 1; k <= n_records && count > 0; ++k) {
    const double t_next = std::min(static_cast<double>(k) * record_dt, cfg.raw.t_max);
    while (count > 0 && t < t_next) {
      if (count > kEventDrivenBelow) {
        // One exact transition to t_next.
        const BirthDeathStep use =
            std::abs((t_next - t) - record_dt) < 1e-12
                ? full
                : transition_params(birth_rate, death_rate, t_next - t);
        const std::uint64_t survivors = binomial_sample(mass_rng, count, 1.0 - use.alpha);
        if (survivors == 0) {
          traj.extinction_time = t + sample_extinction_within(mass_rng, birth_rate,
                                                              death_rate, t_next - t,
                                                              count, use.alpha);
          count = 0;
        } else {
          count = survivors + negative_binomial_sample(mass_rng, survivors, use.eta);
        }
        t = t_next;
      } else {
        // Exact event times while the population is small.
        const double wait = mass_rng.exponential(law.per_particle_rate *
                                                 static_cast<double>(count));
        if (t + wait > t_next) {
          t = t_next;
          break;
        }
        t += wait;
        if (mass_rng.uniform() < law.p2)
          ++count;
        else
          --count;
        if (count == 0) {
          traj.extinction_time = t;
          break;
        }
      }
    }
    traj.times.push_back(t_next);
    traj.mass.push_back(static_cast<double>(count) / n_unit);
  }

  // Pad the grid after extinction with zero mass.
  while (traj.times.size() < n_records + 1) {
    const double t_next =
        std::min(static_cast<double>(traj.times.size()) * record_dt, cfg.raw.t_max);
    traj.times.push_back(t_next);
    traj.mass.push_back(0.0);
  }
  return traj;
}

}  // namespace sousim
