#ifndef SOUSIM_BRANCHING_HPP
#define SOUSIM_BRANCHING_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "sousim/model.hpp"
#include "sousim/rng.hpp"

namespace sousim {

// Substream namespaces off a replicate's root key. The branching skeleton
// stream must never be consumed for anything grid-dependent: identical
// (seed, replicate) then yields an identical event tree at every step size.
inline constexpr std::uint64_t kStreamBranch = 1;
inline constexpr std::uint64_t kStreamInit = 2;
inline constexpr std::uint64_t kStreamMass = 3;
inline constexpr std::uint64_t kStreamSlices = 4;

inline constexpr std::uint64_t kNoParent = std::numeric_limits<std::uint64_t>::max();

// Materialized single-particle view (tests, bindings, debugging).
struct Particle {
  std::uint64_t id = 0;
  std::uint64_t parent_id = kNoParent;
  double birth_time = 0.0;
  std::vector<double> position;
  Key128 noise_stream_key;
};

// Living particle cloud. Struct-of-arrays; `pos` is count*dim row-major.
// A coupled run keeps a second position set `pos2` (interacting system) over
// the same branching skeleton.
struct PopulationState {
  int dim = 1;
  double time = 0.0;
  double mass_per_particle = 1.0;
  std::uint64_t event_counter = 0;
  std::uint64_t next_id = 0;
  bool dual = false;

  std::vector<std::uint64_t> id;
  std::vector<std::uint64_t> parent;
  std::vector<double> birth;
  std::vector<Key128> key;
  std::vector<double> pos;
  std::vector<double> pos2;
  std::vector<double> local_time;    // timestamp of each stored position
  std::vector<std::uint32_t> substep;  // noise substeps consumed this grid step

  std::optional<double> extinction_time;

  // key is the one array every run keeps (scale runs may drop lineage arrays).
  std::size_t count() const { return key.size(); }
  double total_mass() const {
    return static_cast<double>(count()) * mass_per_particle;
  }
  Particle particle(std::size_t index) const;
  // Mean position of one system; empty optional on an extinct population.
  std::optional<std::vector<double>> mean_position(bool secondary = false) const;
};

struct BranchEvent {
  double time = 0.0;
  std::size_t index = 0;      // position in the arrays at draw time
  std::uint64_t particle_id = 0;
};

// round(m0 N) particles at the configured positions, time 0.
PopulationState init_population(const InitialMeasure& init, const ValidatedConfig& cfg,
                                Rng& rng);

// Next branch event: waiting time ~ Exp(N * count), particle uniform.
// Throws on an empty population.
BranchEvent next_branch_event(const PopulationState& state, double rate_per_particle,
                              Rng& rng);

// Applies a 0-or-2 branch at `index`. offspring==0 removes the particle
// (swap-with-last); offspring==2 replaces it by two children at the parent's
// stored position with fresh stream keys. Mass changes by exactly +-1/N.
// The caller is responsible for having advanced the parent to `event_time`.
void apply_branch_at(PopulationState& state, std::size_t index, int offspring,
                     double event_time);

// Id-addressed variant of the spec contract (linear scan; test/binding use).
void apply_branch(PopulationState& state, std::uint64_t particle_id, int offspring,
                  double event_time);

inline std::optional<double> detect_extinction(const PopulationState& state) {
  return state.extinction_time;
}

struct MassTrajectory {
  std::vector<double> times;
  std::vector<double> mass;
  std::optional<double> extinction_time;
};

// Mass-only run: statistically exact birth-death transitions on the record
// grid (Binomial survivors + NegBinomial extras from Kendall's closed form),
// event-driven below a count threshold so extinction times are exact event
// times. Masses are recorded at multiples of record_dt up to t_max.
MassTrajectory run_mass_only(const ValidatedConfig& cfg, Rng& rng, double record_dt);

}  // namespace sousim

#endif  // SOUSIM_BRANCHING_HPP
