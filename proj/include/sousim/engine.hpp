#ifndef SOUSIM_ENGINE_HPP
#define SOUSIM_ENGINE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sousim/branching.hpp"
#include "sousim/dynamics.hpp"
#include "sousim/measure.hpp"
#include "sousim/model.hpp"

namespace sousim {

// Bounded C^2 test functions for the martingale-problem experiment.
enum class TestFunction { none, tanh_first, gauss_bump, constant };
TestFunction test_function_from_string(const std::string& s);
std::string to_string(TestFunction f);

struct EngineOptions {
  double record_dt = 0.1;  // output grid spacing (>= h, snapped to h multiples)
  // Stop a replicate early once mass >= cutoff; it is then a flagged survivor.
  double survival_mass_cutoff = std::numeric_limits<double>::infinity();
  // Offset integral gamma int Zbar ds: bridge-weighted trapezoid removes the
  // exponential-trend curvature on coarse sync grids (ordinary scale runs).
  bool bridge_quadrature = false;
  // Refinement-study mode: branch events apply to the stored (step-start)
  // positions instead of splitting the step, so every advance is exactly one
  // step long, and each step consumes `noise_micro` sub-blocks of the micro
  // lattice (step h, noise_micro = 2 reads the same Gaussians as a run at
  // h/2). Runs at h and h/2 then share the driving noise pathwise, which is
  // what makes the per-seed sup-error ratio a sharp order statistic.
  bool lattice_split_events = false;
  int noise_micro = 1;
  bool track_lineage = true;    // keep id/parent/birth arrays
  bool track_coupling = false;  // coupled mode: sup |Y_direct - Y_corr|
  bool track_volterra = false; // max_t |Ybar - Zbar - gamma int e^{-g(t-s)} Ybar|
  std::optional<GaussianSpec> bl_target;  // per-record BL(ordinary cloud, target)
  bool bl_recenter_interacting = false;   // BL(interacting cloud, target + Ybar_t)
  double bl_from_t = 0.0;
  std::vector<double> probe_times;  // snapped up to the record grid
  std::vector<Box> window_boxes;    // indicator masses at record times
  TestFunction martingale_phi = TestFunction::none;
};

struct TrajectoryPoint {
  double t = 0.0;
  double mass = 0.0;
  std::vector<double> com;  // Zbar (ordinary/coupled) or Ybar (interacting)
  double spread = 0.0;
  double bl_ordinary = std::numeric_limits<double>::quiet_NaN();
  double bl_interacting = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> exp_gamma_t_zbar;
  std::vector<double> com_y;  // interacting COM (direct, or via correspondence)
  std::vector<double> window_masses;
};

struct TrajectoryRecord {
  std::vector<TrajectoryPoint> points;
  bool survived = false;
  bool censored_early = false;
  std::optional<double> extinction_time;
};

struct ExtinctionReport {
  double eta = 0.0;
  std::vector<double> f_estimate;        // terminal COM of the ordinary system
  std::vector<double> f_prime_estimate;  // terminal COM of the interacting system
  std::vector<double> offset_at_eta;     // gamma int_0^eta Zbar ds
};

struct MartingaleProbe {
  double t = 0.0;
  double nhat = 0.0;          // phibar_t - phibar_0 - int bbar ds
  double predicted_qv = 0.0;  // int (bar(phi^2) - phibar^2)/mass ds
};

struct ReplicateSummary {
  std::uint64_t replicate_index = 0;
  std::uint64_t seed = 0;  // seed_base + replicate_index
  bool survived = false;
  bool censored_early = false;
  std::optional<double> eta;
  double t_final = 0.0;
  double final_mass = 0.0;
  double w_estimate = 0.0;  // e^{-beta t_final} M_{t_final}
  std::optional<std::vector<double>> zbar_final;
  std::optional<std::vector<double>> ybar_final;
  std::optional<double> bl_ordinary_final;
  std::optional<double> bl_interacting_final;
  std::optional<ExtinctionReport> extinction;
  std::optional<double> sup_coupling_error;
  std::optional<double> sup_coupling_error_half;  // same seed rerun at h/2
  std::optional<double> volterra_max_residual;
  std::vector<MartingaleProbe> martingale;
  // (t, value) samples at probe times
  std::vector<std::pair<double, double>> mass_probes;
  std::vector<std::pair<double, std::vector<double>>> exp_gamma_t_zbar_probes;
  std::vector<std::pair<double, std::vector<double>>> ybar_probes;
  std::vector<std::pair<double, double>> spread_probes;
  std::vector<std::pair<double, std::vector<double>>> window_mass_probes;
  double initial_spread = 0.0;
  // last record with count >= 5 (extinction concentration check)
  std::optional<double> spread_last_5plus;
  // |Ybar increment| between the first two / last two recorded snapshots
  std::optional<double> dybar_early;
  std::optional<double> dybar_late;
};

struct ReplicateOutput {
  TrajectoryRecord trajectory;
  ReplicateSummary summary;
};

// One full replicate: branching skeleton from its own stream (grid
// independent), diffusion noise addressed by (particle key, step, substep),
// events interleaved with the sync grid, lazily advancing touched particles.
ReplicateOutput run_replicate(const ValidatedConfig& cfg, const EngineOptions& opt,
                              std::uint64_t seed_base, std::uint64_t replicate_index);

}  // namespace sousim

#endif  // SOUSIM_ENGINE_HPP
