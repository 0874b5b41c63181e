#include "sousim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sousim {

TestFunction test_function_from_string(const std::string& s) {
  if (s == "tanh") return TestFunction::tanh_first;
  if (s == "gaussian-bump" || s == "gaussian_bump") return TestFunction::gauss_bump;
  if (s == "constant") return TestFunction::constant;
  if (s == "none" || s.empty()) return TestFunction::none;
  throw ConfigError("unknown test function '" + s + "'");
}

std::string to_string(TestFunction f) {
  switch (f) {
    case TestFunction::none: return "none";
    case TestFunction::tanh_first: return "tanh";
    case TestFunction::gauss_bump: return "gaussian-bump";
    case TestFunction::constant: return "constant";
  }
  return "?";
}

namespace {

struct PhiEval {
  double phi = 0.0;
  double drift = 0.0;  // gamma grad(phi).(com - y) + 0.5 laplacian(phi)
};

PhiEval eval_phi(TestFunction f, const double* y, int dim, const double* com,
                 double gamma) {
  PhiEval e;
  switch (f) {
    case TestFunction::constant:
      e.phi = 1.0;
      break;
    case TestFunction::tanh_first: {
      const double th = std::tanh(y[0]);
      const double sech2 = 1.0 - th * th;
      e.phi = th;
      e.drift = gamma * sech2 * (com[0] - y[0]) - th * sech2;
      break;
    }
    case TestFunction::gauss_bump: {
      double r2 = 0.0, dot = 0.0;
      for (int k = 0; k < dim; ++k) {
        r2 += y[k] * y[k];
        dot += (-y[k]) * (com[k] - y[k]);
      }
      const double b = std::exp(-0.5 * r2);
      e.phi = b;
      e.drift = gamma * b * dot + 0.5 * (r2 - dim) * b;
      break;
    }
    case TestFunction::none:
      break;
  }
  return e;
}

class ReplicateRunner {
 public:
  ReplicateRunner(const ValidatedConfig& cfg, const EngineOptions& opt,
                  std::uint64_t seed_base, std::uint64_t rep)
      : cfg_(cfg),
        opt_(opt),
        dim_(cfg.raw.dimension),
        gamma_(cfg.raw.gamma),
        h_(cfg.raw.step),
        root_(replicate_key(seed_base, rep)),
        branch_rng_(root_.substream(kStreamBranch)),
        slice_rng_(root_.substream(kStreamSlices)),
        noise_(root_.key()),
        law_(offspring_probabilities(cfg.raw.beta, cfg.raw.particles_per_unit_mass)),
        acc_(cfg.raw.dimension) {
    out_.summary.replicate_index = rep;
    out_.summary.seed = seed_base + rep;
    has_z_ = cfg.raw.mode == Mode::ordinary || cfg.raw.mode == Mode::coupled;
    has_y_ = cfg.raw.mode == Mode::interacting || cfg.raw.mode == Mode::coupled;
    y_secondary_ = cfg.raw.mode == Mode::coupled;
  }

  ReplicateOutput run() {
    state_ = init_population(cfg_.raw.initial_measure, cfg_, root_);
    if (!opt_.track_lineage) {
      state_.id = {};
      state_.parent = {};
      state_.birth = {};
    }
    refresh_sums();
    out_.summary.initial_spread = raw_spread(primary_pos());
    record_stride_ = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(opt_.record_dt / h_)));

    if (has_y_) ybar_frozen_ = current_com(true);
    last_node_t_ = 0.0;
    last_node_zbar_ = primary_com();

    record_point(0.0);
    if (opt_.martingale_phi != TestFunction::none) init_martingale();
    if (opt_.track_volterra) {
      volterra_kernel_.assign(static_cast<std::size_t>(dim_), 0.0);
      prev_ybar_ = current_com(true);
    }

    pending_ = next_branch_event(state_, law_.per_particle_rate, branch_rng_);

    const std::uint64_t nsteps = cfg_.grid_steps;
    double t0 = 0.0;
    for (std::uint64_t k = 0; k < nsteps; ++k) {
      const double t1 = std::min((static_cast<double>(k) + 1.0) * h_, cfg_.raw.t_max);

      // Branch events due in this step, in exact time order.
      while (pending_.time <= t1) {
        process_event(k);
        if (state_.count() == 0) {
          finish_extinct();
          return std::move(out_);
        }
        pending_ = next_branch_event(state_, law_.per_particle_rate, branch_rng_);
      }

      advance_all(t1, k);
      state_.time = t1;

      close_offset_interval(t1, primary_com());
      if (has_y_) ybar_frozen_ = current_com(true);

      const double dt = t1 - t0;
      if (opt_.track_volterra) update_volterra(dt);
      if (opt_.martingale_phi != TestFunction::none) accumulate_martingale(t1, dt);
      if (cfg_.raw.mode == Mode::coupled && opt_.track_coupling) update_coupling();

      if ((k + 1) % record_stride_ == 0 || k + 1 == nsteps) record_point(t1);

      if (state_.total_mass() >= opt_.survival_mass_cutoff) {
        out_.summary.censored_early = true;
        out_.trajectory.censored_early = true;
        break;
      }
      t0 = t1;
      last_sync_t_ = t1;
    }
    finish_alive();
    return std::move(out_);
  }

 private:
  // --- position systems ------------------------------------------------

  const double* primary_pos() const { return state_.pos.data(); }
  double* zpos() { return has_z_ ? state_.pos.data() : nullptr; }
  double* ypos() {
    if (!has_y_) return nullptr;
    return y_secondary_ ? state_.pos2.data() : state_.pos.data();
  }

  // COM of the primary stored system (Z for ordinary/coupled, Y for interacting).
  std::vector<double> primary_com() const {
    std::vector<double> c(static_cast<std::size_t>(dim_));
    fill_primary_com(c);
    return c;
  }

  void fill_primary_com(std::vector<double>& c) const {
    const double n = static_cast<double>(state_.count());
    c.resize(static_cast<std::size_t>(dim_));
    for (int k = 0; k < dim_; ++k)
      c[static_cast<std::size_t>(k)] = sum_primary_[static_cast<std::size_t>(k)] / n;
  }

  void fill_ybar(std::vector<double>& c) const {
    const double n = static_cast<double>(state_.count());
    c.resize(static_cast<std::size_t>(dim_));
    if (!has_y_) {
      for (int k = 0; k < dim_; ++k)
        c[static_cast<std::size_t>(k)] =
            sum_primary_[static_cast<std::size_t>(k)] / n +
            acc_.value()[static_cast<std::size_t>(k)];
      return;
    }
    const std::vector<double>& s = y_secondary_ ? sum_secondary_ : sum_primary_;
    for (int k = 0; k < dim_; ++k)
      c[static_cast<std::size_t>(k)] = s[static_cast<std::size_t>(k)] / n;
  }

  // want_y=false: Zbar (only meaningful when a Z system exists).
  // want_y=true: Ybar -- direct when a Y system exists, otherwise through the
  // correspondence Ybar = Zbar + gamma int Zbar ds.
  std::vector<double> current_com(bool want_y) const {
    const double n = static_cast<double>(state_.count());
    std::vector<double> c(static_cast<std::size_t>(dim_));
    if (want_y && !has_y_) {
      for (int k = 0; k < dim_; ++k)
        c[static_cast<std::size_t>(k)] =
            sum_primary_[static_cast<std::size_t>(k)] / n +
            acc_.value()[static_cast<std::size_t>(k)];
      return c;
    }
    const std::vector<double>& s =
        (want_y && y_secondary_) ? sum_secondary_ : sum_primary_;
    for (int k = 0; k < dim_; ++k)
      c[static_cast<std::size_t>(k)] = s[static_cast<std::size_t>(k)] / n;
    return c;
  }

  void refresh_sums() {
    sum_primary_.assign(static_cast<std::size_t>(dim_), 0.0);
    const std::size_t n = state_.count();
    const double* p = state_.pos.data();
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < dim_; ++k)
        sum_primary_[static_cast<std::size_t>(k)] += p[i * dim_ + k];
    if (y_secondary_) {
      sum_secondary_.assign(static_cast<std::size_t>(dim_), 0.0);
      const double* q = state_.pos2.data();
      for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < dim_; ++k)
          sum_secondary_[static_cast<std::size_t>(k)] += q[i * dim_ + k];
    }
  }

  double raw_spread(const double* p) const {
    const std::size_t n = state_.count();
    if (n == 0) return 0.0;
    double acc = 0.0;
    for (int k = 0; k < dim_; ++k) {
      const double mean = sum_primary_[static_cast<std::size_t>(k)] / static_cast<double>(n);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = p[i * dim_ + k] - mean;
        s += d * d;
      }
      acc += s;
    }
    return std::sqrt(acc / static_cast<double>(n));
  }

  // Advance particle i from its local time to `to`, consuming noise_micro
  // indexed blocks; keeps the running sums current.
  void advance_particle(std::size_t i, double to, std::uint64_t step_index) {
    const double from = state_.local_time[i];
    const double delta = to - from;
    if (delta <= 0.0) return;
    const int micro = opt_.noise_micro;
    const double cell = delta / micro;
    double xi[8];
    double dy[8] = {0};  // accumulated Brownian increment for the Euler side
    double* z = has_z_ ? state_.pos.data() + i * dim_ : nullptr;
    if (cell != cached_delta_) {
      cached_delta_ = cell;
      cached_step_ = ou_step_coefficients(gamma_, cell);
    }
    const double sq_cell = std::sqrt(cell);
    for (int r = 0; r < micro; ++r) {
      const std::uint64_t idx =
          micro == 1 ? step_index : step_index * static_cast<std::uint64_t>(micro) + r;
      const std::uint32_t sub = micro == 1 ? state_.substep[i] : 0;
      noise_.gaussians(state_.key[i], idx, sub, dim_, xi);
      if (z != nullptr) {
        for (int k = 0; k < dim_; ++k) {
          const double old = z[k];
          z[k] = cached_step_.decay * old + cached_step_.noise_sd * xi[k];
          sum_primary_[static_cast<std::size_t>(k)] += z[k] - old;
        }
      }
      if (has_y_)
        for (int k = 0; k < dim_; ++k) dy[k] += sq_cell * xi[k];
    }
    if (micro == 1) ++state_.substep[i];
    if (has_y_) {
      double* y = (y_secondary_ ? state_.pos2.data() : state_.pos.data()) + i * dim_;
      auto& sum = y_secondary_ ? sum_secondary_ : sum_primary_;
      for (int k = 0; k < dim_; ++k) {
        const double old = y[k];
        y[k] = old + gamma_ * (ybar_frozen_[static_cast<std::size_t>(k)] - old) * delta +
               dy[k];
        sum[static_cast<std::size_t>(k)] += y[k] - old;
      }
    }
    state_.local_time[i] = to;
  }

  void advance_all(double to, std::uint64_t step_index) {
    const std::size_t n = state_.count();
    for (std::size_t i = 0; i < n; ++i) {
      advance_particle(i, to, step_index);
      state_.substep[i] = 0;
    }
    refresh_sums();  // clears incremental float drift
    reserve_ahead();
  }

  void reserve_ahead() {
    const std::size_t n = state_.count();
    if (state_.key.capacity() < n + n / 4 + 8) {
      const std::size_t target = n + n / 2 + 16;
      state_.key.reserve(target);
      state_.local_time.reserve(target);
      state_.substep.reserve(target);
      state_.pos.reserve(target * static_cast<std::size_t>(dim_));
      if (y_secondary_) state_.pos2.reserve(target * static_cast<std::size_t>(dim_));
      if (opt_.track_lineage) {
        state_.id.reserve(target);
        state_.parent.reserve(target);
        state_.birth.reserve(target);
      }
    }
  }

  void process_event(std::uint64_t step_index) {
    const double tau = pending_.time;
    const std::size_t idx = pending_.index;
    const double parent_local = state_.local_time[idx];
    if (!opt_.lattice_split_events) advance_particle(idx, tau, step_index);

    // Pre-jump COMs: close the offset interval (the integrand jumps here) and
    // keep the values in case this event empties the population.
    fill_primary_com(zbar_scratch_);
    if (has_y_) fill_ybar(ybar_scratch_);
    close_offset_interval(tau, zbar_scratch_);

    const int offspring = branch_rng_.uniform() < law_.p2 ? 2 : 0;

    // Death removes the particle's contribution; a split adds one more copy.
    const double sgn = offspring == 0 ? -1.0 : 1.0;
    {
      const double* zp = state_.pos.data() + idx * dim_;
      for (int k = 0; k < dim_; ++k)
        sum_primary_[static_cast<std::size_t>(k)] += sgn * zp[k];
      if (y_secondary_) {
        const double* yp = state_.pos2.data() + idx * dim_;
        for (int k = 0; k < dim_; ++k)
          sum_secondary_[static_cast<std::size_t>(k)] += sgn * yp[k];
      }
    }

    if (offspring == 0 && state_.count() == 1) {
      last_zbar_pre_death_ = zbar_scratch_;
      last_ybar_pre_death_ = ybar_scratch_;
      if (opt_.martingale_phi != TestFunction::none) {
        // Stopped martingale value at eta-: phibar is the last particle's phi;
        // the drift integral gets a rectangle tail from the last sync.
        const double* y = ypos() ? ypos() : zpos();
        const std::vector<double>& com = has_y_ ? ybar_scratch_ : zbar_scratch_;
        const PhiEval e =
            eval_phi(opt_.martingale_phi, y + idx * dim_, dim_, com.data(), gamma_);
        const double drift_tail = (tau - last_sync_t_) * prev_bbar_;
        mart_stop_nhat_ = e.phi - phibar0_ - (mart_integral_ + drift_tail);
        mart_stop_qv_ = mart_qv_;
      }
    }

    apply_branch_core(idx, offspring, tau);

    if (opt_.lattice_split_events && offspring == 2) {
      // Children continue from the stored (step-start) position; they will be
      // advanced across the whole step at the next sync.
      state_.local_time[idx] = parent_local;
      state_.local_time.back() = parent_local;
    }

    if (state_.count() > 0) {
      last_node_t_ = tau;
      fill_primary_com(last_node_zbar_);
    }
  }

  // apply_branch_at, tolerant of dropped lineage arrays.
  void apply_branch_core(std::size_t idx, int offspring, double tau) {
    if (opt_.track_lineage) {
      apply_branch_at(state_, idx, offspring, tau);
      return;
    }
    state_.time = tau;
    ++state_.event_counter;
    const int d = dim_;
    if (offspring == 0) {
      const std::size_t last = state_.count() - 1;
      if (idx != last) {
        state_.key[idx] = state_.key[last];
        state_.local_time[idx] = state_.local_time[last];
        state_.substep[idx] = state_.substep[last];
        for (int k = 0; k < d; ++k) state_.pos[idx * d + k] = state_.pos[last * d + k];
        if (y_secondary_)
          for (int k = 0; k < d; ++k) state_.pos2[idx * d + k] = state_.pos2[last * d + k];
      }
      state_.key.pop_back();
      state_.local_time.pop_back();
      state_.substep.pop_back();
      state_.pos.resize(last * static_cast<std::size_t>(d));
      if (y_secondary_) state_.pos2.resize(last * static_cast<std::size_t>(d));
      if (state_.count() == 0) state_.extinction_time = tau;
      return;
    }
    const Key128 parent_key = state_.key[idx];
    state_.key[idx] = child_key(parent_key, state_.event_counter, 0);
    state_.local_time[idx] = tau;
    state_.substep[idx] = 0;
    state_.key.push_back(child_key(parent_key, state_.event_counter, 1));
    state_.local_time.push_back(tau);
    state_.substep.push_back(0);
    for (int k = 0; k < d; ++k) state_.pos.push_back(state_.pos[idx * d + k]);
    if (y_secondary_)
      for (int k = 0; k < d; ++k) state_.pos2.push_back(state_.pos2[idx * d + k]);
    state_.next_id += 2;
  }

  void close_offset_interval(double t, const std::vector<double>& zbar_now) {
    if (!has_z_) return;  // the offset integral is over the ordinary COM
    const double dt = t - last_node_t_;
    if (dt <= 0.0) return;
    if (opt_.bridge_quadrature)
      acc_.add_interval_bridge(last_node_zbar_, zbar_now, dt, gamma_);
    else
      acc_.add_interval(last_node_zbar_, zbar_now, dt, gamma_);
    last_node_t_ = t;
    last_node_zbar_ = zbar_now;
  }

  void update_volterra(double dt) {
    // I_t = int_0^t e^{-gamma (t-s)} Ybar_s ds, trapezoid per sync step.
    const auto ybar = current_com(true);
    const auto zbar = primary_com();
    const double decay = std::exp(-gamma_ * dt);
    double resid2 = 0.0;
    for (int k = 0; k < dim_; ++k) {
      auto& I = volterra_kernel_[static_cast<std::size_t>(k)];
      I = decay * (I + 0.5 * dt * prev_ybar_[static_cast<std::size_t>(k)]) +
          0.5 * dt * ybar[static_cast<std::size_t>(k)];
      const double r = ybar[static_cast<std::size_t>(k)] -
                       zbar[static_cast<std::size_t>(k)] - gamma_ * I;
      resid2 += r * r;
    }
    prev_ybar_ = ybar;
    const double resid = std::sqrt(resid2);
    if (!out_.summary.volterra_max_residual ||
        resid > *out_.summary.volterra_max_residual)
      out_.summary.volterra_max_residual = resid;
  }

  void update_coupling() {
    // sup over particles and grid times of |Y_direct - (Z + gamma int Zbar)|.
    const std::size_t n = state_.count();
    const auto& shift = acc_.value();
    double worst = out_.summary.sup_coupling_error.value_or(0.0);
    const double* z = state_.pos.data();
    const double* y = state_.pos2.data();
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < dim_; ++k) {
        const double e = std::abs(y[i * dim_ + k] - z[i * dim_ + k] -
                                  shift[static_cast<std::size_t>(k)]);
        if (e > worst) worst = e;
      }
    out_.summary.sup_coupling_error = worst;
  }

  void init_martingale() {
    const auto com = current_com(true);
    const auto [phibar, bbar] = phi_stats(com);
    phibar0_ = phibar;
    prev_bbar_ = bbar;
    prev_qv_integrand_ = phi_qv_integrand(com);
    mart_integral_ = 0.0;
    mart_qv_ = 0.0;
  }

  std::pair<double, double> phi_stats(const std::vector<double>& com) {
    const std::size_t n = state_.count();
    const double* y = ypos() ? ypos() : zpos();
    double sp = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const PhiEval e =
          eval_phi(opt_.martingale_phi, y + i * dim_, dim_, com.data(), gamma_);
      sp += e.phi;
      sb += e.drift;
    }
    const double nn = static_cast<double>(n);
    return {sp / nn, sb / nn};
  }

  double phi_qv_integrand(const std::vector<double>& com) {
    const std::size_t n = state_.count();
    const double* y = ypos() ? ypos() : zpos();
    double sp = 0.0, sp2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const PhiEval e =
          eval_phi(opt_.martingale_phi, y + i * dim_, dim_, com.data(), gamma_);
      sp += e.phi;
      sp2 += e.phi * e.phi;
    }
    const double nn = static_cast<double>(n);
    const double phibar = sp / nn;
    return (sp2 / nn - phibar * phibar) / state_.total_mass();
  }

  void accumulate_martingale(double t, double dt) {
    const auto com = current_com(true);
    const auto [phibar, bbar] = phi_stats(com);
    const double qv = phi_qv_integrand(com);
    mart_integral_ += 0.5 * dt * (prev_bbar_ + bbar);
    mart_qv_ += 0.5 * dt * (prev_qv_integrand_ + qv);
    prev_bbar_ = bbar;
    prev_qv_integrand_ = qv;
    while (next_probe_mart_ < opt_.probe_times.size() &&
           opt_.probe_times[next_probe_mart_] <= t + 1e-9) {
      out_.summary.martingale.push_back({t, phibar - phibar0_ - mart_integral_, mart_qv_});
      ++next_probe_mart_;
    }
  }

  double window_mass(const Box& box) {
    const double* p = (has_y_ && y_secondary_) ? state_.pos2.data() : state_.pos.data();
    const std::size_t n = state_.count();
    std::size_t inside = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool in = true;
      for (int k = 0; k < dim_ && in; ++k) {
        const double x = p[i * dim_ + k];
        in = x >= box.lo[static_cast<std::size_t>(k)] &&
             x <= box.hi[static_cast<std::size_t>(k)];
      }
      if (in) ++inside;
    }
    return static_cast<double>(inside) * state_.mass_per_particle;
  }

  void record_point(double t) {
    TrajectoryPoint pt;
    pt.t = t;
    pt.mass = state_.total_mass();
    pt.com = primary_com();
    pt.spread = raw_spread(primary_pos());
    if (has_z_) {
      const auto zbar = primary_com();
      const double w = std::exp(gamma_ * t);
      pt.exp_gamma_t_zbar.resize(static_cast<std::size_t>(dim_));
      for (int k = 0; k < dim_; ++k)
        pt.exp_gamma_t_zbar[static_cast<std::size_t>(k)] =
            w * zbar[static_cast<std::size_t>(k)];
    }
    pt.com_y = current_com(true);

    if (opt_.bl_target && t >= opt_.bl_from_t - 1e-9) {
      const auto& target = *opt_.bl_target;
      if (has_z_) pt.bl_ordinary = bl_to_gaussian(false, target.mean, target);
      if (has_y_) {
        std::vector<double> mean = pt.com_y;
        if (!opt_.bl_recenter_interacting)
          mean.assign(static_cast<std::size_t>(dim_), 0.0);
        pt.bl_interacting = bl_to_gaussian(true, mean, target);
      }
    }
    for (const auto& box : opt_.window_boxes) pt.window_masses.push_back(window_mass(box));
    if (!pt.window_masses.empty())
      out_.summary.window_mass_probes.emplace_back(t, pt.window_masses);

    if (state_.count() >= 5) out_.summary.spread_last_5plus = pt.spread;

    while (next_probe_ < opt_.probe_times.size() &&
           opt_.probe_times[next_probe_] <= t + 1e-9) {
      if (has_z_)
        out_.summary.exp_gamma_t_zbar_probes.emplace_back(t, pt.exp_gamma_t_zbar);
      out_.summary.ybar_probes.emplace_back(t, pt.com_y);
      out_.summary.spread_probes.emplace_back(t, pt.spread);
      out_.summary.mass_probes.emplace_back(t, pt.mass);
      ++next_probe_;
    }

    out_.trajectory.points.push_back(std::move(pt));
  }

  double bl_to_gaussian(bool want_y, const std::vector<double>& mean,
                        const GaussianSpec& target) {
    double* p = want_y ? ypos() : zpos();
    const std::size_t n = state_.count();
    if (dim_ == 1) {
      std::vector<double> vals(p, p + n);
      return bl_distance_1d(std::move(vals), mean.empty() ? 0.0 : mean[0],
                            target.variance_per_coordinate);
    }
    EmpiricalMeasure m;
    m.dim = dim_;
    m.weight_per_point = state_.mass_per_particle;
    m.points.assign(p, p + n * static_cast<std::size_t>(dim_));
    GaussianSpec g = target;
    g.mean = mean;
    if (g.mean.empty()) g.mean.assign(static_cast<std::size_t>(dim_), 0.0);
    return sliced_bl(m, g, cfg_.raw.slice_count, slice_rng_);
  }

  void finish_extinct() {
    const double eta = *state_.extinction_time;
    out_.summary.survived = false;
    out_.summary.eta = eta;
    out_.summary.t_final = eta;
    out_.summary.final_mass = 0.0;
    out_.summary.w_estimate = 0.0;
    out_.trajectory.survived = false;
    out_.trajectory.extinction_time = eta;
    const auto& pts = out_.trajectory.points;
    if (pts.size() >= 2) {
      auto dist = [this](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (int k = 0; k < dim_; ++k) {
          const double d = a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)];
          s += d * d;
        }
        return std::sqrt(s);
      };
      out_.summary.dybar_early = dist(pts[1].com_y, pts[0].com_y);
      out_.summary.dybar_late =
          dist(pts[pts.size() - 1].com_y, pts[pts.size() - 2].com_y);
    }
    if (opt_.martingale_phi != TestFunction::none) {
      // The stopped process is constant after eta; emit the remaining probes.
      while (next_probe_mart_ < opt_.probe_times.size()) {
        out_.summary.martingale.push_back({eta, mart_stop_nhat_, mart_stop_qv_});
        ++next_probe_mart_;
      }
    }
    out_.summary.zbar_final = last_zbar_pre_death_;
    if (has_y_) out_.summary.ybar_final = last_ybar_pre_death_;
    if (cfg_.raw.mode == Mode::coupled) {
      ExtinctionReport rep;
      rep.eta = eta;
      rep.f_estimate = last_zbar_pre_death_;
      rep.f_prime_estimate = last_ybar_pre_death_;
      rep.offset_at_eta = acc_.value();
      out_.summary.extinction = std::move(rep);
    }
  }

  void finish_alive() {
    out_.summary.survived = true;
    out_.summary.t_final = state_.time;
    out_.summary.final_mass = state_.total_mass();
    out_.summary.w_estimate =
        std::exp(-cfg_.raw.beta * state_.time) * state_.total_mass();
    out_.trajectory.survived = true;
    if (has_z_) out_.summary.zbar_final = primary_com();
    out_.summary.ybar_final = current_com(true);
    if (!out_.trajectory.points.empty()) {
      const auto& last = out_.trajectory.points.back();
      if (!std::isnan(last.bl_ordinary)) out_.summary.bl_ordinary_final = last.bl_ordinary;
      if (!std::isnan(last.bl_interacting))
        out_.summary.bl_interacting_final = last.bl_interacting;
    }
  }

  const ValidatedConfig& cfg_;
  const EngineOptions& opt_;
  int dim_;
  double gamma_;
  double h_;
  Rng root_;
  Rng branch_rng_;
  Rng slice_rng_;
  NoiseGrid noise_;
  OffspringLaw law_;
  OffsetAccumulator acc_;

  PopulationState state_;
  bool has_z_ = false, has_y_ = false, y_secondary_ = false;
  std::vector<double> sum_primary_, sum_secondary_;
  std::vector<double> ybar_frozen_;
  BranchEvent pending_;

  double last_node_t_ = 0.0;
  std::vector<double> last_node_zbar_;
  std::vector<double> zbar_scratch_, ybar_scratch_;
  std::vector<double> last_zbar_pre_death_, last_ybar_pre_death_;

  std::vector<double> volterra_kernel_, prev_ybar_;

  double phibar0_ = 0.0, prev_bbar_ = 0.0, prev_qv_integrand_ = 0.0;
  double mart_integral_ = 0.0, mart_qv_ = 0.0;
  double mart_stop_nhat_ = 0.0, mart_stop_qv_ = 0.0;
  double last_sync_t_ = 0.0;
  std::size_t next_probe_mart_ = 0;

  std::uint64_t record_stride_ = 1;
  std::size_t next_probe_ = 0;

  double cached_delta_ = -1.0;
  OuStep cached_step_;

  ReplicateOutput out_;
};

ReplicateOutput run_mass_only_replicate(const ValidatedConfig& cfg,
                                        const EngineOptions& opt,
                                        std::uint64_t seed_base, std::uint64_t rep) {
  Rng root(replicate_key(seed_base, rep));
  MassTrajectory mt = run_mass_only(cfg, root, opt.record_dt);
  ReplicateOutput out;
  out.summary.replicate_index = rep;
  out.summary.seed = seed_base + rep;
  out.summary.survived = !mt.extinction_time.has_value();
  out.summary.eta = mt.extinction_time;
  out.summary.t_final = cfg.raw.t_max;
  out.summary.final_mass = mt.mass.back();
  out.summary.w_estimate = std::exp(-cfg.raw.beta * cfg.raw.t_max) * mt.mass.back();
  out.trajectory.survived = out.summary.survived;
  out.trajectory.extinction_time = mt.extinction_time;
  out.trajectory.points.reserve(mt.times.size());
  for (std::size_t i = 0; i < mt.times.size(); ++i) {
    if (mt.extinction_time && mt.times[i] > *mt.extinction_time) break;
    TrajectoryPoint pt;
    pt.t = mt.times[i];
    pt.mass = mt.mass[i];
    out.trajectory.points.push_back(std::move(pt));
  }
  std::size_t gi = 0;
  for (double probe : opt.probe_times) {
    while (gi < mt.times.size() && mt.times[gi] < probe - 1e-9) ++gi;
    if (gi == mt.times.size()) break;
    out.summary.mass_probes.emplace_back(mt.times[gi], mt.mass[gi]);
  }
  return out;
}

}  // namespace

ReplicateOutput run_replicate(const ValidatedConfig& cfg, const EngineOptions& opt,
                              std::uint64_t seed_base, std::uint64_t replicate_index) {
  if (cfg.raw.mode == Mode::mass_only)
    return run_mass_only_replicate(cfg, opt, seed_base, replicate_index);
  ReplicateRunner runner(cfg, opt, seed_base, replicate_index);
  return runner.run();
}

}  // namespace sousim
