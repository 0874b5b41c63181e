#include "sousim/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sousim {

EmpiricalMeasure empirical_from_state(const PopulationState& s, bool secondary) {
  EmpiricalMeasure m;
  m.dim = s.dim;
  m.weight_per_point = s.mass_per_particle;
  m.points = secondary ? s.pos2 : s.pos;
  return m;
}

std::optional<std::vector<double>> center_of_mass(const EmpiricalMeasure& m) {
  const std::size_t n = m.count();
  if (n == 0) return std::nullopt;
  std::vector<double> c(static_cast<std::size_t>(m.dim), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < m.dim; ++k)
      c[static_cast<std::size_t>(k)] += m.points[i * m.dim + k];
  for (double& v : c) v /= static_cast<double>(n);
  return c;
}

std::optional<double> spread(const EmpiricalMeasure& m) {
  const std::size_t n = m.count();
  if (n == 0) return std::nullopt;
  const auto com = *center_of_mass(m);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < m.dim; ++k) {
      const double d = m.points[i * m.dim + k] - com[static_cast<std::size_t>(k)];
      acc += d * d;
    }
  return std::sqrt(acc / static_cast<double>(n));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730951); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("normal_quantile: p must lie in (0,1)");
  // Abramowitz-Stegun 26.2.23 starting point (|err| < 4.5e-4)
  const double pl = std::min(p, 1.0 - p);
  const double t = std::sqrt(-2.0 * std::log(pl));
  double x = t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t);
  if (p < 0.5) x = -x;
  for (int it = 0; it < 3; ++it) {
    const double err = normal_cdf(x) - p;
    const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
    if (pdf <= 0.0) break;
    x -= err / pdf;
  }
  return x;
}

namespace {

constexpr double kMetricCap = 2.0;

// Exact W1 between two uniform empirical probability measures:
// integral over x of |F(x) - G(x)|.
double w1_sorted(std::vector<double>& a, std::vector<double>& b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  double prev = std::min(a[0], b[0]);
  double acc = 0.0;
  while (ia < a.size() || ib < b.size()) {
    const double xa = ia < a.size() ? a[ia] : std::numeric_limits<double>::infinity();
    const double xb = ib < b.size() ? b[ib] : std::numeric_limits<double>::infinity();
    const double x = std::min(xa, xb);
    acc += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) *
           (x - prev);
    prev = x;
    if (xa <= xb)
      ++ia;
    else
      ++ib;
  }
  return acc;
}

}  // namespace

double bl_distance_1d(std::vector<double> sample_a, std::vector<double> sample_b) {
  if (sample_a.empty() || sample_b.empty())
    throw std::invalid_argument("bl_distance_1d: empty sample");
  return std::min(w1_sorted(sample_a, sample_b), kMetricCap);
}

double bl_distance_1d(std::vector<double> sample, double gauss_mean, double gauss_var) {
  if (sample.empty()) throw std::invalid_argument("bl_distance_1d: empty sample");
  if (!(gauss_var > 0.0)) throw std::invalid_argument("bl_distance_1d: variance <= 0");
  std::sort(sample.begin(), sample.end());
  const double sd = std::sqrt(gauss_var);
  const double n = static_cast<double>(sample.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double q = gauss_mean +
                     sd * normal_quantile((static_cast<double>(i) + 0.5) / n);
    acc += std::abs(sample[i] - q);
  }
  return std::min(acc / n, kMetricCap);
}

namespace {

std::vector<double> random_direction(int dim, Rng& rng) {
  std::vector<double> u(static_cast<std::size_t>(dim));
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& v : u) {
      v = rng.normal();
      norm2 += v * v;
    }
  } while (norm2 < 1e-12);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& v : u) v *= inv;
  return u;
}

std::vector<double> project(const EmpiricalMeasure& m, const std::vector<double>& u) {
  std::vector<double> out(m.count());
  for (std::size_t i = 0; i < m.count(); ++i) {
    double s = 0.0;
    for (int k = 0; k < m.dim; ++k)
      s += m.points[i * m.dim + k] * u[static_cast<std::size_t>(k)];
    out[i] = s;
  }
  return out;
}

}  // namespace

double sliced_bl(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int directions,
                 Rng& rng) {
  if (directions < 1) throw std::invalid_argument("sliced_bl: need >= 1 direction");
  if (a.dim != b.dim) throw std::invalid_argument("sliced_bl: dimension mismatch");
  double acc = 0.0;
  for (int q = 0; q < directions; ++q) {
    const auto u = random_direction(a.dim, rng);
    acc += bl_distance_1d(project(a, u), project(b, u));
  }
  return acc / directions;
}

double sliced_bl(const EmpiricalMeasure& a, const GaussianSpec& g, int directions,
                 Rng& rng) {
  if (directions < 1) throw std::invalid_argument("sliced_bl: need >= 1 direction");
  double acc = 0.0;
  for (int q = 0; q < directions; ++q) {
    const auto u = random_direction(a.dim, rng);
    double mean_proj = 0.0;
    for (int k = 0; k < a.dim; ++k)
      mean_proj += (g.mean.empty() ? 0.0 : g.mean[static_cast<std::size_t>(k)]) *
                   u[static_cast<std::size_t>(k)];
    acc += bl_distance_1d(project(a, u), mean_proj, g.variance_per_coordinate);
  }
  return acc / directions;
}

double indicator_mass(const EmpiricalMeasure& m, const Box& box) {
  if (static_cast<int>(box.lo.size()) != m.dim ||
      static_cast<int>(box.hi.size()) != m.dim)
    throw std::invalid_argument("indicator_mass: box dimension mismatch");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < m.count(); ++i) {
    bool in = true;
    for (int k = 0; k < m.dim && in; ++k) {
      const double x = m.points[i * m.dim + k];
      in = x >= box.lo[static_cast<std::size_t>(k)] &&
           x <= box.hi[static_cast<std::size_t>(k)];
    }
    if (in) ++inside;
  }
  return static_cast<double>(inside) * m.weight_per_point;
}

std::vector<std::pair<double, double>> time_change(const MassTrajectory& traj) {
  std::vector<std::pair<double, double>> zeta;
  if (traj.times.empty()) return zeta;
  zeta.reserve(traj.times.size());
  zeta.emplace_back(traj.times[0], 0.0);
  double acc = 0.0;
  for (std::size_t i = 1; i < traj.times.size(); ++i) {
    if (traj.mass[i] <= 0.0 || traj.mass[i - 1] <= 0.0) break;
    const double dt = traj.times[i] - traj.times[i - 1];
    acc += 0.5 * dt * (1.0 / traj.mass[i - 1] + 1.0 / traj.mass[i]);
    zeta.emplace_back(traj.times[i], acc);
  }
  return zeta;
}

}  // namespace sousim
