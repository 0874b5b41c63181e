#ifndef SOUSIM_SAMPLERS_HPP
#define SOUSIM_SAMPLERS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "sousim/rng.hpp"

// Discrete samplers used by the mass-only birth-death engine. Own
// implementations (not std::*_distribution) so results are identical across
// standard libraries; all are O(1) or O(sqrt(variance)) per draw.

namespace sousim {

// Marsaglia-Tsang squeeze method; exact for any shape > 0, unit scale.
inline double gamma_sample(Rng& rng, double shape) {
  if (shape < 1.0) {
    // Boost: Gamma(a) = Gamma(a+1) * U^{1/a}
    const double u = rng.uniform();
    return gamma_sample(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Poisson: inversion (chop-down) for small mean, Hormann's PTRS transformed
// rejection for large mean. Exact for all means.
inline std::uint64_t poisson_sample(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  if (mean < 30.0) {
    const double L = std::exp(-mean);
    double p = 1.0;
    std::uint64_t k = 0;
    do {
      ++k;
      p *= rng.uniform();
    } while (p > L);
    return k - 1;
  }
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double lmu = std::log(mean);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * lmu - mean - std::lgamma(kf + 1.0)) {
      return static_cast<std::uint64_t>(kf);
    }
  }
}

namespace detail {

// Chop-down binomial walking outward from the mode. Expected cost
// O(sqrt(n p (1-p))); exact up to floating accumulation.
inline std::uint64_t binomial_from_mode(Rng& rng, std::uint64_t n, double p) {
  const double q = 1.0 - p;
  const std::uint64_t mode = static_cast<std::uint64_t>((static_cast<double>(n) + 1.0) * p);
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(mode);
  const double log_pm = std::lgamma(nd + 1.0) - std::lgamma(md + 1.0) -
                        std::lgamma(nd - md + 1.0) + md * std::log(p) +
                        (nd - md) * std::log(q);
  const double pm = std::exp(log_pm);
  double u = rng.uniform();
  if (u <= pm) return mode;
  u -= pm;
  double pl = pm, pr = pm;
  std::uint64_t l = mode, r = mode;
  for (;;) {
    bool advanced = false;
    if (r < n) {
      const double rd = static_cast<double>(r);
      pr *= (nd - rd) * p / ((rd + 1.0) * q);
      ++r;
      if (u <= pr) return r;
      u -= pr;
      advanced = true;
    }
    if (l > 0) {
      const double ld = static_cast<double>(l);
      pl *= ld * q / ((nd - ld + 1.0) * p);
      --l;
      if (u <= pl) return l;
      u -= pl;
      advanced = true;
    }
    if (!advanced) return mode;  // accumulated mass ~1; numeric remainder
  }
}

}  // namespace detail

// Binomial(n, p). Exact (inversion from the mode) while n p (1-p) <= 250000;
// above that a clamped rounded-normal is used (mean and variance exact; the
// regime is only reached by late-time mass diagnostics, never by the
// small-count transitions that decide extinction).
inline std::uint64_t binomial_sample(Rng& rng, std::uint64_t n, double p) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  const double nd = static_cast<double>(n);
  const double npq = nd * p * (1.0 - p);
  if (npq > 250000.0) {
    const double x = nd * p + std::sqrt(npq) * rng.normal();
    const double r = std::nearbyint(x);
    if (r <= 0.0) return 0;
    if (r >= nd) return n;
    return static_cast<std::uint64_t>(r);
  }
  if (p > 0.5) return n - binomial_sample(rng, n, 1.0 - p);
  if (nd * p < 15.0) {
    // Waiting-time method: trials to each success are Geometric(p).
    const double lq = std::log1p(-p);
    std::uint64_t k = 0;
    double trials = 0.0;
    for (;;) {
      trials += std::floor(std::log(rng.uniform()) / lq) + 1.0;
      if (trials > nd) return k;
      ++k;
    }
  }
  return detail::binomial_from_mode(rng, n, p);
}

// Negative binomial: number of failures before `r` successes, failure
// probability eta. Gamma-Poisson mixture, exact.
inline std::uint64_t negative_binomial_sample(Rng& rng, std::uint64_t r, double eta) {
  if (r == 0 || eta <= 0.0) return 0;
  const double lambda = gamma_sample(rng, static_cast<double>(r)) * eta / (1.0 - eta);
  return poisson_sample(rng, lambda);
}

}  // namespace sousim

#endif  // SOUSIM_SAMPLERS_HPP
