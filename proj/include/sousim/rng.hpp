#ifndef SOUSIM_RNG_HPP
#define SOUSIM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <array>

// Counter-based random numbers (Philox4x64-10, Salmon et al. SC'11).
//
// Every random quantity in a run is a pure function of (stream key, counter),
// which is what makes replicates reproducible under any thread count and lets
// the coupled ordinary/interacting systems read the *same* Gaussian increments
// addressed by (particle stream key, step, substep).

namespace sousim {

struct Key128 {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;
  friend bool operator==(const Key128& a, const Key128& b) {
    return a.hi == b.hi && a.lo == b.lo;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline void mulhilo64(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                      std::uint64_t& lo) {
  unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(p >> 64);
  lo = static_cast<std::uint64_t>(p);
}

}  // namespace detail

using Counter4 = std::array<std::uint64_t, 4>;

// One Philox4x64 block: 256 counter bits + 128 key bits -> 256 output bits.
inline Counter4 philox4x64(Counter4 ctr, Key128 key) {
  constexpr std::uint64_t M0 = 0xD2E7470EE14C6C93ull;
  constexpr std::uint64_t M1 = 0xCA5A826395121157ull;
  constexpr std::uint64_t W0 = 0x9E3779B97F4A7C15ull;
  constexpr std::uint64_t W1 = 0xBB67AE8584CAA73Bull;
  std::uint64_t k0 = key.hi, k1 = key.lo;
  for (int round = 0; round < 10; ++round) {
    std::uint64_t hi0, lo0, hi1, lo1;
    detail::mulhilo64(M0, ctr[0], hi0, lo0);
    detail::mulhilo64(M1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += W0;
    k1 += W1;
  }
  return ctr;
}

inline double u64_to_unit(std::uint64_t x) {
  // 53-bit mantissa, result in [2^-54, 1 - 2^-54]; never 0 or 1 so logs are safe.
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

// Sequential stream view of the counter RNG. State is (key, block index,
// position inside block); cheap to copy, safe to hand one per replicate.
class Rng {
 public:
  Rng() : Rng(Key128{0, 0}) {}
  explicit Rng(Key128 key) : key_(key) { refill(); }

  // Deterministic sub-stream derivation: namespace constants keep the
  // branching stream, initial-position stream etc. disjoint.
  Rng substream(std::uint64_t domain, std::uint64_t index = 0) const {
    Key128 k;
    k.hi = detail::splitmix64(key_.hi ^ detail::splitmix64(domain));
    k.lo = detail::splitmix64(key_.lo ^ detail::splitmix64(index + 0x7F4A7C15ull));
    return Rng(k);
  }

  std::uint64_t next_u64() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  double uniform() { return u64_to_unit(next_u64()); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  double normal() {
    // Box-Muller; the second variate of the pair is deliberately not cached
    // so the draw count per call site is fixed.
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Index below count, uniform.
  std::uint64_t uniform_index(std::uint64_t count) {
    // count is far below 2^53 in practice; modulo bias is < count/2^64.
    return next_u64() % count;
  }

  Key128 key() const { return key_; }

 private:
  void refill() {
    buf_ = philox4x64({block_++, 0, 0, 0x5eedull}, key_);
    pos_ = 0;
  }

  Key128 key_;
  std::uint64_t block_ = 0;
  Counter4 buf_{};
  int pos_ = 4;
};

// --- Key derivation -------------------------------------------------------

// 128-bit per-particle noise stream key for root particle `index` of a replicate.
inline Key128 root_particle_key(Key128 replicate_key, std::uint64_t index) {
  Key128 k;
  k.hi = detail::splitmix64(replicate_key.hi ^ detail::splitmix64(index * 2 + 1));
  k.lo = detail::splitmix64(replicate_key.lo + 0x9E3779B97F4A7C15ull * (index + 1));
  return k;
}

// Children draw fresh keys from (parent key, event counter, slot); this makes
// the key tree a pure function of the branching skeleton, shared by coupled runs.
inline Key128 child_key(Key128 parent, std::uint64_t event_counter, int slot) {
  Key128 k;
  k.hi = detail::splitmix64(parent.hi ^ detail::splitmix64(event_counter * 2 + slot));
  k.lo = detail::splitmix64(parent.lo ^ detail::splitmix64(event_counter ^ (0xABCDull + slot)));
  return k;
}

// Replicate keys: documented, test-pinned derivation seed_base + replicate index.
inline Key128 replicate_key(std::uint64_t seed_base, std::uint64_t replicate_index) {
  const std::uint64_t s = seed_base + replicate_index;
  return Key128{detail::splitmix64(s),
                detail::splitmix64(detail::splitmix64(s) ^ 0x50555F434F4Dull)};
}

// --- Indexed Gaussian noise ------------------------------------------------

// Gaussian increments addressed by (particle key, step, substep, lane).
// One philox block yields four N(0,1) lanes; a d-dimensional advance consumes
// lanes 0..d-1 of consecutive blocks as needed. Never reused across substeps.
class NoiseGrid {
 public:
  explicit NoiseGrid(Key128 replicate_key) : salt_(replicate_key) {}

  // Fills out[0..dim) with independent N(0,1) for this (key, step, substep).
  void gaussians(Key128 particle_key, std::uint64_t step, std::uint32_t substep,
                 int dim, double* out) const {
    Key128 k{particle_key.hi ^ salt_.hi, particle_key.lo ^ salt_.lo};
    int produced = 0;
    std::uint64_t block = 0;
    while (produced < dim) {
      Counter4 r = philox4x64({step, static_cast<std::uint64_t>(substep), block++, 0xA0153ull}, k);
      for (int pair = 0; pair < 2 && produced < dim; ++pair) {
        const double u1 = u64_to_unit(r[2 * pair]);
        const double u2 = u64_to_unit(r[2 * pair + 1]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925287 * u2;
        out[produced++] = rad * std::cos(ang);
        if (produced < dim) out[produced++] = rad * std::sin(ang);
      }
    }
  }

 private:
  Key128 salt_;
};

}  // namespace sousim

#endif  // SOUSIM_RNG_HPP
