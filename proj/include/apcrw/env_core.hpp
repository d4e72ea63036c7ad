#pragma once

// APCRW environment: stationary sampling, count-based and particle-based
// single-step evolution, monotone couplings, and empirical density scans.

#include <cstdint>
#include <string>
#include <vector>

#include "apcrw/rng.hpp"
#include "apcrw/types.hpp"

namespace apcrw {

// Per-site particle counts on a finite window at one time, one row per type.
// Particles leaving the window are tallied in `overflow`, never reflected;
// with exact-rule windows the boundary never reaches the observables.
struct EnvState {
  Window window;
  std::int64_t time = 0;
  std::vector<std::vector<std::int32_t>> counts;  // [type][x - window.lo]
  std::vector<std::int64_t> overflow;             // per type

  EnvState() = default;
  EnvState(Window w, int n_types)
      : window(w),
        counts(n_types, std::vector<std::int32_t>(static_cast<std::size_t>(w.size()), 0)),
        overflow(n_types, 0) {}

  int n_types() const noexcept { return static_cast<int>(counts.size()); }
  std::int32_t count(int type, std::int64_t x) const {
    return counts[type][static_cast<std::size_t>(x - window.lo)];
  }
  std::int32_t& count(int type, std::int64_t x) {
    return counts[type][static_cast<std::size_t>(x - window.lo)];
  }
  // A site is occupied when any type has a particle there.
  bool occupied(std::int64_t x) const {
    if (!window.contains(x)) return false;
    for (const auto& row : counts)
      if (row[static_cast<std::size_t>(x - window.lo)] > 0) return true;
    return false;
  }
  std::int64_t total(int type) const {
    std::int64_t s = 0;
    for (auto c : counts[type]) s += c;
    return s;
  }
  std::int64_t total_with_overflow() const {
    std::int64_t s = 0;
    for (int ty = 0; ty < n_types(); ++ty) s += total(ty) + overflow[ty];
    return s;
  }
};

// Product-Poisson initial state: count(type, x) ~ Poi(rho_type) i.i.d.
EnvState sample_initial(const EnvParams& params, Window window, std::uint64_t seed);

// Deterministic near-constant-density state: type rows get floor(rho*(i+1)) -
// floor(rho*i) particles at the i-th site, so every interval I satisfies
// |eta(I) - rho|I|| <= 1 per type.
EnvState exact_density_state(const EnvParams& params, Window window);

// One synchronous step: each site count splits (left, stay, right) ~
// Multinomial(count; alpha(1-q), 1-alpha, alpha q), independently over sites.
void step_counts_inplace(EnvState& state, const EnvParams& params, Rng& rng);
EnvState step_counts(const EnvState& state, const EnvParams& params, Rng& rng);

// Individually tracked particles with recorded paths.
struct ParticleCloud {
  struct Particle {
    std::uint8_t type = 0;
    std::uint64_t uid = 0;               // keys the step randomness
    std::vector<std::int32_t> path;      // path[t] = position at time t
  };
  Window window;               // where the initial data lives
  std::int64_t horizon = 0;    // recorded up to this time (path length - 1)
  int n_types_ = 1;
  std::vector<Particle> particles;

  int n_types() const noexcept { return n_types_; }
};

// Poisson cloud on the window; particle uids are (site, index, layer) based so
// coupled clouds can share step randomness.
ParticleCloud cloud_from_poisson(const EnvParams& params, Window window, std::uint64_t seed,
                                 std::uint64_t layer = 0);
ParticleCloud cloud_from_state(const EnvState& state, std::uint64_t layer = 0);

// Advance every particle by one step; draws are keyed by (uid, time), so two
// clouds sharing uids and seed stay paired step for step.
void step_particles_inplace(ParticleCloud& cloud, const EnvParams& params, std::uint64_t seed);

// Particle-position histogram at a recorded time.
EnvState counts_of(const ParticleCloud& cloud, std::int64_t time);

// Monotone coupling of densities rho_lo <= rho_hi: the hi cloud is the lo
// cloud plus an independent Poi(rho_hi - rho_lo) layer; paired particles share
// step sequences, so eta_lo(x,t) <= eta_hi(x,t) holds deterministically.
// Both clouds are evolved up to `horizon` with recorded paths.
std::pair<ParticleCloud, ParticleCloud> couple_monotone(const EnvParams& lo,
                                                        const EnvParams& hi, Window window,
                                                        std::int64_t horizon,
                                                        std::uint64_t seed);

struct DensityReport {
  std::int64_t ell = 0;
  double eps = 0;
  double rho = 0;
  std::int64_t worst_lo = 0;       // left end of the worst interval
  double max_abs_deviation = 0;    // max over I of |eta(I) - rho*ell| / ell
  bool pass = false;               // max deviation < eps
};

// Scans all length-ell subintervals of the state's window (total count over
// types, compared against the total density).
DensityReport empirical_density_report(const EnvState& state, std::int64_t ell, double rho,
                                       double eps);

// CSV export, columns: site,type,count.
std::string env_state_csv(const EnvState& state);

}  // namespace apcrw
