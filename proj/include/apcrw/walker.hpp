#pragma once

// The driven walker, the shared uniform field on the space-time lattice, and
// the deterministic monotone coupling of walks on ordered environments.

#include <cstdint>
#include <utility>

#include "apcrw/env_core.hpp"
#include "apcrw/rng.hpp"
#include "apcrw/types.hpp"

namespace apcrw {

// Deterministic map from absolute space-time points to uniforms. Coupled
// walks share one field so that walks meeting at a point merge forever.
struct UniformField {
  std::uint64_t key = 0;

  static UniformField from_seed(std::uint64_t seed) {
    return UniformField{stream_key(seed, Stream::walk_field)};
  }
  double at(std::int64_t x, std::int64_t n) const noexcept { return unit_at(key, x, n); }
};

// Arrow at a point: +1 iff u <= (p_vac - p_occ) * 1{empty} + p_occ, i.e.
// threshold p_occ when occupied and p_vac when empty. For fixed u the arrow
// is monotone in occupancy because p_occ > p_vac.
inline int arrow(bool occupied, double u, const WalkParams& wp) noexcept {
  double threshold = occupied ? wp.p_occ : wp.p_vac;
  return u <= threshold ? +1 : -1;
}

// Environments are consumed through accessors exposing occupancy at the
// current time plus a step operation, so plain, finite-range and coupled
// environments plug in uniformly.
//   bool occupied(int64 x) const;   occupancy at the accessor's current time
//   void advance();                 move the environment one step forward
//   int64 time() const;             current absolute time
template <class Env>
Trajectory run_walk(Env&& env, LatticePoint start, std::int64_t n_steps,
                    const UniformField& field, const WalkParams& wp) {
  Trajectory traj;
  traj.start = start;
  traj.positions.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.positions.push_back(static_cast<std::int32_t>(start.x));
  std::int64_t x = start.x;
  for (std::int64_t k = 0; k < n_steps; ++k) {
    std::int64_t t = start.n + k;
    if (env.time() != t) throw std::logic_error("run_walk: environment time out of sync");
    x += arrow(env.occupied(x), field.at(x, t), wp);
    traj.positions.push_back(static_cast<std::int32_t>(x));
    env.advance();
  }
  return traj;
}

// Count-based environment accessor that owns its evolution.
class CountEnvDriver {
 public:
  CountEnvDriver(EnvState state, EnvParams params, std::uint64_t seed)
      : state_(std::move(state)),
        params_(std::move(params)),
        rng_(stream_key(seed, Stream::env_step)) {}

  bool occupied(std::int64_t x) const { return state_.occupied(x); }
  void advance() { step_counts_inplace(state_, params_, rng_); }
  std::int64_t time() const { return state_.time; }
  const EnvState& state() const { return state_; }

 private:
  EnvState state_;
  EnvParams params_;
  Rng rng_;
};

// Replays a recorded particle cloud as an occupancy accessor.
class CloudEnvDriver {
 public:
  explicit CloudEnvDriver(const ParticleCloud& cloud, std::int64_t t0 = 0)
      : cloud_(cloud), time_(t0) { rebuild(); }

  bool occupied(std::int64_t x) const {
    if (!cloud_.window.contains(x)) return false;
    return occ_[static_cast<std::size_t>(x - cloud_.window.lo)] > 0;
  }
  void advance() {
    ++time_;
    rebuild();
  }
  std::int64_t time() const { return time_; }

 private:
  void rebuild() {
    occ_.assign(static_cast<std::size_t>(cloud_.window.size()), 0);
    if (time_ > cloud_.horizon) return;
    for (const auto& p : cloud_.particles) {
      std::int64_t x = p.path[static_cast<std::size_t>(time_)];
      if (cloud_.window.contains(x)) ++occ_[static_cast<std::size_t>(x - cloud_.window.lo)];
    }
  }
  const ParticleCloud& cloud_;
  std::int64_t time_;
  std::vector<std::int32_t> occ_;
};

struct CoupledWalksResult {
  Trajectory lo;
  Trajectory hi;
  std::int64_t ordering_violations = 0;  // steps with X_lo > X_hi
};

// Runs two walks with a shared uniform field on environments already coupled
// so that eta_lo <= eta_hi pointwise (e.g. from couple_monotone). Under the
// ordering of the starts this forces X_lo(k) <= X_hi(k) for every k.
CoupledWalksResult run_coupled_walks(const ParticleCloud& env_lo, const ParticleCloud& env_hi,
                                     LatticePoint start_lo, LatticePoint start_hi,
                                     std::int64_t n_steps, const UniformField& field,
                                     const WalkParams& wp);

// Trajectory CSV, columns: step,position.
std::string trajectory_csv(const Trajectory& traj);

}  // namespace apcrw
