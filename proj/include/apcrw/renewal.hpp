#pragma once

// Regeneration machinery for the plain model: cones of slope v_bar, record
// times, influence fields, good-record detection, regeneration times, and the
// renewal-reward speed estimator.

#include <cstdint>
#include <vector>

#include "apcrw/env_core.hpp"
#include "apcrw/types.hpp"

namespace apcrw {

struct ConeParams {
  double v_bar = 0.3;   // cone slope, strictly between the environment drift
  double v_star = 0.45; // and a faster reference speed below the walker's

  // Smallest height multiplier for which a line of slope v_star from the
  // parallelogram's bottom-left corner exits through its right side.
  double beta() const noexcept { return (1.0 - v_bar) / (v_star - v_bar); }

  void validate(double env_drift) const {
    if (!(env_drift < v_bar && v_bar < v_star && v_star < 1.0))
      throw std::invalid_argument("cone parameters need drift < v_bar < v_star < 1");
  }
};

// Scale constants of the good-record construction. T is the target timescale
// the logarithmic formulas key off; c scales the staying-time exponent;
// box_multiplier sets the surrounding-box side as a multiple of T''.
struct RenewalKnobs {
  double T = 1e6;
  double c = 1.0;
  double box_multiplier = 4.0;

  // T'' = floor(delta log T), delta = 1 / (4 log(1 / (p_occ ^ p_vac)))
  std::int64_t t_consec(const WalkParams& wp) const {
    double p_min = std::min(wp.p_occ, wp.p_vac);
    double delta = 1.0 / (4.0 * std::log(1.0 / p_min));
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(delta * std::log(T)));
  }
  // T' = floor(T^epsilon), epsilon = (c * delta ^ 1) / 4
  std::int64_t t_stay(const WalkParams& wp) const {
    double p_min = std::min(wp.p_occ, wp.p_vac);
    double delta = 1.0 / (4.0 * std::log(1.0 / p_min));
    double eps = std::min(c * delta, 1.0) / 4.0;
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::pow(T, eps)));
  }
  std::int64_t box_side(const WalkParams& wp) const {
    return static_cast<std::int64_t>(box_multiplier * static_cast<double>(t_consec(wp)));
  }
};

// R_k = first entry of (X_n, n) into the up-cone with apex ((1-v_bar)k, 0),
// i.e. the first n with X_n >= (1-v_bar)k + v_bar n. Returned for k = 1, 2...
std::vector<std::int64_t> record_times(const Trajectory& traj, double v_bar);

// Smallest l >= 0 such that no recorded particle path intersects both the
// down-cone at (x, n) and the up-cone at (x+l, n+l), with up-cone entries only
// counted up to time t_max (the finite-horizon truncation).
std::int64_t influence_field(const ParticleCloud& cloud, std::int64_t x, std::int64_t n,
                             double v_bar, std::int64_t t_max);

struct GoodRecordScan {
  std::vector<std::int64_t> records;
  std::vector<std::size_t> good;       // indices into records
  std::vector<std::int64_t> regens;    // accepted regeneration times R_k + T''
};

// Applies the four good-record conditions at each record time: T'' consecutive
// right steps, small local influence field, no in-between particle entering
// the new cone, and a right-side parallelogram exit. Regenerations add the
// surrounding-box influence filter and a greedy T'-separation.
GoodRecordScan scan_good_records(const Trajectory& traj, const ParticleCloud& cloud,
                                 const ConeParams& cone, const WalkParams& wp,
                                 const RenewalKnobs& knobs);

std::vector<std::size_t> detect_good_records(const Trajectory& traj, const ParticleCloud& cloud,
                                             const ConeParams& cone, const WalkParams& wp,
                                             const RenewalKnobs& knobs);
std::vector<std::int64_t> regeneration_times(const Trajectory& traj, const ParticleCloud& cloud,
                                             const ConeParams& cone, const WalkParams& wp,
                                             const RenewalKnobs& knobs);

// Ratio estimator (sum of spatial increments) / (sum of temporal increments)
// with a delta-method confidence interval; invalid when fewer than 2
// increments are available.
SpeedEstimate renewal_speed(const std::vector<double>& dx, const std::vector<double>& dt);

struct RenewalReport {
  std::int64_t trajectories = 0;
  std::int64_t horizon = 0;
  std::int64_t n_records = 0, n_good = 0, n_regens = 0;
  std::vector<double> dx, dt;          // regeneration increments, pooled
  SpeedEstimate speed;                 // renewal-reward estimate
  SpeedEstimate direct;                // plain X_T / T across trajectories
  double lag1_dx = 0, lag1_dt = 0;     // increment autocorrelations
  double ks_d = 0, ks_p = 1;           // halves comparison on dx
  std::int64_t t_consec = 0, t_stay = 0, box = 0;
};

// Streaming large-scale run: simulates `trajectories` independent plain-model
// walks of `horizon` steps with full particle tracking in a rolling window,
// detecting regenerations on the fly. Law-identical to the reference pipeline
// above (tested on small instances).
RenewalReport run_renewal_experiment(const EnvParams& env, const WalkParams& wp,
                                     const ConeParams& cone, const RenewalKnobs& knobs,
                                     std::int64_t horizon, std::int64_t trajectories,
                                     std::uint64_t seed, int threads = 1);

}  // namespace apcrw
