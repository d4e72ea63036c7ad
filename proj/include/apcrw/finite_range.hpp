#pragma once

// Finite-range environment (refresh every L steps), Monte Carlo speed
// estimation, the many-to-one coupling experiment, and the deviation /
// ballisticity / dyadic studies built on top of it.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "apcrw/env_core.hpp"
#include "apcrw/rng.hpp"
#include "apcrw/types.hpp"
#include "apcrw/walker.hpp"

namespace apcrw {

inline constexpr std::int64_t kPlainRange = std::numeric_limits<std::int64_t>::max() / 4;

struct FiniteRangeParams {
  EnvParams env;
  std::int64_t L = kPlainRange;  // refresh period; L >= n behaves as the plain model

  void validate() const {
    env.validate();
    if (L < 1) throw std::invalid_argument("finite-range L must be >= 1");
  }
};

// Exact event-driven particle cloud for occupancy-at-the-walker queries.
//
// Particles are independent walks, so any particle at distance d from the
// walker cannot sit on the walker's site for the next floor((d-1)/2) steps
// (closing speed is at most 2 per step). Far particles therefore sleep in a
// calendar queue and are fast-forwarded on wake-up with one multinomial draw
// (#active ~ Bin(dt, alpha), #right ~ Bin(#active, q)), which has exactly the
// law of the skipped steps. Near particles are stepped one step at a time.
// Occupancy queries only ever look at the walker's site, so the scheme is
// law-exact for the walker trajectory; a two-sample test against the
// count-based reference engine backs this up.
class FastCloud {
 public:
  FastCloud(const EnvParams& params, std::uint64_t replica_seed);

  // Fresh product-Poisson data on [center - 2*budget - 2, center + 2*budget + 2],
  // enough to make the next `budget` occupancy queries exact.
  void reset_block(std::int64_t center, std::int64_t budget, std::uint64_t block_index);

  int occupancy_at(std::int64_t x) const;
  // Advance the environment one step; `walker_next` is the walker's position
  // after its current jump (used only to schedule wake-ups, never for laws).
  void advance(std::int64_t walker_next);

 private:
  struct Far {
    std::int32_t pos;
    std::int32_t last;  // local time of `pos`
    std::uint8_t type;
  };
  struct Near {
    std::int32_t pos;
    std::uint8_t type;
  };

  void place(std::int32_t pos, std::uint8_t type, std::int64_t walker_pos);
  void wake_due(std::int64_t walker_pos);

  static constexpr int kNearRadius = 8;    // managed band half-width
  static constexpr int kWakeCap = 1024;    // max sleep length (table size bound)

  EnvParams params_;
  std::vector<PoissonTable> init_tables_;
  std::vector<BinomialFamily> act_tables_;  // Bin(dt, alpha_type)
  std::vector<BinomialFamily> dir_tables_;  // Bin(active, q_type)
  std::vector<double> thr_right_, thr_move_;  // per-type one-step thresholds
  Rng rng_;

  std::int64_t k_ = 0;  // local time within the block
  std::int64_t window_lo_ = 0, window_hi_ = 0;
  std::vector<std::vector<Far>> calendar_;  // ring, indexed by wake time mod size
  std::vector<Near> near_;
};

// Walker on a finite-range environment; resamples at every multiple of L.
Trajectory run_finite_range_walk(const FiniteRangeParams& params, const WalkParams& wp,
                                 std::int64_t n_steps, std::uint64_t seed);

// Sample mean of X_n / n over independent replicas, normal-approximation CI.
// Deterministic given the seed for any thread count.
SpeedEstimate estimate_speed(const FiniteRangeParams& params, const WalkParams& wp,
                             std::int64_t n_steps, std::int64_t replicas, std::uint64_t seed,
                             int threads = 1);

// --- many-to-one coupling (finite-range vs finer-range, sprinkled density) ---

struct ManyToOneResult {
  std::int64_t replicas = 0;
  std::int64_t failures_g1 = 0, failures_g2 = 0, failures_g3 = 0;  // replicas with any failure
  std::int64_t threshold_hits = 0;  // replicas with min gap <= -ceil(n/L-1)*f(L)
  double threshold = 0;             // -ceil(n/L-1)*f(L)
  double bound_rhs = 0;             // (ceil(n/L)-1)^2 * exp(-f(L)^{1/40})
  std::vector<double> min_gaps;     // per replica
  bool regime_ok = true;            // hypotheses of the coupling statement
  std::string regime_note;
};

// Couples X1 ~ (rho, range n) with X2 ~ (rho+eps, range L) through monotone
// segments, density checks (G1), a soft-local-time recoupling over
// floor(f(L)/2) steps (G2) and paired-particle domination until the next
// refresh (G3); on any failure the pair continues with independent
// randomness. Records min_s (X2_s - X1_s) per replica.
ManyToOneResult many_to_one_experiment(const ApcrwParams& base, const WalkParams& wp, double eps,
                                       std::int64_t L, std::int64_t n, double f_of_L,
                                       std::int64_t replicas, std::uint64_t seed,
                                       int threads = 1);

// --- studies ---

struct SpeedPoint {
  double rho = 0;
  std::int64_t L = 0;
  std::int64_t n = 0;
  SpeedEstimate estimate;
};

struct DyadicRow {
  SpeedPoint base, sprinkled;     // densities rho and rho+eps at this L
  double diff_from_prev = 0;      // |v(rho, L) - v(rho, L/2)|
  double diff_noise_floor = 0;    // 2 * stderr of that difference
};

struct DyadicStudy {
  std::vector<DyadicRow> rows;
  bool crossing_ok = false;   // v(rho, L_max) <= v(rho+eps, L_min) + 2 combined stderr
  double crossing_slack = 0;  // rhs - lhs of the crossing inequality
};

DyadicStudy dyadic_convergence_study(const ApcrwParams& base, const WalkParams& wp, double eps,
                                     const std::vector<std::int64_t>& L_list, std::int64_t n_steps,
                                     std::int64_t replicas, std::uint64_t seed, int threads = 1);

struct DeviationResult {
  std::int64_t n = 0, L = 0, replicas = 0;
  double delta = 0;
  double v_ref = 0;           // stands in for v^-/v^+
  std::int64_t hits = 0;      // |X_n/n - v_ref| >= delta
  double frequency = 0;
  double stderr_ = 0;
  double azuma_reference = 0;  // exp(-delta^2 n / (2^9 L))
};

DeviationResult deviation_experiment(const FiniteRangeParams& params, const WalkParams& wp,
                                     double delta, double v_ref, std::int64_t n,
                                     std::int64_t replicas, std::uint64_t seed, int threads = 1);

struct BallisticityResult {
  std::int64_t horizon = 0, replicas = 0;
  double v_star = 0;
  std::vector<std::int64_t> K_list;
  std::vector<std::int64_t> hits;   // per K: replicas with some X_n < n v_star - K
  std::vector<double> frequency;
};

// One pass per replica on the plain model; records min_n (X_n - v_star n) and
// evaluates every K from it.
BallisticityResult ballisticity_experiment(const EnvParams& env, const WalkParams& wp,
                                           double v_star, const std::vector<std::int64_t>& K_list,
                                           std::int64_t horizon, std::int64_t replicas,
                                           std::uint64_t seed, int threads = 1);

struct CoupledScanResult {
  std::vector<double> rhos;
  std::vector<SpeedEstimate> estimates;
  std::int64_t ordering_violations = 0;  // pathwise X^{rho_i} > X^{rho_{i+1}} events
};

// Common-random-number scan over densities: adjacent densities run on
// monotone-coupled environments with a shared uniform field, so the path
// ordering (and hence monotonicity of the means) is exact per realization.
CoupledScanResult coupled_speed_scan(const std::vector<double>& rhos, const ApcrwParams& shape,
                                     const WalkParams& wp, std::int64_t L, std::int64_t n_steps,
                                     std::int64_t replicas, std::uint64_t seed);

}  // namespace apcrw
