#include "apcrw/finite_range.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "apcrw/kernels_slt.hpp"
#include "apcrw/parallel.hpp"

namespace apcrw {

// ---------------------------------------------------------------- FastCloud

FastCloud::FastCloud(const EnvParams& params, std::uint64_t replica_seed)
    : params_(params), rng_(stream_key(replica_seed, Stream::env_step)) {
  params_.validate();
  for (const auto& c : params_.components) {
    init_tables_.emplace_back(c.rho);
    act_tables_.emplace_back(c.alpha, kWakeCap);
    dir_tables_.emplace_back(c.q, kWakeCap);
    thr_right_.push_back(c.alpha * c.q);
    thr_move_.push_back(c.alpha);
  }
  calendar_.resize(kWakeCap + 1);
}

void FastCloud::place(std::int32_t pos, std::uint8_t type, std::int64_t walker_pos) {
  std::int64_t d = std::llabs(static_cast<std::int64_t>(pos) - walker_pos);
  if (d <= kNearRadius) {
    near_.push_back({pos, type});
    return;
  }
  std::int64_t sleep = std::min<std::int64_t>(kWakeCap, std::max<std::int64_t>(1, (d - 1) / 2));
  auto& bucket = calendar_[static_cast<std::size_t>((k_ + sleep) % (kWakeCap + 1))];
  bucket.push_back({pos, static_cast<std::int32_t>(k_), type});
}

void FastCloud::reset_block(std::int64_t center, std::int64_t budget, std::uint64_t) {
  k_ = 0;
  near_.clear();
  for (auto& b : calendar_) b.clear();
  window_lo_ = center - 2 * budget - 2;
  window_hi_ = center + 2 * budget + 2;
  for (std::size_t ty = 0; ty < init_tables_.size(); ++ty) {
    for (std::int64_t x = window_lo_; x <= window_hi_; ++x) {
      int m = init_tables_[ty].sample(rng_);
      for (int i = 0; i < m; ++i)
        place(static_cast<std::int32_t>(x), static_cast<std::uint8_t>(ty), center);
    }
  }
}

int FastCloud::occupancy_at(std::int64_t x) const {
  int n = 0;
  for (const auto& p : near_)
    if (p.pos == x) ++n;
  return n;
}

void FastCloud::wake_due(std::int64_t walker_pos) {
  auto& bucket = calendar_[static_cast<std::size_t>(k_ % (kWakeCap + 1))];
  if (bucket.empty()) return;
  std::vector<Far> due;
  due.swap(bucket);
  for (const Far& f : due) {
    std::int64_t dt = k_ - f.last;
    int active = act_tables_[f.type].sample(static_cast<int>(dt), rng_);
    int right = dir_tables_[f.type].sample(active, rng_);
    std::int32_t pos = f.pos + static_cast<std::int32_t>(2 * right - active);
    place(pos, f.type, walker_pos);
  }
}

void FastCloud::advance(std::int64_t walker_next) {
  // near particles take their real one-step moves
  std::size_t keep = 0;
  for (std::size_t i = 0; i < near_.size(); ++i) {
    Near p = near_[i];
    double u = rng_.next_unit();
    if (u < thr_right_[p.type])
      ++p.pos;
    else if (u < thr_move_[p.type])
      --p.pos;
    std::int64_t d = std::llabs(static_cast<std::int64_t>(p.pos) - walker_next);
    if (d <= kNearRadius) {
      near_[keep++] = p;
    } else {
      std::int64_t sleep =
          std::min<std::int64_t>(kWakeCap, std::max<std::int64_t>(1, (d - 1) / 2));
      calendar_[static_cast<std::size_t>((k_ + 1 + sleep) % (kWakeCap + 1))].push_back(
          {p.pos, static_cast<std::int32_t>(k_ + 1), p.type});
    }
  }
  near_.resize(keep);
  ++k_;
  wake_due(walker_next);
}

// ------------------------------------------------------------ walk drivers

Trajectory run_finite_range_walk(const FiniteRangeParams& params, const WalkParams& wp,
                                 std::int64_t n_steps, std::uint64_t seed) {
  params.validate();
  FastCloud env(params.env, seed);
  UniformField field = UniformField::from_seed(seed);
  Trajectory traj;
  traj.start = {0, 0};
  traj.positions.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.positions.push_back(0);
  std::int64_t x = 0;
  std::uint64_t block = 0;
  for (std::int64_t k = 0; k < n_steps; ++k) {
    if (k % params.L == 0)
      env.reset_block(x, std::min<std::int64_t>(params.L, n_steps - k), block++);
    x += arrow(env.occupancy_at(x) > 0, field.at(x, k), wp);
    traj.positions.push_back(static_cast<std::int32_t>(x));
    env.advance(x);
  }
  return traj;
}

namespace {

// Final position only; avoids storing the path in bulk estimation loops.
std::int64_t final_position(const FiniteRangeParams& params, const WalkParams& wp,
                            std::int64_t n_steps, std::uint64_t seed,
                            std::int64_t* min_dip_num = nullptr, std::int64_t v_num = 0,
                            std::int64_t v_den = 1) {
  FastCloud env(params.env, seed);
  UniformField field = UniformField::from_seed(seed);
  std::int64_t x = 0;
  std::int64_t dip_best = 0;
  std::uint64_t block = 0;
  for (std::int64_t k = 0; k < n_steps; ++k) {
    if (k % params.L == 0)
      env.reset_block(x, std::min<std::int64_t>(params.L, n_steps - k), block++);
    x += arrow(env.occupancy_at(x) > 0, field.at(x, k), wp);
    env.advance(x);
    if (min_dip_num) {
      // track min of (x - v n) scaled by v_den to stay in integers
      std::int64_t dip = x * v_den - v_num * (k + 1);
      dip_best = std::min(dip_best, dip);
    }
  }
  if (min_dip_num) *min_dip_num = dip_best;
  return x;
}

std::uint64_t replica_seed(std::uint64_t master, std::uint64_t tag, std::int64_t replica) {
  return key3(master, tag, static_cast<std::uint64_t>(replica));
}

}  // namespace

SpeedEstimate estimate_speed(const FiniteRangeParams& params, const WalkParams& wp,
                             std::int64_t n_steps, std::int64_t replicas, std::uint64_t seed,
                             int threads) {
  params.validate();
  wp.validate();
  if (replicas < 2) throw std::invalid_argument("estimate_speed: replicas must be >= 2");
  std::vector<double> values(static_cast<std::size_t>(replicas));
  parallel_for(replicas, threads, [&](std::int64_t r) {
    std::int64_t xn = final_position(params, wp, n_steps, replica_seed(seed, 0xE5, r));
    values[static_cast<std::size_t>(r)] =
        static_cast<double>(xn) / static_cast<double>(n_steps);
  });
  RunningStats stats;
  for (double v : values) stats.add(v);
  return speed_from_stats(stats, n_steps);
}

// ----------------------------------------------------------------- studies

DyadicStudy dyadic_convergence_study(const ApcrwParams& base, const WalkParams& wp, double eps,
                                     const std::vector<std::int64_t>& L_list, std::int64_t n_steps,
                                     std::int64_t replicas, std::uint64_t seed, int threads) {
  if (L_list.empty()) throw std::invalid_argument("dyadic study: empty L list");
  for (std::size_t i = 1; i < L_list.size(); ++i)
    if (L_list[i] != 2 * L_list[i - 1])
      throw std::invalid_argument("dyadic study: L list must double at each step");

  ApcrwParams upper = base;
  upper.rho += eps;
  DyadicStudy study;
  for (std::size_t i = 0; i < L_list.size(); ++i) {
    DyadicRow row;
    FiniteRangeParams pb{EnvParams(base), L_list[i]};
    FiniteRangeParams pu{EnvParams(upper), L_list[i]};
    row.base = {base.rho, L_list[i], n_steps,
                estimate_speed(pb, wp, n_steps, replicas, key3(seed, 2 * i, 0), threads)};
    row.sprinkled = {upper.rho, L_list[i], n_steps,
                     estimate_speed(pu, wp, n_steps, replicas, key3(seed, 2 * i + 1, 0), threads)};
    if (i > 0) {
      const auto& prev = study.rows[i - 1].base.estimate;
      row.diff_from_prev = std::fabs(row.base.estimate.mean - prev.mean);
      row.diff_noise_floor =
          2.0 * std::sqrt(row.base.estimate.stderr_ * row.base.estimate.stderr_ +
                          prev.stderr_ * prev.stderr_);
    }
    study.rows.push_back(row);
  }
  const auto& lhs = study.rows.back().base.estimate;
  const auto& rhs = study.rows.front().sprinkled.estimate;
  double combined = std::sqrt(lhs.stderr_ * lhs.stderr_ + rhs.stderr_ * rhs.stderr_);
  study.crossing_slack = rhs.mean + 2.0 * combined - lhs.mean;
  study.crossing_ok = study.crossing_slack >= 0.0;
  return study;
}

DeviationResult deviation_experiment(const FiniteRangeParams& params, const WalkParams& wp,
                                     double delta, double v_ref, std::int64_t n,
                                     std::int64_t replicas, std::uint64_t seed, int threads) {
  params.validate();
  DeviationResult res;
  res.n = n;
  res.L = params.L;
  res.replicas = replicas;
  res.delta = delta;
  res.v_ref = v_ref;
  std::vector<char> hit(static_cast<std::size_t>(replicas), 0);
  parallel_for(replicas, threads, [&](std::int64_t r) {
    std::int64_t xn = final_position(params, wp, n, replica_seed(seed, 0xDE, r));
    double ratio = static_cast<double>(xn) / static_cast<double>(n);
    hit[static_cast<std::size_t>(r)] = std::fabs(ratio - v_ref) >= delta ? 1 : 0;
  });
  for (char h : hit) res.hits += h;
  res.frequency = static_cast<double>(res.hits) / static_cast<double>(replicas);
  res.stderr_ = std::sqrt(std::max(res.frequency * (1.0 - res.frequency), 1e-12) /
                          static_cast<double>(replicas));
  res.azuma_reference =
      std::exp(-delta * delta * static_cast<double>(n) / (512.0 * static_cast<double>(params.L)));
  return res;
}

BallisticityResult ballisticity_experiment(const EnvParams& env, const WalkParams& wp,
                                           double v_star, const std::vector<std::int64_t>& K_list,
                                           std::int64_t horizon, std::int64_t replicas,
                                           std::uint64_t seed, int threads) {
  BallisticityResult res;
  res.horizon = horizon;
  res.replicas = replicas;
  res.v_star = v_star;
  res.K_list = K_list;
  res.hits.assign(K_list.size(), 0);

  // rational approximation of v_star keeps the dip statistic in integers
  const std::int64_t den = 1 << 20;
  const std::int64_t num = static_cast<std::int64_t>(std::llround(v_star * den));
  FiniteRangeParams params{env, kPlainRange};
  std::vector<double> dips(static_cast<std::size_t>(replicas));
  parallel_for(replicas, threads, [&](std::int64_t r) {
    std::int64_t dip = 0;
    final_position(params, wp, horizon, replica_seed(seed, 0xBA, r), &dip, num, den);
    dips[static_cast<std::size_t>(r)] = static_cast<double>(dip) / static_cast<double>(den);
  });
  for (double dip : dips)
    for (std::size_t k = 0; k < K_list.size(); ++k)
      if (dip < -static_cast<double>(K_list[k])) ++res.hits[k];
  for (std::size_t k = 0; k < K_list.size(); ++k)
    res.frequency.push_back(static_cast<double>(res.hits[k]) / static_cast<double>(replicas));
  return res;
}

CoupledScanResult coupled_speed_scan(const std::vector<double>& rhos, const ApcrwParams& shape,
                                     const WalkParams& wp, std::int64_t L, std::int64_t n_steps,
                                     std::int64_t replicas, std::uint64_t seed) {
  if (rhos.size() < 2) throw std::invalid_argument("coupled_speed_scan: need >= 2 densities");
  for (std::size_t i = 1; i < rhos.size(); ++i)
    if (rhos[i] <= rhos[i - 1])
      throw std::invalid_argument("coupled_speed_scan: densities must increase");

  const std::size_t m = rhos.size();
  CoupledScanResult out;
  out.rhos = rhos;
  std::vector<RunningStats> stats(m);

  for (std::int64_t r = 0; r < replicas; ++r) {
    std::uint64_t rs = replica_seed(seed, 0xC5, r);
    Rng rng(stream_key(rs, Stream::env_step));
    UniformField field = UniformField::from_seed(rs);
    std::vector<std::int64_t> xs(m, 0);
    std::uint64_t layer_seed_base = stream_key(rs, Stream::env_init);

    std::int64_t k = 0;
    std::uint64_t block = 0;
    while (k < n_steps) {
      std::int64_t budget = std::min<std::int64_t>(L, n_steps - k);
      auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
      Window w(*mn - 2 * budget - 2, *mx + 2 * budget + 2);
      // layered Poisson fields: layer j adds density rhos[j] - rhos[j-1]
      std::vector<EnvState> layers;
      for (std::size_t j = 0; j < m; ++j) {
        double d = j == 0 ? rhos[0] : rhos[j] - rhos[j - 1];
        ApcrwParams lp = shape;
        lp.rho = d;
        layers.push_back(sample_initial(EnvParams(lp), w, key3(layer_seed_base, block, j)));
      }
      for (std::int64_t s = 0; s < budget; ++s) {
        // occupancy of density rhos[j] = any particle in layers 0..j
        std::int64_t prev = -1;
        bool occ_prefix = false;
        for (std::size_t j = 0; j < m; ++j) {
          if (xs[j] != prev) {
            occ_prefix = false;
            prev = xs[j];
          }
          // prefix occupancy must be recomputed per walker position
          bool occ = false;
          for (std::size_t l = 0; l <= j && !occ; ++l) occ = layers[l].occupied(xs[j]);
          double u = field.at(xs[j], k + s);
          std::int64_t x_new = xs[j] + arrow(occ, u, wp);
          if (j > 0 && x_new < xs[j - 1]) ++out.ordering_violations;
          xs[j] = x_new;
        }
        (void)occ_prefix;
        ApcrwParams lp = shape;
        for (std::size_t j = 0; j < m; ++j) {
          lp.rho = 1.0;  // step law ignores rho
          EnvParams ep(lp);
          step_counts_inplace(layers[j], ep, rng);
        }
      }
      k += budget;
      ++block;
    }
    for (std::size_t j = 0; j < m; ++j)
      stats[j].add(static_cast<double>(xs[j]) / static_cast<double>(n_steps));
  }
  for (std::size_t j = 0; j < m; ++j)
    out.estimates.push_back(speed_from_stats(stats[j], n_steps));
  return out;
}

// ------------------------------------------------------- many-to-one pairs

namespace {

// Reference-engine state for one environment in the coupling experiment.
struct MtoEnv {
  std::vector<std::int32_t> pos;     // INT32_MIN marks a particle gone
  std::vector<char> paired;
  std::vector<std::int32_t> counts;  // per site of the window
  Window window;

  static constexpr std::int32_t kGone = std::numeric_limits<std::int32_t>::min();

  void init(Window w) {
    window = w;
    pos.clear();
    paired.clear();
    counts.assign(static_cast<std::size_t>(w.size()), 0);
  }
  void add(std::int32_t x) {
    pos.push_back(x);
    paired.push_back(0);
    ++counts[static_cast<std::size_t>(x - window.lo)];
  }
  bool occupied(std::int64_t x) const {
    return window.contains(x) && counts[static_cast<std::size_t>(x - window.lo)] > 0;
  }
  std::int32_t count_at(std::int64_t x) const {
    return window.contains(x) ? counts[static_cast<std::size_t>(x - window.lo)] : 0;
  }
  void move(std::size_t i, int dir) {
    if (pos[i] == kGone || dir == 0) return;
    --counts[static_cast<std::size_t>(pos[i] - window.lo)];
    std::int32_t nx = pos[i] + dir;
    if (nx < window.lo || nx > window.hi) {
      pos[i] = kGone;
      return;
    }
    pos[i] = nx;
    ++counts[static_cast<std::size_t>(nx - window.lo)];
  }
  void set_pos(std::size_t i, std::int32_t nx) {
    if (pos[i] != kGone) --counts[static_cast<std::size_t>(pos[i] - window.lo)];
    if (nx < window.lo || nx > window.hi) {
      pos[i] = kGone;
      return;
    }
    pos[i] = nx;
    ++counts[static_cast<std::size_t>(nx - window.lo)];
  }
};

int step_dir(double u, double aq, double a) { return u < aq ? +1 : (u < a ? -1 : 0); }

// G1: empirical densities at the refresh, paper's interval family.
bool g1_holds(const MtoEnv& e1, const MtoEnv& e2, std::int64_t n, double rho, double eps,
              double f_of_L) {
  std::int64_t len_hi = static_cast<std::int64_t>(std::floor(std::pow(f_of_L, 0.25)));
  if (len_hi < 1) return false;
  std::int64_t len_lo = std::max<std::int64_t>(1, len_hi / 2);
  std::int64_t lo = std::max<std::int64_t>(-5 * n, e1.window.lo);
  std::int64_t hi = std::min<std::int64_t>(5 * n, e1.window.hi);
  for (std::int64_t len = len_lo; len <= len_hi; ++len) {
    std::int64_t s1 = 0, s2 = 0;
    for (std::int64_t x = lo; x < lo + len; ++x) {
      s1 += e1.count_at(x);
      s2 += e2.count_at(x);
    }
    for (std::int64_t x = lo;; ++x) {
      if (s1 > (rho + eps / 4.0) * static_cast<double>(len)) return false;
      if (s2 < (rho + 3.0 * eps / 4.0) * static_cast<double>(len)) return false;
      if (x + len > hi) break;
      s1 += e1.count_at(x + len) - e1.count_at(x);
      s2 += e2.count_at(x + len) - e2.count_at(x);
    }
  }
  return true;
}

struct MtoReplicaOut {
  double min_gap = 0;
  bool g1_fail = false, g2_fail = false, g3_fail = false;
};

MtoReplicaOut many_to_one_replica(const ApcrwParams& base, const WalkParams& wp, double eps,
                                  std::int64_t L, std::int64_t n, double f_of_L,
                                  std::uint64_t rs) {
  const double aq = base.alpha * base.q, a = base.alpha;
  const double rho = base.rho;
  Window w(-5 * n - 4, 5 * n + 4);
  Rng rng(stream_key(rs, Stream::env_step));
  PoissonTable pois_lo(rho), pois_hi(rho + eps), pois_eps(eps);

  MtoEnv e1, e2;
  e1.init(w);
  e2.init(w);
  // coupled start: e2 = e1 + independent eps-layer, paired by index
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::int64_t x = w.lo; x <= w.hi; ++x) {
    int m = pois_lo.sample(rng);
    for (int i = 0; i < m; ++i) {
      e1.add(static_cast<std::int32_t>(x));
      e2.add(static_cast<std::int32_t>(x));
      pairs.push_back({static_cast<std::int32_t>(e1.pos.size() - 1),
                       static_cast<std::int32_t>(e2.pos.size() - 1)});
      e1.paired.back() = e2.paired.back() = 1;
    }
    int extra = pois_eps.sample(rng);
    for (int i = 0; i < extra; ++i) e2.add(static_cast<std::int32_t>(x));
  }

  const std::uint64_t walk_shared = stream_key(rs, Stream::walk_field, 0);
  const std::uint64_t walk_ind1 = stream_key(rs, Stream::walk_field, 1);
  const std::uint64_t walk_ind2 = stream_key(rs, Stream::walk_field, 2);

  std::int64_t x1 = 0, x2 = 0;
  bool independent = false;  // after any G failure
  MtoReplicaOut out;

  // recoupling bookkeeping, active between a successful G2 and the next refresh
  std::int64_t shift_ref_x1 = 0, shift_ref_x2 = 0, shift_t2 = 0;
  bool g3_watch = false;

  // pending bridge phase
  const std::int64_t t2 = static_cast<std::int64_t>(std::floor(f_of_L / 2.0));
  struct BridgeP {
    std::int32_t env;     // 1 or 2
    std::int32_t idx;     // particle index
    std::int32_t target;  // absolute endpoint
  };
  std::vector<BridgeP> bridging;
  std::int64_t bridge_end = -1;
  std::unique_ptr<BridgeSampler> bridge_sampler;
  if (t2 >= 1) bridge_sampler = std::make_unique<BridgeSampler>(t2, base);

  auto step_envs_plain = [&](bool with_pairs) {
    if (with_pairs) {
      for (auto [i1, i2] : pairs) {
        int d = step_dir(rng.next_unit(), aq, a);
        e1.move(static_cast<std::size_t>(i1), d);
        e2.move(static_cast<std::size_t>(i2), d);
      }
      for (std::size_t i = 0; i < e1.pos.size(); ++i)
        if (!e1.paired[i]) e1.move(i, step_dir(rng.next_unit(), aq, a));
      for (std::size_t i = 0; i < e2.pos.size(); ++i)
        if (!e2.paired[i]) e2.move(i, step_dir(rng.next_unit(), aq, a));
    } else {
      for (std::size_t i = 0; i < e1.pos.size(); ++i)
        e1.move(i, step_dir(rng.next_unit(), aq, a));
      for (std::size_t i = 0; i < e2.pos.size(); ++i)
        e2.move(i, step_dir(rng.next_unit(), aq, a));
    }
  };

  // injective site-by-site pairing over the covering interval of the shifted
  // frames; paired particles then share step draws (the no-drift coupling)
  auto build_pairs = [&] {
    pairs.clear();
    for (auto& c : e1.paired) c = 0;
    for (auto& c : e2.paired) c = 0;
    const std::int64_t span = 3 * L;
    std::vector<std::vector<std::int32_t>> at1(static_cast<std::size_t>(2 * span + 1)),
        at2(static_cast<std::size_t>(2 * span + 1));
    for (std::size_t i = 0; i < e1.pos.size(); ++i) {
      if (e1.pos[i] == MtoEnv::kGone) continue;
      std::int64_t z = e1.pos[i] - shift_ref_x1;
      if (z >= -span && z <= span)
        at1[static_cast<std::size_t>(z + span)].push_back(static_cast<std::int32_t>(i));
    }
    for (std::size_t i = 0; i < e2.pos.size(); ++i) {
      if (e2.pos[i] == MtoEnv::kGone) continue;
      std::int64_t z = e2.pos[i] - (shift_ref_x2 - 2 * shift_t2);
      if (z >= -span && z <= span)
        at2[static_cast<std::size_t>(z + span)].push_back(static_cast<std::int32_t>(i));
    }
    for (std::size_t s = 0; s < at1.size(); ++s) {
      std::size_t k = std::min(at1[s].size(), at2[s].size());
      for (std::size_t i = 0; i < k; ++i) {
        pairs.push_back({at1[s][i], at2[s][i]});
        e1.paired[static_cast<std::size_t>(at1[s][i])] = 1;
        e2.paired[static_cast<std::size_t>(at2[s][i])] = 1;
      }
    }
  };

  auto shifted_domination = [&](std::int64_t half_span) {
    for (std::int64_t x = -half_span; x <= half_span; ++x)
      if (e1.count_at(x + shift_ref_x1) > e2.count_at(x + shift_ref_x2 - 2 * shift_t2))
        return false;
    return true;
  };

  for (std::int64_t t = 0; t < n; ++t) {
    if (t > 0 && t % L == 0) {
      // refresh of the L-range environment
      e2.init(w);
      for (std::int64_t x = w.lo; x <= w.hi; ++x) {
        int m = pois_hi.sample(rng);
        for (int i = 0; i < m; ++i) e2.add(static_cast<std::int32_t>(x));
      }
      pairs.clear();
      for (auto& c : e1.paired) c = 0;
      g3_watch = false;
      bridging.clear();
      bridge_end = -1;

      if (!independent) {
        if (!g1_holds(e1, e2, n, rho, eps, f_of_L)) {
          out.g1_fail = true;
          independent = true;
        } else if (t2 == 0) {
          // zero-length recoupling: G2 compares the configurations directly
          shift_ref_x1 = x1;
          shift_ref_x2 = x2;
          shift_t2 = 0;
          if (!shifted_domination(3 * L)) {
            out.g2_fail = true;
            independent = true;
          } else {
            g3_watch = true;
            build_pairs();
          }
        } else {
          // soft-local-time recoupling over t2 steps, shifted frames
          const std::int64_t Hc = 7 * L;
          const std::int64_t cA = x1, cB = x2 - 2 * t2;
          std::vector<std::int32_t> startsA, startsB, idxA, idxB;
          for (std::size_t i = 0; i < e1.pos.size(); ++i) {
            if (e1.pos[i] == MtoEnv::kGone || std::llabs(e1.pos[i] - cA) > Hc) continue;
            startsA.push_back(static_cast<std::int32_t>(e1.pos[i] - cA));
            idxA.push_back(static_cast<std::int32_t>(i));
          }
          for (std::size_t i = 0; i < e2.pos.size(); ++i) {
            if (e2.pos[i] == MtoEnv::kGone || std::llabs(e2.pos[i] - cB) > Hc) continue;
            startsB.push_back(static_cast<std::int32_t>(e2.pos[i] - cB));
            idxB.push_back(static_cast<std::int32_t>(i));
          }
          if (startsA.empty() || startsB.empty()) {
            out.g2_fail = true;
            independent = true;
          } else {
            SltPair pair = slt_shared_pair(startsA, startsB, t2, base,
                                           key3(rs, 0x517, static_cast<std::uint64_t>(t)));
            for (std::size_t i = 0; i < idxA.size(); ++i)
              bridging.push_back(
                  {1, idxA[i], static_cast<std::int32_t>(pair.lo.endpoints[i] + cA)});
            for (std::size_t i = 0; i < idxB.size(); ++i)
              bridging.push_back(
                  {2, idxB[i], static_cast<std::int32_t>(pair.hi.endpoints[i] + cB)});
            bridge_end = t + t2;
            shift_ref_x1 = x1;
            shift_ref_x2 = x2;
            shift_t2 = t2;
          }
        }
      }
    } else if (!independent && bridge_end == t) {
      // close of the bridge phase: check G2 and re-pair
      bridging.clear();
      bridge_end = -1;
      if (!shifted_domination(3 * L)) {
        out.g2_fail = true;
        independent = true;
      } else {
        g3_watch = true;
        build_pairs();
      }
    }

    // walkers read occupancy at time t, then everything advances
    {
      double u1, u2;
      if (independent) {
        u1 = unit_at(walk_ind1, t, 0);
        u2 = unit_at(walk_ind2, t, 0);
      } else {
        u1 = u2 = unit_at(walk_shared, t, 0);
      }
      x1 += arrow(e1.occupied(x1), u1, wp);
      x2 += arrow(e2.occupied(x2), u2, wp);
      out.min_gap = std::min(out.min_gap, static_cast<double>(x2 - x1));
    }

    if (!bridging.empty()) {
      // conditioned steps toward the soft-local-time endpoints
      std::int64_t remaining = bridge_end - t;
      std::vector<char> in_bridge1(e1.pos.size(), 0), in_bridge2(e2.pos.size(), 0);
      for (const auto& b : bridging) {
        MtoEnv& e = b.env == 1 ? e1 : e2;
        (b.env == 1 ? in_bridge1 : in_bridge2)[static_cast<std::size_t>(b.idx)] = 1;
        std::size_t i = static_cast<std::size_t>(b.idx);
        if (e.pos[i] == MtoEnv::kGone) continue;
        int d = bridge_sampler->step(remaining, b.target - e.pos[i], rng.next_unit());
        e.move(i, d);
      }
      for (std::size_t i = 0; i < e1.pos.size(); ++i)
        if (!in_bridge1[i]) e1.move(i, step_dir(rng.next_unit(), aq, a));
      for (std::size_t i = 0; i < e2.pos.size(); ++i)
        if (!in_bridge2[i]) e2.move(i, step_dir(rng.next_unit(), aq, a));
    } else {
      step_envs_plain(!pairs.empty());
    }

    if (g3_watch && !independent && !shifted_domination(L)) {
      out.g3_fail = true;
      independent = true;
      pairs.clear();
      g3_watch = false;
    }
  }
  return out;
}

}  // namespace

ManyToOneResult many_to_one_experiment(const ApcrwParams& base, const WalkParams& wp, double eps,
                                       std::int64_t L, std::int64_t n, double f_of_L,
                                       std::int64_t replicas, std::uint64_t seed, int threads) {
  base.validate();
  wp.validate();
  if (L < 1 || n < L) throw std::invalid_argument("many_to_one: need 1 <= L <= n");
  if (!(f_of_L >= 1.0)) throw std::invalid_argument("many_to_one: f(L) must be >= 1");

  ManyToOneResult res;
  res.replicas = replicas;
  const double k_ratio = std::ceil(static_cast<double>(n) / static_cast<double>(L));
  res.threshold = -std::ceil(static_cast<double>(n) / L - 1.0) * f_of_L;
  res.bound_rhs = (k_ratio - 1.0) * (k_ratio - 1.0) * std::exp(-std::pow(f_of_L, 1.0 / 40.0));

  std::ostringstream note;
  const double eps_min = std::pow(f_of_L, -1.0 / 40.0);
  if (eps < eps_min) {
    res.regime_ok = false;
    note << "eps=" << eps << " < f(L)^{-1/40}=" << eps_min << "; ";
  }
  if (base.rho <= eps_min) {
    res.regime_ok = false;
    note << "rho <= f(L)^{-1/40}; ";
  }
  if (f_of_L > std::pow(static_cast<double>(L), 0.1) ||
      f_of_L < std::pow(std::log(static_cast<double>(L)), 90.0)) {
    res.regime_ok = false;
    note << "f(L) outside [(log L)^90, L^{1/10}] (interval is empty at this scale); ";
  }
  res.regime_note = note.str();

  std::vector<MtoReplicaOut> outs(static_cast<std::size_t>(replicas));
  parallel_for(replicas, threads, [&](std::int64_t r) {
    outs[static_cast<std::size_t>(r)] =
        many_to_one_replica(base, wp, eps, L, n, f_of_L, replica_seed(seed, 0x317, r));
  });
  for (const auto& o : outs) {
    res.min_gaps.push_back(o.min_gap);
    if (o.g1_fail) ++res.failures_g1;
    if (o.g2_fail) ++res.failures_g2;
    if (o.g3_fail) ++res.failures_g3;
    if (o.min_gap <= res.threshold) ++res.threshold_hits;
  }
  return res;
}

}  // namespace apcrw
