#include "apcrw/renewal.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "apcrw/parallel.hpp"
#include "apcrw/stats.hpp"
#include "apcrw/walker.hpp"

namespace apcrw {

std::vector<std::int64_t> record_times(const Trajectory& traj, double v_bar) {
  if (!(v_bar > -1.0 && v_bar < 1.0))
    throw std::invalid_argument("record_times: v_bar must lie in (-1, 1)");
  std::vector<std::int64_t> records;
  std::int64_t k_next = 1;
  for (std::int64_t n = 0; n <= traj.steps(); ++n) {
    double ridge = static_cast<double>(traj.at(n)) - v_bar * static_cast<double>(n);
    while (ridge >= (1.0 - v_bar) * static_cast<double>(k_next)) {
      records.push_back(n);
      ++k_next;
    }
  }
  return records;
}

std::int64_t influence_field(const ParticleCloud& cloud, std::int64_t x, std::int64_t n,
                             double v_bar, std::int64_t t_max) {
  if (n > cloud.horizon) throw std::invalid_argument("influence_field: n beyond cloud horizon");
  t_max = std::min(t_max, cloud.horizon);
  const double v = v_bar;
  std::int64_t h = 0;
  for (const auto& p : cloud.particles) {
    // down-cone entry: some s <= n with y_s - v s < x - v n
    double m = std::numeric_limits<double>::infinity();
    for (std::int64_t s = 0; s <= n; ++s)
      m = std::min(m, static_cast<double>(p.path[static_cast<std::size_t>(s)]) - v * s);
    if (!(m < static_cast<double>(x) - v * static_cast<double>(n))) continue;
    // largest gap l the particle can still reach: needs t >= n + l and
    // y_t - v t >= (x - v n) + l (1 - v)
    for (std::int64_t t = n; t <= t_max; ++t) {
      double lift = static_cast<double>(p.path[static_cast<std::size_t>(t)]) - v * t -
                    (static_cast<double>(x) - v * static_cast<double>(n));
      double cap = std::min(static_cast<double>(t - n), lift / (1.0 - v));
      if (cap >= 0) h = std::max(h, static_cast<std::int64_t>(std::floor(cap)) + 1);
    }
  }
  return h;
}

namespace {

struct CondConsts {
  double v = 0;
  std::int64_t t2 = 0;          // consecutive rights T''
  std::int64_t t1 = 0;          // staying time T'
  std::int64_t box = 0;         // box side S
  std::int64_t dprime = 0;      // locality offset floor((1-v) T')
  std::int64_t stay_limit = 0;  // parallelogram height ceil(beta T')
  std::int64_t delay = 0;       // analysis needs the path up to n + delay
  std::int64_t jmax = 0;        // box time offsets 0..jmax (= t2 + box)

  static CondConsts make(const ConeParams& cone, const WalkParams& wp,
                         const RenewalKnobs& knobs) {
    CondConsts c;
    c.v = cone.v_bar;
    c.t2 = knobs.t_consec(wp);
    c.t1 = knobs.t_stay(wp);
    c.box = knobs.box_side(wp);
    c.dprime = static_cast<std::int64_t>(std::floor((1.0 - c.v) * static_cast<double>(c.t1)));
    c.stay_limit = static_cast<std::int64_t>(std::ceil(cone.beta() * static_cast<double>(c.t1)));
    c.jmax = c.t2 + c.box;
    c.delay = c.t2 + std::max(c.box, c.stay_limit) + c.t1 + 4;
    return c;
  }
};

// Per-particle summaries relative to an analysis time n:
//   pm[j] : min_{s <= n+j} (y_s - v s), j in [0, jmax]
//   wm[i] : max_{s in [n+i, n+i+(t1-t2)]} (y_s - v s), i in [0, jmax + t2]
//   um    : max_{s in [n+t2, n+t2+t1]} (y_s - v s)
//   ys[j] : y_{n+j}, j in [0, t2]
struct LocalParticle {
  std::vector<double> pm, wm;
  double um = -std::numeric_limits<double>::infinity();
  std::vector<std::int32_t> ys;
};

bool point_influence_ok(const CondConsts& c, const std::vector<LocalParticle>& ps,
                        std::int64_t n, std::int64_t xp, std::int64_t np) {
  if (c.t1 < c.t2) return true;  // empty lookahead window, nothing can block
  const std::int64_t j = np - n;
  const double line = static_cast<double>(xp) - c.v * static_cast<double>(np);
  const double lifted = line + static_cast<double>(c.t2) * (1.0 - c.v);
  for (const auto& p : ps) {
    double m = p.pm[static_cast<std::size_t>(j)];
    if (m < line && m >= line - static_cast<double>(c.dprime) &&
        p.wm[static_cast<std::size_t>(j + c.t2)] >= lifted)
      return false;
  }
  return true;
}

bool intermediates_ok(const CondConsts& c, const std::vector<LocalParticle>& ps, std::int64_t x,
                      std::int64_t n) {
  const double base = static_cast<double>(x) - c.v * static_cast<double>(n);
  const double strip_hi = base + static_cast<double>(c.t2) * (1.0 - c.v);
  const double new_cone = static_cast<double>(x + c.t2) - c.v * static_cast<double>(n + c.t2);
  for (const auto& p : ps) {
    if (!(p.um >= new_cone)) continue;
    for (std::int64_t j = 0; j <= c.t2; ++j) {
      double adj = static_cast<double>(p.ys[static_cast<std::size_t>(j)]) -
                   c.v * static_cast<double>(n + j);
      if (adj >= base && adj < strip_hi) return false;
    }
  }
  return true;
}

bool consecutive_rights(const Trajectory& traj, std::int64_t n, std::int64_t t2) {
  for (std::int64_t j = 0; j < t2; ++j)
    if (traj.at(n + j + 1) != traj.at(n + j) + 1) return false;
  return true;
}

// right-side parallelogram exit: from tau = n + t2, stay weakly above the
// cone line and gain (1-v) t1 of ridge before stay_limit steps elapse
bool stays_in_cone(const CondConsts& c, const Trajectory& traj, std::int64_t n) {
  const std::int64_t tau = n + c.t2;
  const double x_tau = static_cast<double>(traj.at(tau));
  for (std::int64_t s = 1; s <= c.stay_limit; ++s) {
    double ridge = static_cast<double>(traj.at(tau + s)) - x_tau - c.v * static_cast<double>(s);
    if (ridge < 0) return false;
    if (ridge >= (1.0 - c.v) * static_cast<double>(c.t1)) return true;
  }
  return false;
}

bool box_ok(const CondConsts& c, const std::vector<LocalParticle>& ps, const Trajectory& traj,
            std::int64_t n) {
  const std::int64_t tau = n + c.t2;
  const std::int64_t x_tau = traj.at(tau);
  for (std::int64_t np = tau; np <= tau + c.box; ++np)
    for (std::int64_t xp = x_tau - c.box; xp <= x_tau + c.box; ++xp)
      if (!point_influence_ok(c, ps, n, xp, np)) return false;
  return true;
}

// Selects particles that could possibly block any check at (x, n): either the
// historical minimum sits in the relevant band below the cone lines, or the
// particle is close enough to dip into it / cross the strip during the
// analysis window.
template <class PosFn, class PminFn>
std::vector<LocalParticle> build_local_view(const CondConsts& c, std::int64_t n_particles,
                                            std::int64_t x, std::int64_t n, PosFn&& pos,
                                            PminFn&& pmin_at_n) {
  const double vn = c.v * static_cast<double>(n);
  const double band_top = static_cast<double>(x + c.t2 + c.box) - vn + 1.0;
  const double band_bottom = static_cast<double>(x - c.box - c.t2 - c.dprime) - vn -
                             (1.0 + c.v) * static_cast<double>(c.jmax) - 1.0;
  const std::int64_t reach =
      c.box + c.t2 + c.dprime + 2 * (c.jmax + std::max<std::int64_t>(c.t1, 1)) + 4;
  const std::int64_t window = c.delay;

  std::vector<LocalParticle> view;
  for (std::int64_t p = 0; p < n_particles; ++p) {
    double m0 = pmin_at_n(p);
    std::int32_t y0 = pos(p, n);
    bool band = m0 < band_top && m0 >= band_bottom;
    bool near = std::llabs(static_cast<std::int64_t>(y0) - x) <= reach;
    if (!band && !near) continue;

    LocalParticle lp;
    lp.pm.resize(static_cast<std::size_t>(c.jmax) + 1);
    double run = m0;
    for (std::int64_t j = 0; j <= c.jmax; ++j) {
      run = std::min(run, static_cast<double>(pos(p, n + j)) - c.v * static_cast<double>(n + j));
      lp.pm[static_cast<std::size_t>(j)] = run;
    }
    const std::int64_t imax = c.jmax + c.t2;
    const std::int64_t wlen = std::max<std::int64_t>(c.t1 - c.t2 + 1, 0);
    lp.wm.assign(static_cast<std::size_t>(imax) + 1,
                 -std::numeric_limits<double>::infinity());
    if (wlen > 0) {
      // sliding-window maxima of (y - v s) over windows of length wlen
      std::deque<std::int64_t> dq;  // offsets with decreasing values
      auto val = [&](std::int64_t off) {
        return static_cast<double>(pos(p, n + off)) - c.v * static_cast<double>(n + off);
      };
      for (std::int64_t off = 0; off <= std::min(imax + wlen - 1, window); ++off) {
        while (!dq.empty() && val(dq.back()) <= val(off)) dq.pop_back();
        dq.push_back(off);
        std::int64_t i = off - wlen + 1;
        if (i >= 0) {
          while (dq.front() < i) dq.pop_front();
          if (i <= imax) lp.wm[static_cast<std::size_t>(i)] = val(dq.front());
        }
      }
      // windows truncated by the ring end keep their partial maxima
      for (std::int64_t i = std::max<std::int64_t>(window - wlen + 2, 0); i <= imax; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::int64_t off = i; off <= std::min(i + wlen - 1, window); ++off)
          m = std::max(m, val(off));
        lp.wm[static_cast<std::size_t>(i)] = m;
      }
    }
    for (std::int64_t s = c.t2; s <= std::min(c.t2 + c.t1, window); ++s)
      lp.um = std::max(lp.um, static_cast<double>(pos(p, n + s)) -
                                  c.v * static_cast<double>(n + s));
    lp.ys.resize(static_cast<std::size_t>(c.t2) + 1);
    for (std::int64_t j = 0; j <= c.t2; ++j)
      lp.ys[static_cast<std::size_t>(j)] = pos(p, n + j);
    view.push_back(std::move(lp));
  }
  return view;
}

}  // namespace

GoodRecordScan scan_good_records(const Trajectory& traj, const ParticleCloud& cloud,
                                 const ConeParams& cone, const WalkParams& wp,
                                 const RenewalKnobs& knobs) {
  const CondConsts c = CondConsts::make(cone, wp, knobs);
  GoodRecordScan out;
  out.records = record_times(traj, cone.v_bar);

  const std::int64_t horizon = std::min<std::int64_t>(traj.steps(), cloud.horizon);
  const std::int64_t n_particles = static_cast<std::int64_t>(cloud.particles.size());

  // prefix minima of the drift-adjusted paths
  std::vector<std::vector<double>> pmin(static_cast<std::size_t>(n_particles));
  for (std::int64_t p = 0; p < n_particles; ++p) {
    const auto& path = cloud.particles[static_cast<std::size_t>(p)].path;
    auto& row = pmin[static_cast<std::size_t>(p)];
    row.resize(path.size());
    double run = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < path.size(); ++s) {
      run = std::min(run, static_cast<double>(path[s]) - c.v * static_cast<double>(s));
      row[s] = run;
    }
  }
  auto pos = [&](std::int64_t p, std::int64_t t) {
    return cloud.particles[static_cast<std::size_t>(p)].path[static_cast<std::size_t>(t)];
  };

  std::int64_t next_allowed = 0;
  for (std::size_t k = 0; k < out.records.size(); ++k) {
    const std::int64_t n = out.records[k];
    if (n + c.delay > horizon) break;
    const std::int64_t x = traj.at(n);
    if (!consecutive_rights(traj, n, c.t2)) continue;
    if (!stays_in_cone(c, traj, n)) continue;
    auto view = build_local_view(
        c, n_particles, x, n, pos,
        [&](std::int64_t p) { return pmin[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)]; });
    if (!point_influence_ok(c, view, n, x, n)) continue;
    if (!intermediates_ok(c, view, x, n)) continue;
    out.good.push_back(k);
    if (n >= next_allowed && box_ok(c, view, traj, n)) {
      out.regens.push_back(n + c.t2);
      next_allowed = n + c.t2 + c.t1;
    }
  }
  return out;
}

std::vector<std::size_t> detect_good_records(const Trajectory& traj, const ParticleCloud& cloud,
                                             const ConeParams& cone, const WalkParams& wp,
                                             const RenewalKnobs& knobs) {
  return scan_good_records(traj, cloud, cone, wp, knobs).good;
}

std::vector<std::int64_t> regeneration_times(const Trajectory& traj, const ParticleCloud& cloud,
                                             const ConeParams& cone, const WalkParams& wp,
                                             const RenewalKnobs& knobs) {
  return scan_good_records(traj, cloud, cone, wp, knobs).regens;
}

SpeedEstimate renewal_speed(const std::vector<double>& dx, const std::vector<double>& dt) {
  SpeedEstimate est;
  est.replicas = static_cast<std::int64_t>(dx.size());
  if (dx.size() != dt.size() || dx.size() < 2) {
    est.valid = false;
    return est;
  }
  double sx = 0, st = 0;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    sx += dx[i];
    st += dt[i];
  }
  est.mean = sx / st;
  double ss = 0;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    double e = dx[i] - est.mean * dt[i];
    ss += e * e;
  }
  double nn = static_cast<double>(dx.size());
  est.stderr_ = std::sqrt(ss * nn / (nn - 1.0)) / st;
  est.ci_lo = est.mean - 1.96 * est.stderr_;
  est.ci_hi = est.mean + 1.96 * est.stderr_;
  return est;
}

// ------------------------------------------------------- streaming backend

namespace {

struct TrajOut {
  std::vector<std::int64_t> regens;
  std::vector<std::int32_t> regen_x;
  std::int64_t n_records = 0, n_good = 0;
  double final_ratio = 0;
};

TrajOut stream_trajectory(const EnvParams& env, const WalkParams& wp, const ConeParams& cone,
                          const RenewalKnobs& knobs, std::int64_t horizon, std::uint64_t rs) {
  const CondConsts c = CondConsts::make(cone, wp, RenewalKnobs(knobs));
  const std::int64_t R = c.delay + 1;  // ring slices for times [u - delay, u]

  Window w(-2 * horizon - 4, 2 * horizon + 4);
  Rng rng(stream_key(rs, Stream::env_step));
  UniformField field = UniformField::from_seed(rs);

  // particles, single flat layout; type per particle
  std::vector<std::int32_t> pos;
  std::vector<std::uint8_t> type;
  for (int ty = 0; ty < env.n_types(); ++ty) {
    PoissonTable table(env.components[static_cast<std::size_t>(ty)].rho);
    Rng init(stream_key(rs, Stream::env_init, static_cast<std::uint64_t>(ty)));
    for (std::int64_t xx = w.lo; xx <= w.hi; ++xx) {
      int m = table.sample(init);
      for (int i = 0; i < m; ++i) {
        pos.push_back(static_cast<std::int32_t>(xx));
        type.push_back(static_cast<std::uint8_t>(ty));
      }
    }
  }
  const std::int64_t np = static_cast<std::int64_t>(pos.size());
  std::vector<double> thr_right(env.components.size()), thr_move(env.components.size());
  for (std::size_t ty = 0; ty < env.components.size(); ++ty) {
    thr_right[ty] = env.components[ty].alpha * env.components[ty].q;
    thr_move[ty] = env.components[ty].alpha;
  }

  std::vector<std::int32_t> counts(static_cast<std::size_t>(w.size()), 0);
  for (auto x : pos) ++counts[static_cast<std::size_t>(x - w.lo)];

  // particle-major ring of positions over the last R times
  std::vector<std::int32_t> ring(static_cast<std::size_t>(np * R));
  auto ring_at = [&](std::int64_t p, std::int64_t t) -> std::int32_t& {
    return ring[static_cast<std::size_t>(p * R + (t % R))];
  };
  for (std::int64_t p = 0; p < np; ++p) ring_at(p, 0) = pos[static_cast<std::size_t>(p)];
  std::vector<double> m_del(static_cast<std::size_t>(np),
                            std::numeric_limits<double>::infinity());

  Trajectory traj;
  traj.start = {0, 0};
  traj.positions.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.positions.push_back(0);
  std::int64_t x_walk = 0;

  TrajOut out;
  std::int64_t k_next = 1;       // next record index
  std::int64_t next_allowed = 0;
  std::vector<std::int64_t> pending_records;

  auto pos_fn = [&](std::int64_t p, std::int64_t t) { return ring_at(p, t); };

  auto analyze_time = [&](std::int64_t n) {
    // merge slice n into the delayed prefix minima
    for (std::int64_t p = 0; p < np; ++p) {
      double adj = static_cast<double>(ring_at(p, n)) - c.v * static_cast<double>(n);
      if (adj < m_del[static_cast<std::size_t>(p)]) m_del[static_cast<std::size_t>(p)] = adj;
    }
    if (pending_records.empty() || pending_records.front() != n) return;
    pending_records.erase(pending_records.begin());

    const std::int64_t x = traj.at(n);
    if (!consecutive_rights(traj, n, c.t2)) return;
    if (!stays_in_cone(c, traj, n)) return;
    auto view = build_local_view(c, np, x, n, pos_fn,
                                 [&](std::int64_t p) { return m_del[static_cast<std::size_t>(p)]; });
    if (!point_influence_ok(c, view, n, x, n)) return;
    if (!intermediates_ok(c, view, x, n)) return;
    ++out.n_good;
    if (n >= next_allowed && box_ok(c, view, traj, n)) {
      out.regens.push_back(n + c.t2);
      out.regen_x.push_back(static_cast<std::int32_t>(traj.at(n + c.t2)));
      next_allowed = n + c.t2 + c.t1;
    }
  };

  for (std::int64_t u = 0; u < horizon; ++u) {
    // records fire from the walker path alone
    double ridge = static_cast<double>(x_walk) - c.v * static_cast<double>(u);
    while (ridge >= (1.0 - c.v) * static_cast<double>(k_next)) {
      ++out.n_records;
      if (u + c.delay <= horizon) pending_records.push_back(u);
      ++k_next;
    }

    // walker step, then environment step
    bool occ = w.contains(x_walk) && counts[static_cast<std::size_t>(x_walk - w.lo)] > 0;
    x_walk += arrow(occ, field.at(x_walk, u), wp);
    traj.positions.push_back(static_cast<std::int32_t>(x_walk));

    for (std::int64_t p = 0; p < np; ++p) {
      std::int32_t& y = pos[static_cast<std::size_t>(p)];
      double uu = rng.next_unit();
      std::uint8_t ty = type[static_cast<std::size_t>(p)];
      std::int32_t ny = y;
      if (uu < thr_right[ty])
        ++ny;
      else if (uu < thr_move[ty])
        --ny;
      if (ny != y) {
        --counts[static_cast<std::size_t>(y - w.lo)];
        if (ny >= w.lo && ny <= w.hi) ++counts[static_cast<std::size_t>(ny - w.lo)];
        y = std::clamp<std::int32_t>(ny, static_cast<std::int32_t>(w.lo),
                                     static_cast<std::int32_t>(w.hi));
      }
      ring_at(p, u + 1) = y;
    }

    // delayed analysis once the ring covers [n, n + delay]
    if (u + 1 >= c.delay) analyze_time(u + 1 - c.delay);
  }
  out.final_ratio = static_cast<double>(x_walk) / static_cast<double>(horizon);
  return out;
}

}  // namespace

RenewalReport run_renewal_experiment(const EnvParams& env, const WalkParams& wp,
                                     const ConeParams& cone, const RenewalKnobs& knobs,
                                     std::int64_t horizon, std::int64_t trajectories,
                                     std::uint64_t seed, int threads) {
  env.validate();
  wp.validate();
  cone.validate(env.mean_drift());

  RenewalReport rep;
  rep.trajectories = trajectories;
  rep.horizon = horizon;
  rep.t_consec = knobs.t_consec(wp);
  rep.t_stay = knobs.t_stay(wp);
  rep.box = knobs.box_side(wp);

  std::vector<TrajOut> outs(static_cast<std::size_t>(trajectories));
  parallel_for(trajectories, threads, [&](std::int64_t i) {
    outs[static_cast<std::size_t>(i)] = stream_trajectory(
        env, wp, cone, knobs, horizon, key3(seed, 0x2E7, static_cast<std::uint64_t>(i)));
  });

  RunningStats direct;
  for (const auto& o : outs) {
    rep.n_records += o.n_records;
    rep.n_good += o.n_good;
    rep.n_regens += static_cast<std::int64_t>(o.regens.size());
    direct.add(o.final_ratio);
    for (std::size_t i = 1; i < o.regens.size(); ++i) {
      rep.dt.push_back(static_cast<double>(o.regens[i] - o.regens[i - 1]));
      rep.dx.push_back(static_cast<double>(o.regen_x[i] - o.regen_x[i - 1]));
    }
  }
  rep.direct = speed_from_stats(direct, horizon);
  rep.speed = renewal_speed(rep.dx, rep.dt);
  rep.lag1_dx = lag1_autocorrelation(rep.dx);
  rep.lag1_dt = lag1_autocorrelation(rep.dt);
  if (rep.dx.size() >= 8) {
    std::size_t half = rep.dx.size() / 2;
    std::vector<double> a(rep.dx.begin(), rep.dx.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<double> b(rep.dx.begin() + static_cast<std::ptrdiff_t>(half), rep.dx.end());
    rep.ks_d = ks_two_sample_d(a, b);
    rep.ks_p = ks_p_value(rep.ks_d, a.size(), b.size());
  }
  return rep;
}

}  // namespace apcrw
