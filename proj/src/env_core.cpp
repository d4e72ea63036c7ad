#include "apcrw/env_core.hpp"

#include <algorithm>
#include <sstream>

namespace apcrw {

EnvState sample_initial(const EnvParams& params, Window window, std::uint64_t seed) {
  params.validate();
  if (window.size() < 1) throw std::invalid_argument("sample_initial: empty window");
  EnvState state(window, params.n_types());
  for (int ty = 0; ty < params.n_types(); ++ty) {
    PoissonTable table(params.components[ty].rho);
    Rng rng(stream_key(seed, Stream::env_init, static_cast<std::uint64_t>(ty)));
    for (auto& c : state.counts[ty]) c = static_cast<std::int32_t>(table.sample(rng));
  }
  return state;
}

EnvState exact_density_state(const EnvParams& params, Window window) {
  params.validate();
  EnvState state(window, params.n_types());
  for (int ty = 0; ty < params.n_types(); ++ty) {
    double rho = params.components[ty].rho;
    for (std::int64_t x = window.lo; x <= window.hi; ++x) {
      std::int64_t i = x - window.lo;
      state.count(ty, x) = static_cast<std::int32_t>(
          std::llround(std::floor(rho * (i + 1))) - std::llround(std::floor(rho * i)));
    }
  }
  return state;
}

void step_counts_inplace(EnvState& state, const EnvParams& params, Rng& rng) {
  const std::int64_t w = state.window.size();
  for (int ty = 0; ty < state.n_types(); ++ty) {
    const double c_right = params.components[ty].alpha * params.components[ty].q;
    const double c_left = params.components[ty].alpha;  // right + left cumulative
    auto& cur = state.counts[ty];
    std::vector<std::int32_t> next(static_cast<std::size_t>(w), 0);
    for (std::int64_t i = 0; i < w; ++i) {
      std::int32_t m = cur[static_cast<std::size_t>(i)];
      for (std::int32_t p = 0; p < m; ++p) {
        double u = rng.next_unit();
        std::int64_t j = i;
        if (u < c_right)
          ++j;
        else if (u < c_left)
          --j;
        if (j < 0 || j >= w)
          ++state.overflow[ty];
        else
          ++next[static_cast<std::size_t>(j)];
      }
    }
    cur.swap(next);
  }
  ++state.time;
}

EnvState step_counts(const EnvState& state, const EnvParams& params, Rng& rng) {
  EnvState out = state;
  step_counts_inplace(out, params, rng);
  return out;
}

namespace {
std::uint64_t particle_uid(std::int64_t site, int index, std::uint64_t layer) {
  return key3(static_cast<std::uint64_t>(site), static_cast<std::uint64_t>(index), layer);
}
}  // namespace

ParticleCloud cloud_from_poisson(const EnvParams& params, Window window, std::uint64_t seed,
                                 std::uint64_t layer) {
  params.validate();
  ParticleCloud cloud;
  cloud.window = window;
  cloud.n_types_ = params.n_types();
  for (int ty = 0; ty < params.n_types(); ++ty) {
    PoissonTable table(params.components[ty].rho);
    Rng rng(stream_key(seed, Stream::env_init, static_cast<std::uint64_t>(ty), layer));
    for (std::int64_t x = window.lo; x <= window.hi; ++x) {
      int m = table.sample(rng);
      for (int i = 0; i < m; ++i) {
        ParticleCloud::Particle p;
        p.type = static_cast<std::uint8_t>(ty);
        p.uid = particle_uid(x, i + ty * 1000003, layer);
        p.path = {static_cast<std::int32_t>(x)};
        cloud.particles.push_back(std::move(p));
      }
    }
  }
  return cloud;
}

ParticleCloud cloud_from_state(const EnvState& state, std::uint64_t layer) {
  ParticleCloud cloud;
  cloud.window = state.window;
  cloud.n_types_ = state.n_types();
  for (int ty = 0; ty < state.n_types(); ++ty) {
    for (std::int64_t x = state.window.lo; x <= state.window.hi; ++x) {
      int m = state.count(ty, x);
      for (int i = 0; i < m; ++i) {
        ParticleCloud::Particle p;
        p.type = static_cast<std::uint8_t>(ty);
        p.uid = particle_uid(x, i + ty * 1000003, layer);
        p.path = {static_cast<std::int32_t>(x)};
        cloud.particles.push_back(std::move(p));
      }
    }
  }
  return cloud;
}

void step_particles_inplace(ParticleCloud& cloud, const EnvParams& params, std::uint64_t seed) {
  const std::int64_t t_next = cloud.horizon + 1;
  for (auto& p : cloud.particles) {
    const auto& c = params.components[p.type];
    double u = unit_at(stream_key(seed, Stream::paired_particle, p.uid),
                       static_cast<std::int64_t>(t_next), 0);
    std::int32_t x = p.path.back();
    if (u < c.alpha * c.q)
      ++x;
    else if (u < c.alpha)
      --x;
    p.path.push_back(x);
  }
  cloud.horizon = t_next;
}

EnvState counts_of(const ParticleCloud& cloud, std::int64_t time) {
  if (time < 0 || time > cloud.horizon)
    throw std::out_of_range("counts_of: time outside recorded horizon");
  EnvState state(cloud.window, cloud.n_types());
  state.time = time;
  for (const auto& p : cloud.particles) {
    std::int64_t x = p.path[static_cast<std::size_t>(time)];
    if (state.window.contains(x))
      ++state.count(p.type, x);
    else
      ++state.overflow[p.type];
  }
  return state;
}

std::pair<ParticleCloud, ParticleCloud> couple_monotone(const EnvParams& lo, const EnvParams& hi,
                                                        Window window, std::int64_t horizon,
                                                        std::uint64_t seed) {
  lo.validate();
  hi.validate();
  if (lo.n_types() != hi.n_types())
    throw std::invalid_argument("couple_monotone: type counts differ");
  for (int ty = 0; ty < lo.n_types(); ++ty) {
    if (lo.components[ty].rho > hi.components[ty].rho + 1e-12)
      throw std::invalid_argument("couple_monotone: requires rho_lo <= rho_hi per type");
    if (lo.components[ty].alpha != hi.components[ty].alpha ||
        lo.components[ty].q != hi.components[ty].q)
      throw std::invalid_argument("couple_monotone: step parameters must match");
  }

  ParticleCloud base = cloud_from_poisson(lo, window, seed, /*layer=*/0);
  EnvParams extra = hi;
  bool any_extra = false;
  for (int ty = 0; ty < hi.n_types(); ++ty) {
    double d = hi.components[ty].rho - lo.components[ty].rho;
    extra.components[ty].rho = std::max(d, 0.0);
    any_extra = any_extra || d > 1e-12;
  }

  ParticleCloud cloud_hi = base;  // shares uids with the lo cloud
  if (any_extra) {
    // Poisson superposition: independent sprinkling layer with distinct uids.
    EnvParams extra_valid = extra;
    for (auto& c : extra_valid.components) c.rho = std::max(c.rho, 1e-300);
    ParticleCloud layer = cloud_from_poisson(extra_valid, window, seed, /*layer=*/1);
    for (int ty = 0; ty < hi.n_types(); ++ty) {
      if (extra.components[ty].rho <= 0) {
        // drop accidental particles of types that had no density gap
        layer.particles.erase(std::remove_if(layer.particles.begin(), layer.particles.end(),
                                             [&](const auto& p) { return p.type == ty; }),
                              layer.particles.end());
      }
    }
    for (auto& p : layer.particles) cloud_hi.particles.push_back(p);
  }

  for (std::int64_t t = 0; t < horizon; ++t) {
    step_particles_inplace(base, lo, seed);
    step_particles_inplace(cloud_hi, hi, seed);
  }
  return {std::move(base), std::move(cloud_hi)};
}

DensityReport empirical_density_report(const EnvState& state, std::int64_t ell, double rho,
                                       double eps) {
  if (ell < 1 || ell > state.window.size())
    throw std::invalid_argument("empirical_density_report: ell must fit in the window");
  DensityReport rep;
  rep.ell = ell;
  rep.eps = eps;
  rep.rho = rho;
  const std::int64_t w = state.window.size();
  std::vector<std::int64_t> total(static_cast<std::size_t>(w), 0);
  for (const auto& row : state.counts)
    for (std::int64_t i = 0; i < w; ++i) total[static_cast<std::size_t>(i)] += row[static_cast<std::size_t>(i)];

  std::int64_t run = 0;
  for (std::int64_t i = 0; i < ell; ++i) run += total[static_cast<std::size_t>(i)];
  rep.max_abs_deviation = std::fabs(static_cast<double>(run) - rho * ell) / ell;
  rep.worst_lo = state.window.lo;
  for (std::int64_t i = ell; i < w; ++i) {
    run += total[static_cast<std::size_t>(i)] - total[static_cast<std::size_t>(i - ell)];
    double dev = std::fabs(static_cast<double>(run) - rho * ell) / ell;
    if (dev > rep.max_abs_deviation) {
      rep.max_abs_deviation = dev;
      rep.worst_lo = state.window.lo + i - ell + 1;
    }
  }
  rep.pass = rep.max_abs_deviation < eps;
  return rep;
}

std::string env_state_csv(const EnvState& state) {
  std::ostringstream os;
  os << "site,type,count\n";
  for (int ty = 0; ty < state.n_types(); ++ty)
    for (std::int64_t x = state.window.lo; x <= state.window.hi; ++x)
      os << x << ',' << ty << ',' << state.count(ty, x) << '\n';
  return os.str();
}

}  // namespace apcrw
