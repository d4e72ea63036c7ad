#include "apcrw/walker.hpp"

#include <sstream>
#include <stdexcept>

namespace apcrw {

CoupledWalksResult run_coupled_walks(const ParticleCloud& env_lo, const ParticleCloud& env_hi,
                                     LatticePoint start_lo, LatticePoint start_hi,
                                     std::int64_t n_steps, const UniformField& field,
                                     const WalkParams& wp) {
  if (start_lo.n != start_hi.n)
    throw std::invalid_argument("run_coupled_walks: starts must share a time");
  if (start_lo.x > start_hi.x)
    throw std::invalid_argument("run_coupled_walks: requires x_lo <= x_hi");
  if (env_lo.horizon < start_lo.n + n_steps || env_hi.horizon < start_lo.n + n_steps)
    throw std::invalid_argument("run_coupled_walks: environment horizon too small");

  CoupledWalksResult out;
  CloudEnvDriver drv_lo(env_lo, start_lo.n);
  CloudEnvDriver drv_hi(env_hi, start_hi.n);

  out.lo.start = start_lo;
  out.hi.start = start_hi;
  out.lo.positions.push_back(static_cast<std::int32_t>(start_lo.x));
  out.hi.positions.push_back(static_cast<std::int32_t>(start_hi.x));
  std::int64_t x_lo = start_lo.x, x_hi = start_hi.x;
  for (std::int64_t k = 0; k < n_steps; ++k) {
    std::int64_t t = start_lo.n + k;
    x_lo += arrow(drv_lo.occupied(x_lo), field.at(x_lo, t), wp);
    x_hi += arrow(drv_hi.occupied(x_hi), field.at(x_hi, t), wp);
    out.lo.positions.push_back(static_cast<std::int32_t>(x_lo));
    out.hi.positions.push_back(static_cast<std::int32_t>(x_hi));
    if (x_lo > x_hi) ++out.ordering_violations;
    drv_lo.advance();
    drv_hi.advance();
  }
  return out;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream os;
  os << "step,position\n";
  for (std::size_t k = 0; k < traj.positions.size(); ++k)
    os << k << ',' << traj.positions[k] << '\n';
  return os.str();
}

}  // namespace apcrw
