#include "gbm/forward.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gbm {

ScalarVolume initial_condition(const ScalarVolume& grid, const WorldPoint& x0_mm) {
  if (!inside_box(grid, x0_mm))
    throw ConfigError("initial_condition: x0 outside the grid");
  ScalarVolume u(grid.dims(), grid.spacing(), grid.origin());
  for (int k = 0; k < grid.nz(); ++k)
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) {
        WorldPoint d = grid.world(i, j, k) - x0_mm;
        u.at(i, j, k) = 0.1 * std::exp(-0.1 * (d.x * d.x + d.y * d.y + d.z * d.z));
      }
  return u;
}

double cfl_bound(const EffectiveGeometry& geom, const FkppParams& p) {
  double pmax = *std::max_element(geom.p_phi.data().begin(), geom.p_phi.data().end());
  double hn = geom.p_phi.min_spacing() / p.L_bar_mm;
  double diff = hn * hn / (6.0 * p.mu_D * p.cal_D * std::max(pmax, 1e-300));
  double reac = 0.1 / std::max(p.mu_R * p.cal_R, 1e-300);
  return std::min(diff, reac);
}

Fkpp3dResult solve_fkpp_3d(const EffectiveGeometry& geom, const FkppParams& params,
                           double t_end_norm, double dt,
                           const std::vector<double>& snapshot_times) {
  if (t_end_norm <= 0.0) throw ConfigError("solve_fkpp_3d: t_end must be > 0");
  const double bound = cfl_bound(geom, params);
  if (dt <= 0.0) dt = 0.9 * bound;
  if (dt > bound * (1.0 + 1e-12))
    throw NumericError("solve_fkpp_3d: dt " + std::to_string(dt) +
                       " violates CFL bound " + std::to_string(bound));
  long nsteps = long(std::ceil(t_end_norm / dt - 1e-12));
  dt = t_end_norm / double(nsteps);

  const ScalarVolume& pphi = geom.p_phi;
  const ScalarVolume& phi = geom.phi;
  const int nx = pphi.nx(), ny = pphi.ny(), nz = pphi.nz();
  const auto& h_mm = pphi.spacing();
  const double ih2[3] = {
      params.L_bar_mm * params.L_bar_mm / (h_mm[0] * h_mm[0]),
      params.L_bar_mm * params.L_bar_mm / (h_mm[1] * h_mm[1]),
      params.L_bar_mm * params.L_bar_mm / (h_mm[2] * h_mm[2])};
  const std::ptrdiff_t strides[3] = {1, nx, std::ptrdiff_t(nx) * ny};
  const double a_diff = params.mu_D * params.cal_D;
  const double a_reac = params.mu_R * params.cal_R;

  ScalarVolume u = initial_condition(pphi, params.x0_mm);
  ScalarVolume next(pphi.dims(), h_mm, pphi.origin());

  // map each requested time to its nearest step index
  std::vector<long> snap_step(snapshot_times.size());
  for (std::size_t s = 0; s < snapshot_times.size(); ++s) {
    long st = std::lround(snapshot_times[s] / dt);
    snap_step[s] = std::clamp(st, 0l, nsteps);
  }

  Fkpp3dResult out;
  out.dt = dt;
  out.steps = nsteps;
  out.snapshots.resize(snapshot_times.size());
  out.times.resize(snapshot_times.size());
  auto record = [&](long step) {
    for (std::size_t s = 0; s < snap_step.size(); ++s)
      if (snap_step[s] == step) {
        ScalarVolume snap = u;
        for (auto& v : snap.data()) v = std::clamp(v, 0.0, 1.0);
        out.snapshots[s] = std::move(snap);
        out.times[s] = double(step) * dt;
      }
  };
  record(0);

  for (long step = 1; step <= nsteps; ++step) {
    bool bad = false;
#pragma omp parallel for collapse(2) schedule(static)
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          std::size_t n = u.idx(i, j, k);
          const int c[3] = {i, j, k}, lim[3] = {nx, ny, nz};
          double div = 0.0;
          for (int d = 0; d < 3; ++d) {
            std::ptrdiff_t s = strides[d];
            double fp = 0.0, fm = 0.0;  // Neumann: no flux through box faces
            if (c[d] + 1 < lim[d]) fp = 0.5 * (pphi[n] + pphi[n + s]) * (u[n + s] - u[n]);
            if (c[d] - 1 >= 0) fm = 0.5 * (pphi[n] + pphi[n - s]) * (u[n] - u[n - s]);
            div += (fp - fm) * ih2[d];
          }
          double v = u[n];
          next[n] = v + dt * (a_diff * div + a_reac * phi[n] * v * (1.0 - v));
        }
    std::swap(u.data(), next.data());
    if (step == nsteps || (step & 63) == 0) {
      for (double v : u.data())
        if (!std::isfinite(v)) {
          bad = true;
          break;
        }
      if (bad)
        throw NumericError("solve_fkpp_3d: NaN detected at step " + std::to_string(step));
    }
    record(step);
  }
  out.u_min = *std::min_element(u.data().begin(), u.data().end());
  out.u_max = *std::max_element(u.data().begin(), u.data().end());
  return out;
}

SphericalProfile solve_spherical(double cal_D, double cal_R, double L_bar_mm,
                                 int nr, double dt, double t_end, double r_max_mm) {
  if (nr < 200) throw ConfigError("solve_spherical: nr must be >= 200");
  const double A = cal_D * L_bar_mm * L_bar_mm;  // mm^2 per unit normalized time
  const double B = cal_R;
  const double dr = r_max_mm / double(nr - 1);
  const double bound = std::min(0.25 * dr * dr / std::max(A, 1e-300),
                                0.05 / std::max(B, 1e-300));
  if (dt <= 0.0) dt = bound;
  if (dt > bound * (1.0 + 1e-12))
    throw NumericError("solve_spherical: dt " + std::to_string(dt) +
                       " exceeds stability bound " + std::to_string(bound));
  long nsteps = long(std::ceil(t_end / dt - 1e-12));
  dt = t_end / double(nsteps);

  SphericalProfile prof;
  prof.cal_D = cal_D;
  prof.cal_R = cal_R;
  prof.r_mm.resize(nr);
  prof.u.resize(nr);
  std::vector<double>& u = prof.u;
  for (int i = 0; i < nr; ++i) {
    prof.r_mm[i] = i * dr;
    u[i] = 0.1 * std::exp(-0.1 * prof.r_mm[i] * prof.r_mm[i]);
  }
  std::vector<double> face2(nr - 1), r2(nr);
  for (int i = 0; i < nr - 1; ++i) {
    double rf = (i + 0.5) * dr;
    face2[i] = rf * rf;
  }
  for (int i = 0; i < nr; ++i) r2[i] = prof.r_mm[i] * prof.r_mm[i];

  std::vector<double> un(nr);
  const double idr2 = 1.0 / (dr * dr);
  for (long s = 0; s < nsteps; ++s) {
    un[0] = u[0] + dt * (A * 6.0 * (u[1] - u[0]) * idr2 + B * u[0] * (1.0 - u[0]));
    for (int i = 1; i < nr - 1; ++i) {
      double fp = face2[i] * (u[i + 1] - u[i]);
      double fm = face2[i - 1] * (u[i] - u[i - 1]);
      double div = (fp - fm) / r2[i] * idr2;
      un[i] = u[i] + dt * (A * div + B * u[i] * (1.0 - u[i]));
    }
    {
      int i = nr - 1;  // Neumann wall: no flux through the outer face
      double fm = face2[i - 1] * (u[i] - u[i - 1]);
      un[i] = u[i] + dt * (A * (-fm / r2[i] * idr2) + B * u[i] * (1.0 - u[i]));
    }
    std::swap(u, un);
    if ((s & 1023) == 0 || s + 1 == nsteps) {
      for (double v : u) {
        if (!std::isfinite(v))
          throw NumericError("solve_spherical: instability at step " + std::to_string(s));
        if (v < -1e-6)
          throw NumericError("solve_spherical: negative u beyond tolerance: " +
                             std::to_string(v));
      }
    }
  }
  return prof;
}

double threshold_radius(const SphericalProfile& profile, double u_c) {
  if (u_c <= 0.0 || u_c >= 1.0)
    throw ConfigError("threshold_radius: u_c must be in (0,1)");
  const auto& u = profile.u;
  const auto& r = profile.r_mm;
  int last = -1;
  for (int i = int(u.size()) - 1; i >= 0; --i)
    if (u[i] >= u_c) {
      last = i;
      break;
    }
  if (last < 0) return 0.0;
  if (last == int(u.size()) - 1) return r.back();
  double t = (u[last] - u_c) / (u[last] - u[last + 1]);
  return r[last] + t * (r[last + 1] - r[last]);
}

}  // namespace gbm
