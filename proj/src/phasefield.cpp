#include "gbm/phasefield.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gbm {

namespace {

inline double g_prime(double p) { return 0.5 * p * (1.0 - p) * (1.0 - 2.0 * p); }

}  // namespace

PhaseField cahn_hilliard_evolve(const BinaryMask& mask, const CahnHilliardConfig& cfg) {
  if (cfg.epsilon_mm <= 0.0) throw ConfigError("cahn_hilliard: epsilon must be > 0");
  if (mask.count() == 0) throw NumericError("cahn_hilliard: empty mask");
  const int nx = mask.nx(), ny = mask.ny(), nz = mask.nz();
  const auto& h = mask.spacing();
  const double hmin = mask.min_spacing();
  const double eps2 = cfg.epsilon_mm * cfg.epsilon_mm;
  const double dt_bound = cfg.dt_safety * hmin * hmin * hmin * hmin / eps2;
  double dt = cfg.dt > 0.0 ? cfg.dt : dt_bound;
  if (dt > dt_bound * (1.0 + 1e-12))
    throw NumericError("cahn_hilliard: dt " + std::to_string(dt) +
                       " exceeds stability bound " + std::to_string(dt_bound));

  ScalarVolume phi(mask.dims(), h, mask.origin());
  for (std::size_t n = 0; n < mask.size(); ++n) phi[n] = mask[n];
  ScalarVolume mu(mask.dims(), h, mask.origin());
  ScalarVolume next(mask.dims(), h, mask.origin());

  const double ih2[3] = {1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])};
  const std::ptrdiff_t sx = 1, sy = nx, sz = std::ptrdiff_t(nx) * ny;

  double t = 0.0, rate = 0.0;
  while (t < cfg.t_final) {
    // chemical potential on interior nodes (boundary stays 0, unused there)
#pragma omp parallel for collapse(2) schedule(static)
    for (int k = 1; k < nz - 1; ++k)
      for (int j = 1; j < ny - 1; ++j) {
        std::size_t base = phi.idx(0, j, k);
        for (int i = 1; i < nx - 1; ++i) {
          std::size_t n = base + i;
          double p = phi[n];
          double lap = (phi[n + sx] - 2 * p + phi[n - sx]) * ih2[0] +
                       (phi[n + sy] - 2 * p + phi[n - sy]) * ih2[1] +
                       (phi[n + sz] - 2 * p + phi[n - sz]) * ih2[2];
          mu[n] = g_prime(p) - eps2 * lap;
        }
      }
    // divergence of M(phi_face) * grad(mu); faces touching the wall carry no flux
    double step_max = 0.0;
#pragma omp parallel for collapse(2) schedule(static) reduction(max : step_max)
    for (int k = 1; k < nz - 1; ++k)
      for (int j = 1; j < ny - 1; ++j) {
        std::size_t base = phi.idx(0, j, k);
        for (int i = 1; i < nx - 1; ++i) {
          std::size_t n = base + i;
          double div = 0.0;
          const std::ptrdiff_t strides[3] = {sx, sy, sz};
          const int lo[3] = {i, j, k};
          const int cap[3] = {nx - 1, ny - 1, nz - 1};
          for (int d = 0; d < 3; ++d) {
            std::ptrdiff_t s = strides[d];
            double fp = 0.0, fm = 0.0;
            // mobility at the face-averaged phi, clamped to its physical
            // range: overshoot past 1 must not turn into anti-diffusion
            if (lo[d] + 1 < cap[d]) {
              double pf = std::clamp(0.5 * (phi[n] + phi[n + s]), 0.0, 1.0);
              fp = pf * (1.0 - pf) * (mu[n + s] - mu[n]);
            }
            if (lo[d] - 1 > 0) {
              double pf = std::clamp(0.5 * (phi[n] + phi[n - s]), 0.0, 1.0);
              fm = pf * (1.0 - pf) * (mu[n] - mu[n - s]);
            }
            div += (fp - fm) * ih2[d];
          }
          double v = phi[n] + dt * div;
          next[n] = v;
          step_max = std::max(step_max, std::abs(v - phi[n]));
        }
      }
    std::swap(phi.data(), next.data());
    t += dt;
    rate = step_max / dt;
    double mn = *std::min_element(phi.data().begin(), phi.data().end());
    double mx = *std::max_element(phi.data().begin(), phi.data().end());
    if (mn < -0.5 || mx > 1.5)
      throw NumericError("cahn_hilliard: instability, phi in [" + std::to_string(mn) +
                         "," + std::to_string(mx) + "] at t=" + std::to_string(t));
    if (rate < cfg.rate_tol) break;
  }
  PhaseField out;
  out.phi = std::move(phi);
  out.epsilon_mm = cfg.epsilon_mm;
  out.t_reached = t;
  out.final_rate = rate;
  return out;
}

EffectiveGeometry assemble_geometry(const ScalarVolume& p_w, const ScalarVolume& p_g,
                                    const PhaseField& field) {
  if (!p_w.same_grid(p_g) || !p_w.same_grid(field.phi))
    throw ConfigError("assemble_geometry: grid mismatch");
  for (std::size_t n = 0; n < p_w.size(); ++n) {
    if (p_w[n] < 0.0 || p_w[n] > 1.0 || p_g[n] < 0.0 || p_g[n] > 1.0)
      throw NumericError("assemble_geometry: tissue fraction outside [0,1]");
  }
  EffectiveGeometry geo;
  geo.tau = field.tau;
  geo.phi = ScalarVolume(p_w.dims(), p_w.spacing(), p_w.origin());
  geo.p = ScalarVolume(p_w.dims(), p_w.spacing(), p_w.origin());
  geo.p_phi = ScalarVolume(p_w.dims(), p_w.spacing(), p_w.origin());
  for (std::size_t n = 0; n < p_w.size(); ++n) {
    double phi = std::clamp(field.phi[n], 0.0, 1.0);
    double P = p_w[n] + 10.0 * p_g[n];
    geo.phi[n] = phi;
    geo.p[n] = P;
    geo.p_phi[n] = P * (phi + field.tau);
  }
  geo.grad_p_phi = central_gradient(geo.p_phi);
  return geo;
}

SyntheticBrain synthetic_brain(BrainShape shape, Index3 dims, Vec3 spacing_mm,
                               double radius_mm, double shell_mm) {
  ScalarVolume pw(dims, spacing_mm), pg(dims, spacing_mm);
  BinaryMask mask(dims, spacing_mm);
  double c[3] = {(dims[0] - 1) * 0.5 * spacing_mm[0], (dims[1] - 1) * 0.5 * spacing_mm[1],
                 (dims[2] - 1) * 0.5 * spacing_mm[2]};
  double outer = radius_mm + (shape == BrainShape::TwoShell ? shell_mm : 0.0);
  for (int d = 0; d < 3; ++d) {
    double half = (dims[d] - 1) * 0.5 * spacing_mm[d];
    if (outer + 5.0 * spacing_mm[d] > half)
      throw ConfigError("synthetic_brain: shape does not fit with a 5-voxel margin");
  }
  std::size_t cnt = 0;
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        WorldPoint w = pw.world(i, j, k);
        double r = std::sqrt((w.x - c[0]) * (w.x - c[0]) + (w.y - c[1]) * (w.y - c[1]) +
                             (w.z - c[2]) * (w.z - c[2]));
        bool wm = r <= radius_mm;
        bool gm = shape == BrainShape::TwoShell && !wm && r <= radius_mm + shell_mm;
        pw.at(i, j, k) = wm ? 1.0 : 0.0;
        pg.at(i, j, k) = gm ? 1.0 : 0.0;
        if (wm || gm) {
          mask.at(i, j, k) = 1.0;
          ++cnt;
        }
      }
  if (cnt == 0) throw NumericError("synthetic_brain: empty mask (radius too small)");
  return {std::move(pw), std::move(pg), std::move(mask)};
}

}  // namespace gbm
