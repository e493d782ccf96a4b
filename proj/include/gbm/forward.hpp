#pragma once

#include <vector>

#include "gbm/phasefield.hpp"
#include "gbm/volume.hpp"

namespace gbm {

// Non-dimensional model parameters. cal_D * cal_R = 1 when produced from
// characteristic fitting; mu_D = mu_R = 1 gives the characteristic solution.
struct FkppParams {
  double cal_D = 1.0;
  double cal_R = 1.0;
  double mu_D = 1.0;
  double mu_R = 1.0;
  WorldPoint x0_mm;
  double L_bar_mm = 1.0;
};

struct SphericalProfile {
  std::vector<double> r_mm;
  std::vector<double> u;
  double cal_D = 0.0;
  double cal_R = 0.0;
};

struct Fkpp3dResult {
  std::vector<ScalarVolume> snapshots;  // one per requested time, clamped to [0,1]
  std::vector<double> times;            // actual snapshot times (nearest step)
  double u_min = 0.0, u_max = 0.0;      // pre-clamp extrema of the final field
  double dt = 0.0;
  long steps = 0;
};

// u0(x) = 0.1 exp(-0.1 |x - x0|^2), |x - x0| in mm.
ScalarVolume initial_condition(const ScalarVolume& grid, const WorldPoint& x0_mm);

// Explicit Euler on du/dt = muD*D*div(Pphi_eff grad u) + muR*R*phi*u*(1-u) in
// coordinates non-dimensionalized by L_bar; conservative face fluxes,
// homogeneous Neumann box boundary. dt = 0 picks the CFL bound.
Fkpp3dResult solve_fkpp_3d(const EffectiveGeometry& geom, const FkppParams& params,
                           double t_end_norm, double dt,
                           const std::vector<double>& snapshot_times);

double cfl_bound(const EffectiveGeometry& geom, const FkppParams& params);

// Radially symmetric characteristic equation on r in [0, 180] mm to t = 1:
//   u_t = cal_D*L^2 * (1/r^2)(r^2 u_r)_r + cal_R * u(1-u),
// u(r,0) = 0.1 exp(-0.1 r^2), Neumann at r=0 and r=R, limit form 3*u_rr at
// the origin node. L_bar_mm converts cal_D to the mm-space coefficient;
// pass L_bar_mm = 1 to integrate the equation with the bare coefficients.
SphericalProfile solve_spherical(double cal_D, double cal_R, double L_bar_mm,
                                 int nr, double dt, double t_end = 1.0,
                                 double r_max_mm = 180.0);

// Largest r with u(r) >= u_c, linearly interpolated; 0 if never reached.
double threshold_radius(const SphericalProfile& profile, double u_c);

}  // namespace gbm
