#pragma once

#include "gbm/volume.hpp"

namespace gbm {

// Diffuse-domain phase field from Cahn-Hilliard evolution of a brain mask.
struct PhaseField {
  ScalarVolume phi;
  double epsilon_mm = 3.0;
  double tau = 1e-3;
  double t_reached = 0.0;   // evolution time actually run
  double final_rate = 0.0;  // max-norm change per unit time at the last step
};

// Effective geometry consumed by both solvers: p_phi = P*(phi+tau) with
// P = P_w + 10*P_g, and its central-difference gradient (1/mm).
struct EffectiveGeometry {
  ScalarVolume p_phi;
  GradientField grad_p_phi;
  ScalarVolume phi;  // clamped to [0,1]
  ScalarVolume p;
  double tau = 1e-3;
};

struct CahnHilliardConfig {
  double epsilon_mm = 3.0;
  double t_final = 60.0;
  double dt = 0.0;            // 0 = auto from stability bound
  // dt <= C*h^4/eps^2; C = 0.05 sits at ~90% of the linear-stability edge of
  // the explicit fourth-order update and can blow up once eps ~ 2h, so the
  // default keeps a factor-two margin.
  double dt_safety = 0.025;
  double rate_tol = 1e-4;     // stop when max|dphi|/dt < tol
};

// Explicit Euler, central differences, mobility phi(1-phi) evaluated at the
// face-averaged phi, Dirichlet phi=0 on the box boundary.
PhaseField cahn_hilliard_evolve(const BinaryMask& mask, const CahnHilliardConfig& cfg);

EffectiveGeometry assemble_geometry(const ScalarVolume& p_w, const ScalarVolume& p_g,
                                    const PhaseField& field);

enum class BrainShape { Sphere, TwoShell };

struct SyntheticBrain {
  ScalarVolume p_w, p_g;
  BinaryMask mask;
};

// Desk-scale geometry substitute: WM ball, optionally with a GM shell.
SyntheticBrain synthetic_brain(BrainShape shape, Index3 dims, Vec3 spacing_mm,
                               double radius_mm, double shell_mm = 0.0);

}  // namespace gbm
