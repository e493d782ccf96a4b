#pragma once

#include "gbm/volume.hpp"

namespace gbm {

// Trainable scalars of Eq-level interest. Bounds are enforced through the
// quadratic penalty loss only, so transient violations are legal. x0 carries
// no penalty (no published range).
struct TrainableParams {
  double mu_D = 1.0;
  double mu_R = 1.0;
  WorldPoint x0_mm;
  double u_c_flair = 0.35;
  double u_c_t1gd = 0.6;
  double m = 1.0;
  double A = 0.0;

  bool train_mu = true;   // mu_D, mu_R
  bool train_x0 = true;
  bool train_uc = true;   // u_c_flair, u_c_t1gd
  bool train_mA = false;  // m, A (FET modes only)

  // Flattened trainable slots, fixed order: muD, muR, x0(3), ucF, ucT, m, A.
  static constexpr int kSlots = 9;
  int n_active() const {
    return (train_mu ? 2 : 0) + (train_x0 ? 3 : 0) + (train_uc ? 2 : 0) +
           (train_mA ? 2 : 0);
  }
};

struct ThetaBounds {
  double mu_lo = 0.75, mu_hi = 1.25;
  double uc_flair_lo = 0.2, uc_flair_hi = 0.5;
  double uc_t1gd_lo = 0.5, uc_t1gd_hi = 0.8;
  double m_lo = 0.8, m_hi = 1.2;
  double A_lo = 0.0, A_hi = 1.0;
};

}  // namespace gbm
