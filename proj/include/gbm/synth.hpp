#pragma once

#include <cstdint>

#include "gbm/forward.hpp"
#include "gbm/loss.hpp"
#include "gbm/phasefield.hpp"

namespace gbm {

struct NoiseConfig {
  double sigma = 2.0;
  int kernel_size = 13;       // odd window; kernel sigma = size/6
  std::uint64_t seed = 0;
  double amplitude = 1.0;     // scales the filtered field; 0 disables noise
};

// i.i.d. N(0, sigma^2) field convolved with a normalized Gaussian kernel.
ScalarVolume correlated_noise(Index3 dims, Vec3 spacing_mm, const NoiseConfig& cfg);

struct SyntheticCaseParams {
  FkppParams fkpp;          // GT mu_D, mu_R, x0; cal_D/cal_R/L_bar from charfit
  double u_c_flair = 0.35;  // GT imaging thresholds
  double u_c_t1gd = 0.6;
  double m = 1.0;
  double A = 0.1;
  bool fet_from_noisy = true;  // FET built from the noisy density (flag to switch)
};

struct SyntheticCase {
  SyntheticCaseParams gt;
  ScalarVolume u_gt;        // clean density at t=1
  DensitySeries u_gt_series;
  ScalarVolume u_noisy;     // clamp(u_gt + noise, 0, 1)
  BinaryMask y_t1gd, y_flair;
  ScalarVolume fet;         // p = (m*u - A) * y_fet
  BinaryMask y_fet;         // {m*u - A > 0}
  std::uint64_t noise_seed = 0;
};

SyntheticCase make_synthetic_case(const SyntheticCaseParams& gt,
                                  const EffectiveGeometry& geom,
                                  const NoiseConfig& noise, int n_snapshots = 21);

}  // namespace gbm
