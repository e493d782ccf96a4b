#include "gbm/synth.hpp"

#include <cmath>

#include "gbm/rng.hpp"

namespace gbm {

ScalarVolume correlated_noise(Index3 dims, Vec3 spacing_mm, const NoiseConfig& cfg) {
  if (cfg.kernel_size % 2 == 0) throw ConfigError("correlated_noise: kernel size must be odd");
  for (int d = 0; d < 3; ++d)
    if (cfg.kernel_size > dims[d])
      throw ConfigError("correlated_noise: kernel larger than volume");
  ScalarVolume field(dims, spacing_mm);
  Rng rng(cfg.seed);
  for (auto& v : field.data()) v = cfg.sigma * rng.normal();

  // separable normalized Gaussian, sigma = size/6 (window spans +-3 sigma)
  const int half = cfg.kernel_size / 2;
  const double ks = double(cfg.kernel_size) / 6.0;
  std::vector<double> kern(cfg.kernel_size);
  double sum = 0.0;
  for (int i = 0; i < cfg.kernel_size; ++i) {
    double d = double(i - half);
    kern[i] = std::exp(-0.5 * d * d / (ks * ks));
    sum += kern[i];
  }
  for (auto& k : kern) k /= sum;

  ScalarVolume tmp(dims, spacing_mm);
  ScalarVolume* src = &field;
  ScalarVolume* dst = &tmp;
  for (int axis = 0; axis < 3; ++axis) {
    const int n[3] = {dims[0], dims[1], dims[2]};
    for (int k = 0; k < n[2]; ++k)
      for (int j = 0; j < n[1]; ++j)
        for (int i = 0; i < n[0]; ++i) {
          int c[3] = {i, j, k};
          double acc = 0.0;
          for (int o = -half; o <= half; ++o) {
            int cc[3] = {c[0], c[1], c[2]};
            cc[axis] += o;
            if (cc[axis] < 0) cc[axis] = -cc[axis];  // mirror at edges
            if (cc[axis] >= n[axis]) cc[axis] = 2 * n[axis] - 2 - cc[axis];
            acc += kern[o + half] * src->at(cc[0], cc[1], cc[2]);
          }
          dst->at(i, j, k) = acc;
        }
    std::swap(src, dst);
  }
  if (src != &field) field.data() = src->data();
  for (auto& v : field.data()) v *= cfg.amplitude;
  return field;
}

SyntheticCase make_synthetic_case(const SyntheticCaseParams& gt,
                                  const EffectiveGeometry& geom,
                                  const NoiseConfig& noise, int n_snapshots) {
  if (gt.u_c_flair <= 0.0 || gt.u_c_flair >= 1.0 || gt.u_c_t1gd <= 0.0 || gt.u_c_t1gd >= 1.0)
    throw ConfigError("make_synthetic_case: thresholds must lie in (0,1)");
  SyntheticCase out;
  out.gt = gt;
  out.noise_seed = noise.seed;

  std::vector<double> times(n_snapshots);
  for (int s = 0; s < n_snapshots; ++s) times[s] = double(s) / double(n_snapshots - 1);
  Fkpp3dResult run = solve_fkpp_3d(geom, gt.fkpp, 1.0, 0.0, times);
  out.u_gt_series.snaps = run.snapshots;
  out.u_gt_series.times = run.times;
  out.u_gt = run.snapshots.back();

  const Index3 dims = out.u_gt.dims();
  out.u_noisy = out.u_gt;
  if (noise.amplitude != 0.0) {
    ScalarVolume v = correlated_noise(dims, out.u_gt.spacing(), noise);
    for (std::size_t n = 0; n < out.u_noisy.size(); ++n)
      out.u_noisy[n] = std::clamp(out.u_gt[n] + v[n], 0.0, 1.0);
  }

  out.y_t1gd = BinaryMask(dims, out.u_gt.spacing(), out.u_gt.origin());
  out.y_flair = BinaryMask(dims, out.u_gt.spacing(), out.u_gt.origin());
  out.y_fet = BinaryMask(dims, out.u_gt.spacing(), out.u_gt.origin());
  out.fet = ScalarVolume(dims, out.u_gt.spacing(), out.u_gt.origin());
  const ScalarVolume& ufet = gt.fet_from_noisy ? out.u_noisy : out.u_gt;
  for (std::size_t n = 0; n < out.u_noisy.size(); ++n) {
    out.y_t1gd[n] = out.u_noisy[n] > gt.u_c_t1gd ? 1.0 : 0.0;
    out.y_flair[n] = out.u_noisy[n] > gt.u_c_flair ? 1.0 : 0.0;
    double p = gt.m * ufet[n] - gt.A;
    if (p > 0.0) {
      out.y_fet[n] = 1.0;
      out.fet[n] = p;
    }
  }
  return out;
}

}  // namespace gbm
