#include <cmath>

#include "doctest.h"
#include "gbm/synth.hpp"

using namespace gbm;

TEST_CASE("correlated noise statistics") {
  NoiseConfig cfg;
  cfg.seed = 11;
  ScalarVolume v = correlated_noise({64, 64, 64}, {1, 1, 1}, cfg);
  double mean = 0.0;
  for (double x : v.data()) mean += x;
  mean /= double(v.size());
  CHECK(std::abs(mean) < 0.05);

  double var = 0.0;
  for (double x : v.data()) var += (x - mean) * (x - mean);
  var /= double(v.size());
  double sd = std::sqrt(var);
  // 3d smoothing with a size-13 kernel shrinks the std well below 2 but it
  // must stay comfortably above zero
  CHECK(sd < 2.0);
  CHECK(sd > 0.05);

  ScalarVolume v2 = correlated_noise({64, 64, 64}, {1, 1, 1}, cfg);
  CHECK(v.data() == v2.data());
  NoiseConfig c2 = cfg;
  c2.kernel_size = 12;
  CHECK_THROWS_AS(correlated_noise({64, 64, 64}, {1, 1, 1}, c2), ConfigError);
}

TEST_CASE("noise autocorrelation length tracks the kernel sigma") {
  NoiseConfig cfg;
  cfg.seed = 5;
  ScalarVolume v = correlated_noise({96, 48, 48}, {1, 1, 1}, cfg);
  // autocorrelation along x at a handful of lags
  double mean = 0.0;
  for (double x : v.data()) mean += x;
  mean /= double(v.size());
  auto corr_at = [&](int lag) {
    double num = 0.0, den = 0.0;
    std::size_t cnt = 0;
    for (int k = 0; k < 48; ++k)
      for (int j = 0; j < 48; ++j)
        for (int i = 0; i + lag < 96; ++i) {
          double a = v.at(i, j, k) - mean, b = v.at(i + lag, j, k) - mean;
          num += a * b;
          ++cnt;
        }
    for (double x : v.data()) den += (x - mean) * (x - mean);
    return num / cnt / (den / double(v.size()));
  };
  // find the lag where autocorrelation first drops below 1/e
  double sigma = 13.0 / 6.0;
  int lag = 1;
  while (lag < 20 && corr_at(lag) > std::exp(-1.0)) ++lag;
  // theory: corr(lag) = exp(-lag^2/(4 sigma^2)) -> 1/e at lag = 2*sigma
  CHECK(double(lag) >= 2.0 * sigma * 0.7);
  CHECK(double(lag) <= 2.0 * sigma * 1.3);
}

TEST_CASE("synthetic case construction") {
  SyntheticBrain brain = synthetic_brain(BrainShape::Sphere, {48, 48, 48}, {2, 2, 2}, 36.0);
  PhaseField pf;
  pf.phi = ScalarVolume(brain.p_w.dims(), brain.p_w.spacing());
  for (std::size_t n = 0; n < pf.phi.size(); ++n) pf.phi[n] = brain.p_w[n];
  pf.tau = 1e-3;
  EffectiveGeometry geo = assemble_geometry(brain.p_w, brain.p_g, pf);

  SyntheticCaseParams gt;
  gt.fkpp.cal_D = std::sqrt(6.0) / 20.0;
  gt.fkpp.cal_R = 20.0 / std::sqrt(6.0);
  gt.fkpp.L_bar_mm = 20.0;
  gt.fkpp.mu_D = 0.85;
  gt.fkpp.mu_R = 0.95;
  gt.fkpp.x0_mm = geo.p_phi.world(23, 23, 23);
  gt.u_c_flair = 0.35;
  gt.u_c_t1gd = 0.6;
  gt.m = 1.0;
  gt.A = 0.1;

  // zero-amplitude noise: masks equal exact thresholding of u_gt
  NoiseConfig off;
  off.amplitude = 0.0;
  SyntheticCase c0 = make_synthetic_case(gt, geo, off, 6);
  for (std::size_t n = 0; n < c0.u_gt.size(); n += 13) {
    CHECK(c0.y_flair[n] == (c0.u_gt[n] > 0.35 ? 1.0 : 0.0));
    CHECK(c0.y_t1gd[n] == (c0.u_gt[n] > 0.6 ? 1.0 : 0.0));
  }
  CHECK(c0.u_gt_series.snaps.size() == 6);
  // T1Gd inside FLAIR when uc_t1gd > uc_flair
  for (std::size_t n = 0; n < c0.u_gt.size(); ++n)
    if (c0.y_t1gd[n] != 0.0) CHECK(c0.y_flair[n] == 1.0);
  // FET support and range
  for (std::size_t n = 0; n < c0.u_gt.size(); ++n) {
    if (c0.y_fet[n] != 0.0) {
      CHECK(c0.fet[n] > 0.0);
      CHECK(c0.fet[n] <= gt.m - gt.A + 1e-12);
    } else {
      CHECK(c0.fet[n] == 0.0);
    }
  }

  // m = 1, A = 1: empty FET mask (u <= 1 everywhere)
  SyntheticCaseParams gt2 = gt;
  gt2.A = 1.0;
  SyntheticCase c2 = make_synthetic_case(gt2, geo, off, 3);
  CHECK(c2.y_fet.count() == 0);

  // noisy masks differ from clean ones but stay plausible
  NoiseConfig on;
  on.seed = 3;
  SyntheticCase cn = make_synthetic_case(gt, geo, on, 3);
  std::size_t diff = 0;
  for (std::size_t n = 0; n < cn.u_gt.size(); ++n)
    diff += (cn.y_flair[n] != c0.y_flair[n]);
  CHECK(diff > 0);
  for (double v : cn.u_noisy.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  SyntheticCaseParams bad = gt;
  bad.u_c_flair = 0.0;
  CHECK_THROWS_AS(make_synthetic_case(bad, geo, off, 3), ConfigError);
}
