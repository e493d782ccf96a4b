#include <cmath>

#include "doctest.h"
#include "gbm/metrics.hpp"

using namespace gbm;

namespace {

BinaryMask ball(Index3 dims, Vec3 h, const WorldPoint& c, double r) {
  BinaryMask m(dims, h);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i)
        if (norm(m.world(i, j, k) - c) <= r) m.at(i, j, k) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("dice identities") {
  BinaryMask a = ball({24, 24, 24}, {1, 1, 1}, {12, 12, 12}, 6.0);
  CHECK(dice(a, a) == 1.0);
  BinaryMask b({24, 24, 24}, {1, 1, 1});
  b.at(0, 0, 0) = 1.0;
  CHECK(dice(a, b) == 0.0);

  BinaryMask c({4, 1, 1}, {1, 1, 1}), d({4, 1, 1}, {1, 1, 1});
  c.at(0, 0, 0) = c.at(1, 0, 0) = 1.0;
  d.at(1, 0, 0) = d.at(2, 0, 0) = 1.0;
  CHECK(dice(c, d) == doctest::Approx(0.5));
  CHECK(dice(c, d) == dice(d, c));

  BinaryMask e({4, 1, 1}, {1, 1, 1});
  CHECK_THROWS_AS(dice(e, e), NumericError);
}

TEST_CASE("pearson correlation and corr_fet") {
  std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 10};
  CHECK(pearson(a, b) == doctest::Approx(1.0));
  std::vector<double> nb{-2, -4, -6, -8, -10};
  CHECK(pearson(a, nb) == doctest::Approx(-1.0));
  // invariance under positive affine transforms
  std::vector<double> c{0.5, 1.3, 0.9, 2.0, 1.1}, d{3.1, 0.4, 1.2, 2.2, 0.8};
  double r0 = pearson(c, d);
  std::vector<double> c2 = c;
  for (auto& v : c2) v = 2.5 * v + 7.0;
  CHECK(pearson(c2, d) == doctest::Approx(r0).epsilon(1e-12));
  std::vector<double> flat{1, 1, 1, 1, 1};
  CHECK_THROWS_AS(pearson(a, flat), NumericError);

  ScalarVolume pred({5, 1, 1}, {1, 1, 1}), fet({5, 1, 1}, {1, 1, 1});
  BinaryMask mask({5, 1, 1}, {1, 1, 1});
  for (int i = 0; i < 5; ++i) {
    pred.at(i, 0, 0) = 1.0 + i;
    fet.at(i, 0, 0) = 2.0 * (1.0 + i);
    mask.at(i, 0, 0) = 1.0;
  }
  CHECK(corr_fet(pred, fet, mask, FetCorrMode::Density) == doctest::Approx(1.0));
  for (int i = 0; i < 5; ++i) fet.at(i, 0, 0) = -pred.at(i, 0, 0);
  CHECK(corr_fet(pred, fet, mask, FetCorrMode::Density) == doctest::Approx(-1.0));
}

TEST_CASE("rtog ctv distances and monotonicity") {
  BinaryMask m({40, 40, 40}, {1.5, 1.5, 1.5});
  m.at(20, 20, 20) = 1.0;
  BinaryMask ctv = rtog_ctv(m, 20.0);
  WorldPoint c = m.world(20, 20, 20);
  for (int k = 0; k < 40; k += 2)
    for (int j = 0; j < 40; j += 2)
      for (int i = 0; i < 40; i += 2) {
        double r = norm(m.world(i, j, k) - c);
        if (r <= 19.9) CHECK(ctv.at(i, j, k) == 1.0);
        if (r >= 20.1) CHECK(ctv.at(i, j, k) == 0.0);
      }
  // input contained, margin 0 equals input
  BinaryMask blob = ball({40, 40, 40}, {1.5, 1.5, 1.5}, c, 9.0);
  BinaryMask grown = rtog_ctv(blob, 7.0);
  BinaryMask zero = rtog_ctv(blob, 0.0);
  std::size_t viol = 0;
  for (std::size_t n = 0; n < blob.size(); ++n) {
    if (blob[n] != 0.0 && grown[n] == 0.0) ++viol;
    CHECK(zero[n] == blob[n]);
  }
  CHECK(viol == 0);
  // monotone in margin
  BinaryMask g2 = rtog_ctv(blob, 12.0);
  for (std::size_t n = 0; n < blob.size(); ++n)
    if (grown[n] != 0.0) CHECK(g2[n] == 1.0);
  BinaryMask empty({8, 8, 8}, {1, 1, 1});
  CHECK_THROWS_AS(rtog_ctv(empty, 5.0), NumericError);
}

TEST_CASE("distance transform handles anisotropic spacing") {
  BinaryMask m({21, 21, 5}, {1.0, 2.0, 3.0});
  m.at(10, 10, 2) = 1.0;
  ScalarVolume d2 = distance_transform_sq(m);
  CHECK(d2.at(10, 10, 2) == 0.0);
  CHECK(d2.at(13, 10, 2) == doctest::Approx(9.0));    // 3 voxels * 1mm
  CHECK(d2.at(10, 13, 2) == doctest::Approx(36.0));   // 3 voxels * 2mm
  CHECK(d2.at(10, 10, 4) == doctest::Approx(36.0));   // 2 voxels * 3mm
  CHECK(d2.at(12, 11, 3) == doctest::Approx(4 + 4 + 9));
}

TEST_CASE("personalized ctv and stats") {
  ScalarVolume u({30, 30, 30}, {2, 2, 2});
  CHECK(personalized_ctv(u, 0.01).count() == 0);
  for (auto& v : u.data()) v = 0.5;
  CHECK(personalized_ctv(u, 0.01).count() == u.size());

  WorldPoint c = u.world(15, 15, 15);
  for (int k = 0; k < 30; ++k)
    for (int j = 0; j < 30; ++j)
      for (int i = 0; i < 30; ++i)
        u.at(i, j, k) = std::exp(-norm(u.world(i, j, k) - c) / 10.857);  // 0.01 at r=50
  BinaryMask ctv = personalized_ctv(u, 0.01);
  double rmax = max_radius(ctv, c);
  CHECK(rmax <= 50.0 + 3.5);
  CHECK(rmax >= 50.0 - 13.5);  // box corners clip the ball; radius along axes
  // efficiency identities
  BinaryMask rec = ball({30, 30, 30}, {2, 2, 2}, c, 12.0);
  CtvStats s1 = ctv_stats(ctv, rec);
  CHECK(s1.efficiency == doctest::Approx(1.0));
  BinaryMask far({30, 30, 30}, {2, 2, 2});
  far.at(0, 0, 0) = 1.0;
  BinaryMask small_ctv = ball({30, 30, 30}, {2, 2, 2}, c, 5.0);
  CHECK(ctv_stats(small_ctv, far).efficiency == 0.0);
  // partial coverage: 10 voxel recurrence, 4 covered
  BinaryMask rec10({30, 30, 30}, {2, 2, 2}), ctv4({30, 30, 30}, {2, 2, 2});
  for (int i = 0; i < 10; ++i) rec10.at(i, 0, 0) = 1.0;
  for (int i = 0; i < 4; ++i) ctv4.at(i, 0, 0) = 1.0;
  CHECK(ctv_stats(ctv4, rec10).efficiency == doctest::Approx(0.4));
  CHECK(ctv_stats(ctv4, rec10).volume_mm3 == doctest::Approx(4 * 8.0));
  BinaryMask norec({30, 30, 30}, {2, 2, 2});
  CHECK_THROWS_AS(ctv_stats(ctv4, norec), NumericError);
}

TEST_CASE("solidity on canonical shapes") {
  // filled disk: solidity 1 within discretization error
  BinaryMask disk({64, 64, 3}, {1, 1, 1});
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i) {
      double dx = i - 31.5, dy = j - 31.5;
      if (dx * dx + dy * dy <= 20.0 * 20.0) disk.at(i, j, 1) = 1.0;
    }
  CHECK(solidity(disk) == doctest::Approx(1.0).epsilon(0.03));

  // annulus radii 5 and 10: area ratio (100-25)/100 = 0.75 within 5%
  BinaryMask ann({64, 64, 3}, {1, 1, 1});
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i) {
      double dx = i - 31.5, dy = j - 31.5;
      double r2 = dx * dx + dy * dy;
      if (r2 <= 100.0 && r2 >= 25.0) ann.at(i, j, 1) = 1.0;
    }
  CHECK(solidity(ann) == doctest::Approx(0.75).epsilon(0.05));

  // single pixel
  BinaryMask one({8, 8, 8}, {1, 1, 1});
  one.at(3, 4, 5) = 1.0;
  CHECK(solidity(one) == 1.0);
  // collinear row
  BinaryMask row({8, 8, 8}, {1, 1, 1});
  for (int i = 1; i < 6; ++i) row.at(i, 2, 2) = 1.0;
  CHECK(solidity(row) == doctest::Approx(1.0));
  BinaryMask empty({8, 8, 8}, {1, 1, 1});
  CHECK_THROWS_AS(solidity(empty), NumericError);
}
