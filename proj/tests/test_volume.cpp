#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gbm/volume.hpp"

using namespace gbm;
namespace fs = std::filesystem;

namespace {

std::string tmp_stem(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "gbm_vol_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  std::vector<char> b(std::size_t(f.tellg()));
  f.seekg(0);
  f.read(b.data(), std::streamsize(b.size()));
  return b;
}

}  // namespace

TEST_CASE("vol1 round trip is bit exact") {
  ScalarVolume v({2, 2, 2}, {1.5, 2.0, 2.5}, {-1, 0, 3});
  for (std::size_t n = 0; n < 8; ++n) v[n] = double(float(0.1 * double(n) - 0.3));
  std::string stem = tmp_stem("rt");
  save_volume(v, stem);
  ScalarVolume w = load_volume(stem);
  CHECK(w.dims() == v.dims());
  CHECK(w.spacing() == v.spacing());
  CHECK(w.origin() == v.origin());
  for (std::size_t n = 0; n < 8; ++n) CHECK(w[n] == v[n]);

  std::string stem2 = tmp_stem("rt2");
  save_volume(w, stem2);
  CHECK(read_bytes(stem + ".raw") == read_bytes(stem2 + ".raw"));
}

TEST_CASE("load decodes x-fastest order") {
  std::string stem = tmp_stem("order");
  {
    std::ofstream h(stem + ".json");
    h << R"({"magic":"VOL1","dtype":"f32","dims":[2,2,2],"spacing_mm":[1,1,1],)"
      << R"("origin_mm":[0,0,0],"order":"x-fastest"})";
    std::ofstream r(stem + ".raw", std::ios::binary);
    for (int i = 0; i < 8; ++i) {
      float x = float(i);
      r.write(reinterpret_cast<const char*>(&x), 4);
    }
  }
  ScalarVolume v = load_volume(stem);
  CHECK(v.at(1, 0, 0) == 1.0);
  CHECK(v.at(0, 1, 0) == 2.0);
  CHECK(v.at(0, 0, 1) == 4.0);
}

TEST_CASE("vol1 error paths") {
  std::string stem = tmp_stem("bad");
  CHECK_THROWS_AS(load_volume(tmp_stem("nonexistent")), MissingInput);

  {  // magic mismatch
    std::ofstream h(stem + ".json");
    h << R"({"magic":"XXXX","dtype":"f32","dims":[1,1,1],"spacing_mm":[1,1,1]})";
    std::ofstream r(stem + ".raw", std::ios::binary);
    float x = 0;
    r.write(reinterpret_cast<const char*>(&x), 4);
  }
  CHECK_THROWS_AS(load_volume(stem), ConfigError);

  {  // truncated raw: 4 bytes short of the dims product
    std::ofstream h(stem + ".json");
    h << R"({"magic":"VOL1","dtype":"f32","dims":[2,2,2],"spacing_mm":[1,1,1]})";
    std::ofstream r(stem + ".raw", std::ios::binary);
    for (int i = 0; i < 7; ++i) {
      float x = 0;
      r.write(reinterpret_cast<const char*>(&x), 4);
    }
  }
  CHECK_THROWS_AS(load_volume(stem), ConfigError);

  {  // u8 with values outside {0,1} rejected as mask
    std::ofstream h(stem + ".json");
    h << R"({"magic":"VOL1","dtype":"u8","dims":[2,1,1],"spacing_mm":[1,1,1]})";
    std::ofstream r(stem + ".raw", std::ios::binary);
    unsigned char b[2] = {1, 7};
    r.write(reinterpret_cast<const char*>(b), 2);
  }
  CHECK_THROWS_AS(load_mask(stem), NumericError);
}

TEST_CASE("trilinear sampling") {
  ScalarVolume v({4, 4, 4}, {2, 2, 2}, {1, 1, 1});
  // f(x,y,z) = 2x + 3y - z reproduced exactly by trilinear interpolation
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) {
        WorldPoint w = v.world(i, j, k);
        v.at(i, j, k) = 2 * w.x + 3 * w.y - w.z;
      }
  CHECK(trilinear_sample(v, v.world(2, 1, 3)) == doctest::Approx(v.at(2, 1, 3)).epsilon(1e-14));
  WorldPoint p{2.7, 3.9, 5.1};
  CHECK(trilinear_sample(v, p) ==
        doctest::Approx(2 * p.x + 3 * p.y - p.z).epsilon(1e-12));

  ScalarVolume e({2, 2, 2}, {1, 1, 1});
  e.at(1, 0, 0) = 1.0;  // edge midpoint between 0 and 1
  CHECK(trilinear_sample(e, {0.5, 0, 0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(trilinear_sample(e, {3.0, 0, 0}), NumericError);
}

TEST_CASE("central gradient") {
  ScalarVolume c({4, 4, 4}, {1, 1, 1});
  for (auto& x : c.data()) x = 7.25;
  GradientField g = central_gradient(c);
  for (std::size_t n = 0; n < c.size(); ++n) {
    CHECK(g.gx[n] == 0.0);
    CHECK(g.gy[n] == 0.0);
    CHECK(g.gz[n] == 0.0);
  }

  // f = 5x: interior gradient exactly (5,0,0); boundary one-sided also exact
  ScalarVolume lin({5, 4, 4}, {0.7, 1.0, 1.3});
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 5; ++i) lin.at(i, j, k) = 5.0 * lin.world(i, j, k).x;
  GradientField gl = central_gradient(lin);
  for (std::size_t n = 0; n < lin.size(); ++n) {
    CHECK(gl.gx[n] == doctest::Approx(5.0).epsilon(1e-10));
    CHECK(gl.gy[n] == doctest::Approx(0.0));
  }

  // f = x^2: central difference at interior nodes equals 2x exactly
  ScalarVolume quad({7, 3, 3}, {0.5, 1, 1});
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 7; ++i) {
        double x = quad.world(i, j, k).x;
        quad.at(i, j, k) = x * x;
      }
  GradientField gq = central_gradient(quad);
  for (int i = 1; i < 6; ++i) {
    double x = quad.world(i, 1, 1).x;
    CHECK(gq.gx.at(i, 1, 1) == doctest::Approx(2.0 * x).epsilon(1e-12));
  }

  ScalarVolume small({2, 4, 4}, {1, 1, 1});
  CHECK_THROWS_AS(central_gradient(small), ConfigError);
}

TEST_CASE("mask centroid and max radius vs brute force") {
  BinaryMask m({9, 9, 9}, {1.5, 1.5, 1.5}, {-3, 0, 2});
  // 3x3x3 solid cube
  for (int k = 3; k < 6; ++k)
    for (int j = 3; j < 6; ++j)
      for (int i = 3; i < 6; ++i) m.at(i, j, k) = 1.0;
  WorldPoint c = mask_centroid(m);
  CHECK(c.x == doctest::Approx(m.world(4, 4, 4).x));
  CHECK(c.y == doctest::Approx(m.world(4, 4, 4).y));
  CHECK(c.z == doctest::Approx(m.world(4, 4, 4).z));

  // brute force agreement on an irregular mask
  BinaryMask irr({6, 6, 6}, {1, 2, 1});
  irr.at(0, 0, 0) = irr.at(5, 3, 2) = irr.at(2, 5, 5) = 1.0;
  WorldPoint cc = mask_centroid(irr);
  double sx = 0, sy = 0, sz = 0, best = -1;
  int cnt = 0;
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 6; ++i)
        if (irr.at(i, j, k) != 0) {
          WorldPoint w = irr.world(i, j, k);
          sx += w.x;
          sy += w.y;
          sz += w.z;
          ++cnt;
        }
  CHECK(cc.x == doctest::Approx(sx / cnt));
  CHECK(cc.y == doctest::Approx(sy / cnt));
  CHECK(cc.z == doctest::Approx(sz / cnt));
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 6; ++i)
        if (irr.at(i, j, k) != 0) best = std::max(best, norm(irr.world(i, j, k) - cc));
  CHECK(max_radius(irr, cc) == doctest::Approx(best));

  // single voxel 5 mm from a reference point
  BinaryMask one({8, 8, 8}, {1, 1, 1});
  one.at(5, 0, 0) = 1.0;
  CHECK(max_radius(one, {0, 0, 0}) == doctest::Approx(5.0));
  CHECK(max_radius(one, mask_centroid(one)) == doctest::Approx(0.0));

  BinaryMask empty({3, 3, 3}, {1, 1, 1});
  CHECK_THROWS_AS(mask_centroid(empty), NumericError);
  CHECK_THROWS_AS(max_radius(empty, {0, 0, 0}), NumericError);
}

TEST_CASE("solid ball max radius close to analytic") {
  BinaryMask m({31, 31, 31}, {1, 1, 1});
  WorldPoint c = m.world(15, 15, 15);
  for (int k = 0; k < 31; ++k)
    for (int j = 0; j < 31; ++j)
      for (int i = 0; i < 31; ++i)
        if (norm(m.world(i, j, k) - c) <= 10.0) m.at(i, j, k) = 1.0;
  double r = max_radius(m, c);
  CHECK(r <= 10.0 + 1e-12);
  CHECK(r >= 10.0 - std::sqrt(3.0));
}
