#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbm {

// Error categories, mapped to CLI exit codes by the driver.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

struct VoxelIndex {
  int i = 0, j = 0, k = 0;
};

// World coordinates in mm. world = origin + index * spacing for grid nodes.
struct WorldPoint {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline WorldPoint operator-(const WorldPoint& a, const WorldPoint& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}
inline double norm(const WorldPoint& p) {
  return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
}

// 3D scalar field on a regular grid, x fastest in memory, double precision
// in memory, f32 on disk.
class ScalarVolume {
 public:
  ScalarVolume() = default;
  ScalarVolume(Index3 dims, Vec3 spacing_mm, Vec3 origin_mm = {0, 0, 0});

  int nx() const { return dims_[0]; }
  int ny() const { return dims_[1]; }
  int nz() const { return dims_[2]; }
  const Index3& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::size_t size() const { return data_.size(); }

  double& at(int i, int j, int k) { return data_[idx(i, j, k)]; }
  double at(int i, int j, int k) const { return data_[idx(i, j, k)]; }
  double& operator[](std::size_t n) { return data_[n]; }
  double operator[](std::size_t n) const { return data_[n]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::size_t idx(int i, int j, int k) const {
    return std::size_t(i) + std::size_t(dims_[0]) * (std::size_t(j) + std::size_t(dims_[1]) * k);
  }
  WorldPoint world(int i, int j, int k) const {
    return {origin_[0] + i * spacing_[0], origin_[1] + j * spacing_[1],
            origin_[2] + k * spacing_[2]};
  }
  bool same_grid(const ScalarVolume& o) const {
    return dims_ == o.dims_ && spacing_ == o.spacing_ && origin_ == o.origin_;
  }
  double min_spacing() const {
    return std::min(spacing_[0], std::min(spacing_[1], spacing_[2]));
  }
  double voxel_volume() const { return spacing_[0] * spacing_[1] * spacing_[2]; }

  // Throws NumericError if any stored value is NaN/Inf.
  void check_finite(const std::string& what) const;

 private:
  Index3 dims_{0, 0, 0};
  Vec3 spacing_{1, 1, 1};
  Vec3 origin_{0, 0, 0};
  std::vector<double> data_;
};

// Mask with values in {0,1}, same grid conventions as ScalarVolume.
class BinaryMask : public ScalarVolume {
 public:
  BinaryMask() = default;
  BinaryMask(Index3 dims, Vec3 spacing_mm, Vec3 origin_mm = {0, 0, 0})
      : ScalarVolume(dims, spacing_mm, origin_mm) {}
  explicit BinaryMask(const ScalarVolume& v);  // validates {0,1}

  std::size_t count() const;  // number of 1-voxels
};

struct GradientField {
  ScalarVolume gx, gy, gz;  // d/dx, d/dy, d/dz in 1/mm units
};

// VOL1 file pair: <stem>.json header + <stem>.raw little-endian payload.
void save_volume(const ScalarVolume& vol, const std::string& stem);
void save_mask(const BinaryMask& mask, const std::string& stem);
ScalarVolume load_volume(const std::string& stem);
BinaryMask load_mask(const std::string& stem);

// Trilinear interpolation; p must lie inside the grid bounding box.
double trilinear_sample(const ScalarVolume& vol, const WorldPoint& p);
bool inside_box(const ScalarVolume& vol, const WorldPoint& p);

// Second-order central differences on interior nodes, one-sided first-order
// on boundary nodes. Requires every dim >= 3.
GradientField central_gradient(const ScalarVolume& vol);

WorldPoint mask_centroid(const BinaryMask& mask);
double max_radius(const BinaryMask& mask, const WorldPoint& center);

}  // namespace gbm
