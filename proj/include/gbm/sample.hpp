#pragma once

#include <cstdint>
#include <vector>

#include "gbm/loss.hpp"
#include "gbm/volume.hpp"

namespace gbm {

struct SamplerConfig {
  int n_residual = 20000;      // 5000 for fine-tuning
  int n_data = 5000;
  double lambda_t = 0.5;       // truncated-exponential rate on [0,1]
  double density_floor = 1e-3; // enclosing-radius threshold on ubar^FDM
  std::uint64_t seed = 0;
};

// Smallest R such that B(x0, R) contains every voxel with value > threshold,
// plus one voxel-diagonal margin.
double enclosing_radius(const ScalarVolume& u_char, const WorldPoint& x0, double threshold);

// t ~ truncated exponential on [0,1] (inverse CDF); direction uniform on the
// sphere, radius uniform on [0,R] (analytic limit of 1/r^2-reweighted
// uniform-ball sampling). Deterministic per seed.
std::vector<SpaceTimePoint> sample_residual_points(const SamplerConfig& cfg,
                                                   const WorldPoint& x0, double R);

// n_data voxel centers drawn uniformly without replacement from voxels of
// `grid` inside B(x0, R). Takes all of them (with a warning flag) when the
// region is smaller than n_data.
struct DataPointSample {
  std::vector<WorldPoint> points;
  bool exhausted = false;  // region had fewer voxels than requested
};
DataPointSample sample_data_points(const SamplerConfig& cfg, const ScalarVolume& grid,
                                   const WorldPoint& x0, double R);

double truncated_exp_mean(double lambda);
double truncated_exp_cdf(double lambda, double t);

void dump_points_csv(const std::vector<SpaceTimePoint>& pts, const std::string& path);

}  // namespace gbm
