#pragma once

#include "gbm/volume.hpp"

namespace gbm {

struct EvalReport {
  double dice_t1gd = 0.0;
  double dice_flair = 0.0;
  double corr_fet = 0.0;
  double ctv_rtog_volume_mm3 = 0.0;
  double ctv_rtog_efficiency = 0.0;
  double ctv_pers_volume_mm3 = 0.0;
  double ctv_pers_efficiency = 0.0;
  double solidity = 0.0;
};

double dice(const BinaryMask& a, const BinaryMask& b);

enum class FetCorrMode { Model, Density };  // correlate p against m*phi*u - A, or phi*u

double corr_fet(const ScalarVolume& pred, const ScalarVolume& fet, const BinaryMask& y_fet,
                FetCorrMode mode);

// Pearson correlation over masked voxels of two prepared vectors.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// All voxels within `margin_mm` Euclidean distance of the mask (exact
// anisotropic distance transform).
BinaryMask rtog_ctv(const BinaryMask& y_flair, double margin_mm = 20.0);

// Squared Euclidean distance (mm^2) to the nearest 1-voxel, exact.
ScalarVolume distance_transform_sq(const BinaryMask& mask);

BinaryMask personalized_ctv(const ScalarVolume& u_fdm, double threshold = 0.01);

struct CtvStats {
  double volume_mm3 = 0.0;
  double efficiency = 0.0;  // |REC && CTV| / |REC|
};
CtvStats ctv_stats(const BinaryMask& ctv, const BinaryMask& recurrence);

// Solidity of the FET region on the axial (z) slice with maximal area:
// area(region) / area(convex hull of the region's pixel squares).
double solidity(const BinaryMask& y_fet);

}  // namespace gbm
