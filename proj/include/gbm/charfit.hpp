#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gbm/forward.hpp"
#include "gbm/volume.hpp"

namespace gbm {

struct CharacteristicParams {
  double d_over_rho = 0.0;  // mm^2
  double L_bar_mm = 0.0;
  double cal_D = 0.0;
  double cal_R = 0.0;
};

struct SegFeatures {
  WorldPoint centroid_mm;
  double R_seg_t1gd = 0.0;
  double R_seg_flair = 0.0;
};

struct LookupEntry {
  double d_over_rho = 0.0;
  double L_bar_mm = 0.0;
  double R_sph_flair = 0.0;
  double R_sph_t1gd = 0.0;
  bool valid = false;
};

struct LookupConfig {
  std::vector<double> d_over_rho_grid;  // default {2,4,...,40}
  std::vector<double> L_grid;           // default {10,15,...,90}
  int nr = 720;
  double u_c_flair = 0.35;
  double u_c_t1gd = 0.6;
  // Radii recorded as crossing + one voxel at the paper's image resolution;
  // calibrated against the published tables.
  double radius_offset_mm = 1.0;
  static LookupConfig defaults();
};

struct LookupTable {
  LookupConfig config;
  std::vector<LookupEntry> entries;  // L outer, d inner order
};

SegFeatures extract_features(const BinaryMask& y_t1gd, const BinaryMask& y_flair);

LookupTable build_lookup_table(const LookupConfig& cfg);

// Returns cached table if a file for this config hash exists, else builds
// and stores one. cache_dir may be empty to disable caching.
LookupTable load_or_build_lookup_table(const LookupConfig& cfg, const std::string& cache_dir);

std::string lookup_config_hash(const LookupConfig& cfg);
void save_lookup_table(const LookupTable& table, const std::string& path);
std::optional<LookupTable> load_lookup_table(const std::string& path);

// Minimizes |Rseg_F - Rsph_F|/Rseg_F + |Rseg_T - Rsph_T|/Rseg_T over valid
// entries; ties broken by smaller L_bar, then smaller d_over_rho.
CharacteristicParams grid_search(const SegFeatures& features, const LookupTable& table);

// calD = sqrt(d_over_rho)/L_bar, calR = 1/calD.
std::pair<double, double> nondim_from_char(double d_over_rho, double L_bar);
CharacteristicParams make_char_params(double d_over_rho, double L_bar);

// muD = D*t_end/(L*sqrt(d)), muR = rho*t_end*sqrt(d)/L; D [mm^2/day],
// rho [1/day], t_end [day]. Used for synthetic ground truth only.
std::pair<double, double> mu_from_dimensional(double D, double rho, double t_end,
                                              const CharacteristicParams& chr);

}  // namespace gbm
