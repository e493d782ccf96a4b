#include "gbm/charfit.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gbm {

using nlohmann::json;

LookupConfig LookupConfig::defaults() {
  LookupConfig c;
  for (int d = 2; d <= 40; d += 2) c.d_over_rho_grid.push_back(double(d));
  for (int L = 10; L <= 90; L += 5) c.L_grid.push_back(double(L));
  return c;
}

SegFeatures extract_features(const BinaryMask& y_t1gd, const BinaryMask& y_flair) {
  if (!y_t1gd.same_grid(y_flair)) throw ConfigError("extract_features: grid mismatch");
  SegFeatures f;
  f.centroid_mm = mask_centroid(y_t1gd);  // tumor-core centroid
  f.R_seg_t1gd = max_radius(y_t1gd, f.centroid_mm);
  f.R_seg_flair = max_radius(y_flair, f.centroid_mm);
  return f;
}

std::pair<double, double> nondim_from_char(double d_over_rho, double L_bar) {
  if (d_over_rho <= 0.0 || L_bar <= 0.0)
    throw ConfigError("nondim_from_char: inputs must be positive");
  double cal_D = std::sqrt(d_over_rho) / L_bar;
  return {cal_D, 1.0 / cal_D};
}

CharacteristicParams make_char_params(double d_over_rho, double L_bar) {
  auto [cd, cr] = nondim_from_char(d_over_rho, L_bar);
  return {d_over_rho, L_bar, cd, cr};
}

std::pair<double, double> mu_from_dimensional(double D, double rho, double t_end,
                                              const CharacteristicParams& chr) {
  if (D <= 0.0 || rho <= 0.0 || t_end <= 0.0)
    throw ConfigError("mu_from_dimensional: inputs must be positive");
  double sq = std::sqrt(chr.d_over_rho);
  double mu_D = D * t_end / (chr.L_bar_mm * sq);
  double mu_R = rho * t_end * sq / chr.L_bar_mm;
  return {mu_D, mu_R};
}

LookupTable build_lookup_table(const LookupConfig& cfg) {
  if (cfg.d_over_rho_grid.empty() || cfg.L_grid.empty())
    throw ConfigError("build_lookup_table: empty grid");
  for (double v : cfg.d_over_rho_grid)
    if (v <= 0.0) throw ConfigError("build_lookup_table: grid values must be positive");
  for (double v : cfg.L_grid)
    if (v <= 0.0) throw ConfigError("build_lookup_table: grid values must be positive");

  LookupTable table;
  table.config = cfg;
  const std::size_t nd = cfg.d_over_rho_grid.size(), nL = cfg.L_grid.size();
  table.entries.resize(nd * nL);
#pragma omp parallel for collapse(2) schedule(dynamic)
  for (std::size_t li = 0; li < nL; ++li)
    for (std::size_t di = 0; di < nd; ++di) {
      double d = cfg.d_over_rho_grid[di], L = cfg.L_grid[li];
      LookupEntry e{d, L, 0.0, 0.0, false};
      try {
        auto [cd, cr] = nondim_from_char(d, L);
        SphericalProfile prof = solve_spherical(cd, cr, L, cfg.nr, 0.0);
        e.R_sph_flair = threshold_radius(prof, cfg.u_c_flair) + cfg.radius_offset_mm;
        e.R_sph_t1gd = threshold_radius(prof, cfg.u_c_t1gd) + cfg.radius_offset_mm;
        e.valid = true;
      } catch (const NumericError&) {
        e.valid = false;  // unstable entry excluded from the search
      }
      table.entries[li * nd + di] = e;
    }
  return table;
}

CharacteristicParams grid_search(const SegFeatures& f, const LookupTable& table) {
  if (f.R_seg_flair <= 0.0 || f.R_seg_t1gd <= 0.0)
    throw ConfigError("grid_search: segmentation radii must be positive");
  const LookupEntry* best = nullptr;
  double best_err = 0.0;
  for (const auto& e : table.entries) {
    if (!e.valid) continue;
    double err = std::abs(f.R_seg_flair - e.R_sph_flair) / f.R_seg_flair +
                 std::abs(f.R_seg_t1gd - e.R_sph_t1gd) / f.R_seg_t1gd;
    bool better = false;
    if (!best || err < best_err - 1e-12) {
      better = true;
    } else if (err < best_err + 1e-12) {  // tie: smaller L, then smaller d
      if (e.L_bar_mm < best->L_bar_mm - 1e-12 ||
          (std::abs(e.L_bar_mm - best->L_bar_mm) < 1e-12 &&
           e.d_over_rho < best->d_over_rho - 1e-12))
        better = true;
    }
    if (better) {
      best = &e;
      best_err = err;
    }
  }
  if (!best) throw NumericError("grid_search: no valid lookup entries");
  return make_char_params(best->d_over_rho, best->L_bar_mm);
}

std::string lookup_config_hash(const LookupConfig& cfg) {
  // FNV-1a over the exact double bits of everything that shapes the table
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  auto mixd = [&](double x) {
    std::uint64_t v;
    std::memcpy(&v, &x, 8);
    mix(v);
  };
  for (double v : cfg.d_over_rho_grid) mixd(v);
  mix(0xabcdull);
  for (double v : cfg.L_grid) mixd(v);
  mix(std::uint64_t(cfg.nr));
  mixd(cfg.u_c_flair);
  mixd(cfg.u_c_t1gd);
  mixd(cfg.radius_offset_mm);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

void save_lookup_table(const LookupTable& table, const std::string& path) {
  json j;
  j["hash"] = lookup_config_hash(table.config);
  j["d_over_rho_grid"] = table.config.d_over_rho_grid;
  j["L_grid"] = table.config.L_grid;
  j["nr"] = table.config.nr;
  j["u_c_flair"] = table.config.u_c_flair;
  j["u_c_t1gd"] = table.config.u_c_t1gd;
  j["radius_offset_mm"] = table.config.radius_offset_mm;
  json rows = json::array();
  for (const auto& e : table.entries)
    rows.push_back({e.d_over_rho, e.L_bar_mm, e.R_sph_flair, e.R_sph_t1gd, int(e.valid)});
  j["entries"] = rows;
  std::ofstream f(path);
  if (!f) throw MissingInput("cannot write lookup table: " + path);
  f << j.dump() << "\n";
}

std::optional<LookupTable> load_lookup_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) return std::nullopt;
  json j;
  try {
    f >> j;
  } catch (const json::exception&) {
    return std::nullopt;
  }
  LookupTable t;
  t.config.d_over_rho_grid = j.at("d_over_rho_grid").get<std::vector<double>>();
  t.config.L_grid = j.at("L_grid").get<std::vector<double>>();
  t.config.nr = j.at("nr").get<int>();
  t.config.u_c_flair = j.at("u_c_flair").get<double>();
  t.config.u_c_t1gd = j.at("u_c_t1gd").get<double>();
  t.config.radius_offset_mm = j.at("radius_offset_mm").get<double>();
  for (const auto& row : j.at("entries"))
    t.entries.push_back({row.at(0).get<double>(), row.at(1).get<double>(),
                         row.at(2).get<double>(), row.at(3).get<double>(),
                         row.at(4).get<int>() != 0});
  if (j.at("hash").get<std::string>() != lookup_config_hash(t.config)) return std::nullopt;
  return t;
}

LookupTable load_or_build_lookup_table(const LookupConfig& cfg, const std::string& cache_dir) {
  if (cache_dir.empty()) return build_lookup_table(cfg);
  std::filesystem::create_directories(cache_dir);
  std::string path = cache_dir + "/lookup_" + lookup_config_hash(cfg) + ".json";
  if (auto t = load_lookup_table(path)) return *t;
  LookupTable t = build_lookup_table(cfg);
  save_lookup_table(t, path);
  return t;
}

}  // namespace gbm
