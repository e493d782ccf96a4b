#include "gbm/sample.hpp"

#include <cmath>
#include <fstream>

#include "gbm/rng.hpp"

namespace gbm {

double enclosing_radius(const ScalarVolume& u_char, const WorldPoint& x0, double threshold) {
  double best = -1.0;
  for (int k = 0; k < u_char.nz(); ++k)
    for (int j = 0; j < u_char.ny(); ++j)
      for (int i = 0; i < u_char.nx(); ++i)
        if (u_char.at(i, j, k) > threshold)
          best = std::max(best, norm(u_char.world(i, j, k) - x0));
  if (best < 0.0)
    throw NumericError("enclosing_radius: no voxel above threshold " +
                       std::to_string(threshold));
  const auto& h = u_char.spacing();
  return best + std::sqrt(h[0] * h[0] + h[1] * h[1] + h[2] * h[2]);
}

double truncated_exp_mean(double lambda) {
  double q = std::exp(-lambda);
  return 1.0 / lambda - q / (1.0 - q);
}

double truncated_exp_cdf(double lambda, double t) {
  return (1.0 - std::exp(-lambda * t)) / (1.0 - std::exp(-lambda));
}

std::vector<SpaceTimePoint> sample_residual_points(const SamplerConfig& cfg,
                                                   const WorldPoint& x0, double R) {
  if (R <= 0.0) throw ConfigError("sample_residual_points: R must be > 0");
  Rng rng(cfg.seed);
  const double lam = cfg.lambda_t;
  const double omq = 1.0 - std::exp(-lam);
  std::vector<SpaceTimePoint> pts(cfg.n_residual);
  for (auto& p : pts) {
    p.t = -std::log(1.0 - rng.uniform() * omq) / lam;
    double r = rng.uniform() * R;
    double z = rng.uniform(-1.0, 1.0);
    double a = rng.uniform(0.0, 2.0 * M_PI);
    double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    p.x_mm = {x0.x + r * s * std::cos(a), x0.y + r * s * std::sin(a), x0.z + r * z};
  }
  return pts;
}

DataPointSample sample_data_points(const SamplerConfig& cfg, const ScalarVolume& grid,
                                   const WorldPoint& x0, double R) {
  std::vector<WorldPoint> region;
  for (int k = 0; k < grid.nz(); ++k)
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) {
        WorldPoint w = grid.world(i, j, k);
        if (norm(w - x0) <= R) region.push_back(w);
      }
  if (region.empty()) throw NumericError("sample_data_points: empty region");
  DataPointSample out;
  if (region.size() <= std::size_t(cfg.n_data)) {
    out.points = std::move(region);
    out.exhausted = true;
    return out;
  }
  // partial Fisher-Yates: first n_data entries become the sample
  Rng rng(cfg.seed);
  for (int i = 0; i < cfg.n_data; ++i) {
    std::size_t j = i + rng.below(region.size() - i);
    std::swap(region[i], region[j]);
  }
  region.resize(cfg.n_data);
  out.points = std::move(region);
  return out;
}

void dump_points_csv(const std::vector<SpaceTimePoint>& pts, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw MissingInput("cannot write: " + path);
  f << "x_mm,y_mm,z_mm,t\n";
  for (const auto& p : pts) {
    char line[128];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", p.x_mm.x, p.x_mm.y,
                  p.x_mm.z, p.t);
    f << line;
  }
}

}  // namespace gbm
