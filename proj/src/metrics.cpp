#include "gbm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gbm {

double dice(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_grid(b)) throw ConfigError("dice: grid mismatch");
  std::size_t na = 0, nb = 0, ni = 0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    bool va = a[n] != 0.0, vb = b[n] != 0.0;
    na += va;
    nb += vb;
    ni += va && vb;
  }
  if (na + nb == 0) throw NumericError("dice: both masks empty");
  return 2.0 * double(ni) / double(na + nb);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ConfigError("pearson: need >= 2 paired samples");
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(a.size());
  mb /= double(b.size());
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0)
    throw NumericError("pearson: zero variance (undefined correlation)");
  return sab / std::sqrt(saa * sbb);
}

double corr_fet(const ScalarVolume& pred, const ScalarVolume& fet, const BinaryMask& y_fet,
                FetCorrMode mode) {
  if (!pred.same_grid(fet) || !pred.same_grid(y_fet)) throw ConfigError("corr_fet: grid mismatch");
  (void)mode;  // pred is already m*phi*u - A (Model) or phi*u (Density)
  std::vector<double> a, b;
  for (std::size_t n = 0; n < pred.size(); ++n)
    if (y_fet[n] != 0.0) {
      a.push_back(pred[n]);
      b.push_back(fet[n]);
    }
  if (a.size() < 2) throw NumericError("corr_fet: fewer than 2 masked voxels");
  return pearson(a, b);
}

namespace {

// 1D lower-envelope distance transform (Felzenszwalb-Huttenlocher) with
// anisotropic weight w = spacing^2: out[i] = min_j (f[j] + w*(i-j)^2).
// Background cells carry kFar instead of infinity so the parabola
// intersections stay finite.
constexpr double kFar = 1e30;

void dt1d(const std::vector<double>& f, double w, std::vector<double>& out,
          std::vector<int>& v, std::vector<double>& z) {
  const int n = int(f.size());
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      int p = v[k];
      s = ((f[q] + w * q * q) - (f[p] + w * p * p)) / (2.0 * w * (q - p));
      if (k > 0 && s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    if (k == 0 && s <= z[0]) s = -std::numeric_limits<double>::infinity();
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    int p = v[k];
    out[q] = w * (q - p) * (q - p) + f[p];
  }
}

}  // namespace

ScalarVolume distance_transform_sq(const BinaryMask& mask) {
  const Index3 d = mask.dims();
  const Vec3 h = mask.spacing();
  ScalarVolume dist(d, h, mask.origin());
  for (std::size_t n = 0; n < mask.size(); ++n) dist[n] = mask[n] != 0.0 ? 0.0 : kFar;

  std::vector<double> f, out;
  std::vector<int> v;
  std::vector<double> z;
  // x pass
  f.resize(d[0]);
  out.resize(d[0]);
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) f[i] = dist.at(i, j, k);
      dt1d(f, h[0] * h[0], out, v, z);
      for (int i = 0; i < d[0]; ++i) dist.at(i, j, k) = out[i];
    }
  // y pass
  f.resize(d[1]);
  out.resize(d[1]);
  for (int k = 0; k < d[2]; ++k)
    for (int i = 0; i < d[0]; ++i) {
      for (int j = 0; j < d[1]; ++j) f[j] = dist.at(i, j, k);
      dt1d(f, h[1] * h[1], out, v, z);
      for (int j = 0; j < d[1]; ++j) dist.at(i, j, k) = out[j];
    }
  // z pass
  f.resize(d[2]);
  out.resize(d[2]);
  for (int j = 0; j < d[1]; ++j)
    for (int i = 0; i < d[0]; ++i) {
      for (int k = 0; k < d[2]; ++k) f[k] = dist.at(i, j, k);
      dt1d(f, h[2] * h[2], out, v, z);
      for (int k = 0; k < d[2]; ++k) dist.at(i, j, k) = out[k];
    }
  for (auto& x : dist.data()) x = std::min(x, kFar);
  return dist;
}

BinaryMask rtog_ctv(const BinaryMask& y_flair, double margin_mm) {
  if (y_flair.count() == 0) throw NumericError("rtog_ctv: empty mask");
  ScalarVolume d2 = distance_transform_sq(y_flair);
  BinaryMask out(y_flair.dims(), y_flair.spacing(), y_flair.origin());
  const double m2 = margin_mm * margin_mm;
  for (std::size_t n = 0; n < d2.size(); ++n) out[n] = d2[n] <= m2 ? 1.0 : 0.0;
  return out;
}

BinaryMask personalized_ctv(const ScalarVolume& u_fdm, double threshold) {
  BinaryMask out(u_fdm.dims(), u_fdm.spacing(), u_fdm.origin());
  for (std::size_t n = 0; n < u_fdm.size(); ++n) out[n] = u_fdm[n] >= threshold ? 1.0 : 0.0;
  return out;
}

CtvStats ctv_stats(const BinaryMask& ctv, const BinaryMask& recurrence) {
  if (!ctv.same_grid(recurrence)) throw ConfigError("ctv_stats: grid mismatch");
  std::size_t nrec = 0, ncov = 0, nctv = 0;
  for (std::size_t n = 0; n < ctv.size(); ++n) {
    bool c = ctv[n] != 0.0, r = recurrence[n] != 0.0;
    nctv += c;
    nrec += r;
    ncov += c && r;
  }
  if (nrec == 0) throw NumericError("ctv_stats: empty recurrence mask");
  return {double(nctv) * ctv.voxel_volume(), double(ncov) / double(nrec)};
}

namespace {

struct P2 {
  double x, y;
};

double cross(const P2& o, const P2& a, const P2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Monotone-chain convex hull; returns polygon area (shoelace).
double hull_area(std::vector<P2> pts) {
  std::sort(pts.begin(), pts.end(), [](const P2& a, const P2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const P2& a, const P2& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  const int n = int(pts.size());
  if (n < 3) return 0.0;
  std::vector<P2> hull(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  int lower = k + 1;
  for (int i = n - 2; i >= 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const P2& a = hull[i];
    const P2& b = hull[(i + 1) % hull.size()];
    area += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(area);
}

}  // namespace

double solidity(const BinaryMask& y_fet) {
  // pick the axial slice with maximal area
  int best_k = -1;
  std::size_t best_cnt = 0;
  for (int k = 0; k < y_fet.nz(); ++k) {
    std::size_t c = 0;
    for (int j = 0; j < y_fet.ny(); ++j)
      for (int i = 0; i < y_fet.nx(); ++i) c += (y_fet.at(i, j, k) != 0.0);
    if (c > best_cnt) {
      best_cnt = c;
      best_k = k;
    }
  }
  if (best_k < 0) throw NumericError("solidity: empty mask");
  const double hx = y_fet.spacing()[0], hy = y_fet.spacing()[1];
  // hull over pixel corners keeps the ratio in (0, 1]
  std::vector<P2> corners;
  for (int j = 0; j < y_fet.ny(); ++j)
    for (int i = 0; i < y_fet.nx(); ++i)
      if (y_fet.at(i, j, best_k) != 0.0) {
        double x = i * hx, y = j * hy;
        corners.push_back({x - 0.5 * hx, y - 0.5 * hy});
        corners.push_back({x + 0.5 * hx, y - 0.5 * hy});
        corners.push_back({x - 0.5 * hx, y + 0.5 * hy});
        corners.push_back({x + 0.5 * hx, y + 0.5 * hy});
      }
  double region = double(best_cnt) * hx * hy;
  double hull = hull_area(std::move(corners));
  if (hull <= 0.0) return 1.0;  // single pixel or collinear row
  return std::min(1.0, region / hull);
}

}  // namespace gbm
