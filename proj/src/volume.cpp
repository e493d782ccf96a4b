#include "gbm/volume.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace gbm {

using nlohmann::json;

ScalarVolume::ScalarVolume(Index3 dims, Vec3 spacing_mm, Vec3 origin_mm)
    : dims_(dims), spacing_(spacing_mm), origin_(origin_mm) {
  for (int d = 0; d < 3; ++d) {
    if (dims[d] <= 0) throw ConfigError("volume dims must be positive");
    if (spacing_mm[d] <= 0.0) throw ConfigError("volume spacing must be positive");
  }
  data_.assign(std::size_t(dims[0]) * dims[1] * dims[2], 0.0);
}

void ScalarVolume::check_finite(const std::string& what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) throw NumericError(what + ": non-finite voxel value");
  }
}

BinaryMask::BinaryMask(const ScalarVolume& v)
    : ScalarVolume(v.dims(), v.spacing(), v.origin()) {
  for (std::size_t n = 0; n < v.size(); ++n) {
    double x = v[n];
    if (x != 0.0 && x != 1.0)
      throw NumericError("mask value outside {0,1}: " + std::to_string(x));
    (*this)[n] = x;
  }
}

std::size_t BinaryMask::count() const {
  std::size_t c = 0;
  for (std::size_t n = 0; n < size(); ++n) c += ((*this)[n] != 0.0);
  return c;
}

namespace {

json header_json(const ScalarVolume& vol, const std::string& dtype) {
  json h;
  h["magic"] = "VOL1";
  h["dtype"] = dtype;
  h["dims"] = {vol.nx(), vol.ny(), vol.nz()};
  h["spacing_mm"] = {vol.spacing()[0], vol.spacing()[1], vol.spacing()[2]};
  h["origin_mm"] = {vol.origin()[0], vol.origin()[1], vol.origin()[2]};
  h["order"] = "x-fastest";
  return h;
}

void write_files(const ScalarVolume& vol, const std::string& stem,
                 const std::string& dtype) {
  std::ofstream hf(stem + ".json");
  if (!hf) throw MissingInput("cannot open for write: " + stem + ".json");
  hf << header_json(vol, dtype).dump(2) << "\n";
  std::ofstream rf(stem + ".raw", std::ios::binary);
  if (!rf) throw MissingInput("cannot open for write: " + stem + ".raw");
  if (dtype == "f32") {
    std::vector<float> buf(vol.size());
    for (std::size_t n = 0; n < vol.size(); ++n) buf[n] = float(vol[n]);
    rf.write(reinterpret_cast<const char*>(buf.data()),
             std::streamsize(buf.size() * sizeof(float)));
  } else {
    std::vector<std::uint8_t> buf(vol.size());
    for (std::size_t n = 0; n < vol.size(); ++n) buf[n] = std::uint8_t(vol[n]);
    rf.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  }
}

struct RawFile {
  json header;
  std::vector<char> bytes;
};

RawFile read_files(const std::string& stem) {
  std::ifstream hf(stem + ".json");
  if (!hf) throw MissingInput("missing header file: " + stem + ".json");
  json h;
  try {
    hf >> h;
  } catch (const json::exception& e) {
    throw ConfigError("bad VOL1 header " + stem + ".json: " + e.what());
  }
  if (!h.contains("magic") || h["magic"] != "VOL1")
    throw ConfigError("magic mismatch in " + stem + ".json (expected VOL1)");
  std::ifstream rf(stem + ".raw", std::ios::binary | std::ios::ate);
  if (!rf) throw MissingInput("missing raw file: " + stem + ".raw");
  auto sz = rf.tellg();
  rf.seekg(0);
  std::vector<char> bytes(static_cast<std::size_t>(sz));
  rf.read(bytes.data(), sz);
  return {h, std::move(bytes)};
}

ScalarVolume decode(const RawFile& f, const std::string& stem) {
  const json& h = f.header;
  auto d = h.at("dims");
  Index3 dims{d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
  auto s = h.at("spacing_mm");
  Vec3 spacing{s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
  Vec3 origin{0, 0, 0};
  if (h.contains("origin_mm")) {
    auto o = h["origin_mm"];
    origin = {o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()};
  }
  std::string dtype = h.at("dtype").get<std::string>();
  std::size_t n = std::size_t(dims[0]) * dims[1] * dims[2];
  std::size_t elem = (dtype == "f32") ? 4 : (dtype == "u8") ? 1 : 0;
  if (elem == 0) throw ConfigError("unknown dtype '" + dtype + "' in " + stem);
  if (f.bytes.size() != n * elem)
    throw ConfigError("length mismatch in " + stem + ".raw: header dims need " +
                      std::to_string(n * elem) + " bytes, file has " +
                      std::to_string(f.bytes.size()));
  ScalarVolume vol(dims, spacing, origin);
  if (dtype == "f32") {
    const float* p = reinterpret_cast<const float*>(f.bytes.data());
    for (std::size_t i = 0; i < n; ++i) vol[i] = double(p[i]);
  } else {
    const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(f.bytes.data());
    for (std::size_t i = 0; i < n; ++i) vol[i] = double(p[i]);
  }
  vol.check_finite(stem);
  return vol;
}

}  // namespace

void save_volume(const ScalarVolume& vol, const std::string& stem) {
  vol.check_finite(stem);
  write_files(vol, stem, "f32");
}

void save_mask(const BinaryMask& mask, const std::string& stem) {
  write_files(mask, stem, "u8");
}

ScalarVolume load_volume(const std::string& stem) {
  return decode(read_files(stem), stem);
}

BinaryMask load_mask(const std::string& stem) {
  RawFile f = read_files(stem);
  std::string dtype = f.header.at("dtype").get<std::string>();
  if (dtype != "u8")
    throw ConfigError(stem + ": mask load requires dtype u8, got " + dtype);
  ScalarVolume v = decode(f, stem);
  for (std::size_t n = 0; n < v.size(); ++n)
    if (v[n] != 0.0 && v[n] != 1.0)
      throw NumericError(stem + ": u8 value outside {0,1}, cannot load as mask");
  return BinaryMask(v);
}

bool inside_box(const ScalarVolume& vol, const WorldPoint& p) {
  const auto& o = vol.origin();
  const auto& s = vol.spacing();
  double hi[3] = {o[0] + (vol.nx() - 1) * s[0], o[1] + (vol.ny() - 1) * s[1],
                  o[2] + (vol.nz() - 1) * s[2]};
  return p.x >= o[0] && p.x <= hi[0] && p.y >= o[1] && p.y <= hi[1] &&
         p.z >= o[2] && p.z <= hi[2];
}

double trilinear_sample(const ScalarVolume& vol, const WorldPoint& p) {
  if (!inside_box(vol, p))
    throw NumericError("trilinear_sample: point (" + std::to_string(p.x) + "," +
                       std::to_string(p.y) + "," + std::to_string(p.z) +
                       ") outside volume bounding box");
  const auto& o = vol.origin();
  const auto& s = vol.spacing();
  double g[3] = {(p.x - o[0]) / s[0], (p.y - o[1]) / s[1], (p.z - o[2]) / s[2]};
  int i0[3];
  double f[3];
  for (int d = 0; d < 3; ++d) {
    int hi = vol.dims()[d] - 1;
    int i = int(std::floor(g[d]));
    if (i >= hi) i = hi - 1;          // clamp so i+1 stays valid at the far face
    if (i < 0) i = 0;
    i0[d] = i;
    f[d] = g[d] - i;
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) *
                   (dz ? f[2] : 1 - f[2]);
        acc += w * vol.at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
      }
  return acc;
}

GradientField central_gradient(const ScalarVolume& vol) {
  for (int d = 0; d < 3; ++d)
    if (vol.dims()[d] < 3)
      throw ConfigError("central_gradient: every dim must be >= 3");
  GradientField g{ScalarVolume(vol.dims(), vol.spacing(), vol.origin()),
                  ScalarVolume(vol.dims(), vol.spacing(), vol.origin()),
                  ScalarVolume(vol.dims(), vol.spacing(), vol.origin())};
  const int nx = vol.nx(), ny = vol.ny(), nz = vol.nz();
  const auto& h = vol.spacing();
  ScalarVolume* out[3] = {&g.gx, &g.gy, &g.gz};
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        int c[3] = {i, j, k};
        int n[3] = {nx, ny, nz};
        for (int d = 0; d < 3; ++d) {
          int lo[3] = {i, j, k}, hi[3] = {i, j, k};
          double denom;
          if (c[d] == 0) {
            hi[d] = 1;
            denom = h[d];
          } else if (c[d] == n[d] - 1) {
            lo[d] = n[d] - 2;
            denom = h[d];
          } else {
            lo[d] -= 1;
            hi[d] += 1;
            denom = 2 * h[d];
          }
          out[d]->at(i, j, k) =
              (vol.at(hi[0], hi[1], hi[2]) - vol.at(lo[0], lo[1], lo[2])) / denom;
        }
      }
  return g;
}

WorldPoint mask_centroid(const BinaryMask& mask) {
  double sx = 0, sy = 0, sz = 0;
  std::size_t c = 0;
  for (int k = 0; k < mask.nz(); ++k)
    for (int j = 0; j < mask.ny(); ++j)
      for (int i = 0; i < mask.nx(); ++i)
        if (mask.at(i, j, k) != 0.0) {
          WorldPoint w = mask.world(i, j, k);
          sx += w.x;
          sy += w.y;
          sz += w.z;
          ++c;
        }
  if (c == 0) throw NumericError("mask_centroid: empty mask");
  return {sx / double(c), sy / double(c), sz / double(c)};
}

double max_radius(const BinaryMask& mask, const WorldPoint& center) {
  double best = -1.0;
  for (int k = 0; k < mask.nz(); ++k)
    for (int j = 0; j < mask.ny(); ++j)
      for (int i = 0; i < mask.nx(); ++i)
        if (mask.at(i, j, k) != 0.0) {
          WorldPoint w = mask.world(i, j, k);
          best = std::max(best, norm(w - center));
        }
  if (best < 0.0) throw NumericError("max_radius: empty mask");
  return best;
}

}  // namespace gbm
