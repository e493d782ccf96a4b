#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gbm/charfit.hpp"
#include "gbm/loss.hpp"
#include "gbm/net.hpp"
#include "gbm/phasefield.hpp"
#include "gbm/sample.hpp"
#include "gbm/synth.hpp"
#include "gbm/train.hpp"

namespace gbm {

struct GeometryConfig {
  // either synthetic ...
  bool synthetic = false;
  BrainShape shape = BrainShape::Sphere;
  Index3 dims{64, 64, 64};
  Vec3 spacing_mm{2, 2, 2};
  double radius_mm = 50.0;
  double shell_mm = 0.0;
  // ... or tissue-fraction volume stems
  std::string p_w_stem, p_g_stem, mask_stem;
};

struct RunConfig {
  std::string output_dir = "out";
  std::uint64_t seed = 1234;
  GeometryConfig geometry;
  CahnHilliardConfig ch;
  double tau = 1e-3;
  std::string y_t1gd_stem, y_flair_stem;
  std::string fet_stem, y_fet_stem;          // optional
  std::string density_truth_manifest;        // optional, u-t-* modes
  LookupConfig lookup;
  std::string lookup_cache_dir;
  SamplerConfig sampler_pretrain;   // n_residual 20000
  SamplerConfig sampler_finetune;   // n_residual 5000, n_data 5000
  MlpSpec net;
  StageConfig pretrain;
  StageConfig finetune;
  LossWeights loss_weights;
  ThetaBounds bounds;
  double sigmoid_a = 20.0;
  DataMode data_mode = DataMode::SEG;
  std::vector<double> snapshot_times{0.6, 0.8, 1.0, 1.2};
  int fdm_snapshots = 21;
  // fine-tune initialization of theta (characteristic configuration)
  double init_u_c_flair = 0.35;
  double init_u_c_t1gd = 0.6;

  std::string config_hash() const;
};

RunConfig default_config();
RunConfig load_config(const std::string& path);
void write_default_config(const std::string& path);

// JSON writer emitting every float with 17 significant digits.
class JsonWriter {
 public:
  JsonWriter& begin(const std::string& key = "");
  JsonWriter& end();
  JsonWriter& begin_array(const std::string& key);
  JsonWriter& end_array();
  JsonWriter& field(const std::string& key, double v);
  JsonWriter& field(const std::string& key, const std::string& v);
  JsonWriter& field(const std::string& key, std::int64_t v);
  JsonWriter& field(const std::string& key, std::uint64_t v);
  JsonWriter& field(const std::string& key, bool v);
  JsonWriter& elem(double v);
  JsonWriter& field(const std::string& key, const std::vector<double>& v);
  std::string str() const { return out_; }
  void save(const std::string& path) const;

 private:
  void comma();
  void key(const std::string& k);
  std::string out_;
  std::vector<bool> first_;
  int indent_ = 0;
};

std::string format_g17(double v);

}  // namespace gbm
