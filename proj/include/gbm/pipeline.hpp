#pragma once

#include <optional>

#include "gbm/config.hpp"
#include "gbm/metrics.hpp"

namespace gbm {

struct InferenceResult {
  CharacteristicParams chr;
  TrainableParams theta;
  LossTerms pretrain_losses;
  LossTerms finetune_losses;
  EvalReport metrics;
  bool has_recurrence_metrics = false;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string data_mode;
  bool skipped_finetune = false;
};

void write_inference_result(const InferenceResult& r, const std::string& path);

// Pipeline stages. Each writes its artifacts under cfg.output_dir/<stage>/ and
// reuses them on re-run when the stage hash is unchanged.
struct GeometryArtifacts {
  EffectiveGeometry geom;
  BinaryMask brain_mask;
  double phasefield_t = 0.0;
};

GeometryArtifacts cmd_preprocess(const RunConfig& cfg);

struct CaseData {
  BinaryMask y_t1gd, y_flair;
  std::optional<ScalarVolume> fet;
  std::optional<BinaryMask> y_fet;
  std::optional<DensitySeries> u_gt;
};
CaseData load_case_data(const RunConfig& cfg);

CharacteristicParams cmd_gridsearch(const RunConfig& cfg, const CaseData& data);

struct PretrainArtifacts {
  NetworkState state;
  DensitySeries u_char;
  TrainRecord record;
  double R_enclosing = 0.0;
  SegFeatures features;
  CharacteristicParams chr;
};
PretrainArtifacts cmd_pretrain(const RunConfig& cfg, const GeometryArtifacts& ga,
                               const CaseData& data);

struct FinetuneArtifacts {
  NetworkState state;
  TrainRecord record;
};
FinetuneArtifacts cmd_finetune(const RunConfig& cfg, const GeometryArtifacts& ga,
                               const CaseData& data, const PretrainArtifacts& pa);

// u^FDM re-solve at the requested times with the supplied theta; u^PINN grid
// evaluation allowed only for t in [0,1].
std::vector<ScalarVolume> predict_fdm(const GeometryArtifacts& ga,
                                      const CharacteristicParams& chr,
                                      const TrainableParams& theta,
                                      const std::vector<double>& times, int* steps = nullptr);
ScalarVolume predict_pinn(const NetworkState& state, const ScalarVolume& grid, double t_norm);

EvalReport evaluate_case(const RunConfig& cfg, const GeometryArtifacts& ga,
                         const CaseData& data, const ScalarVolume& u_fdm_t1,
                         const TrainableParams& theta,
                         const BinaryMask* recurrence, bool* has_recurrence);

InferenceResult cmd_pipeline(const RunConfig& cfg, bool skip_finetune);

}  // namespace gbm
