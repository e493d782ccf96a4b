#pragma once

#include <optional>
#include <vector>

#include "gbm/net.hpp"
#include "gbm/phasefield.hpp"
#include "gbm/theta.hpp"

namespace gbm {

struct LossWeights {
  double w_seg = 1e-3;
  double w_fet = 1e-2;  // forced to 0 when FET data absent
  double w_residual = 1.0;
  double w_char = 1.0;
  double w_penalty = 1.0;
};

enum class Stage { Pretrain, Finetune };
enum class DataMode { SEG, FET_SEG, UTALL, UTEND };

DataMode parse_data_mode(const std::string& s);
std::string data_mode_name(DataMode m);

// Residual collocation point with geometry interpolated once at build time.
struct ResidualPoint {
  double x_norm[3];
  double t;
  double x_mm[3];
  double p_phi;             // P*(phi+tau)
  double grad_p_phi_mm[3];  // 1/mm; residual applies the L_bar factor
  double phi;
  double u_char = 0.0;  // ubar^FDM at (x, t)
  double u_gt = 0.0;    // ground-truth density at (x, t) (u-t-all)
};

// Data collocation point; imaging data lives at t = 1.
struct DataPoint {
  double x_norm[3];
  double x_mm[3];
  double phi;
  double y_flair = 0.0, y_t1gd = 0.0;
  double y_fet = 0.0, p_fet = 0.0;
  double u_gt = 0.0;  // ground-truth density at t = 1 (u-t-end)
};

struct CollocationBatch {
  std::vector<ResidualPoint> residual;
  std::vector<DataPoint> data;
  bool has_char = false;
  bool has_seg = false;
  bool has_fet = false;
  bool has_gt_residual = false;
  bool has_gt_data = false;
};

struct LossTerms {
  double pde = 0.0;
  double chr = 0.0;
  double seg = 0.0;
  double fet = 0.0;
  double data = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

// Pointwise pieces (exposed for unit tests).
double smooth_heaviside(double phi_u, double u_c, double a = 20.0);
double penalty(double beta, double lo, double hi);

// PDE residual of the non-divergence form at one point for a caller-supplied
// ansatz output (used by tests with stub functions).
double residual_value(const AnsatzOutput& out, const ResidualPoint& pt,
                      const TrainableParams& theta, double cal_D, double cal_R,
                      double L_bar_mm);

struct LossSpec {
  Stage stage = Stage::Pretrain;
  DataMode mode = DataMode::SEG;
  LossWeights weights;
  ThetaBounds bounds;
  double cal_D = 1.0;
  double cal_R = 1.0;
  double sigmoid_a = 20.0;
};

// Loss value only (used for test-set evaluation).
LossTerms total_loss(const NetworkState& state, const CollocationBatch& batch,
                     const LossSpec& spec);

// Loss and exact gradient. grad has size weight_count + TrainableParams::kSlots
// (theta slots ordered muD, muR, x0.xyz, ucF, ucT, m, A); frozen slots are 0.
LossTerms loss_and_gradient(const NetworkState& state, const CollocationBatch& batch,
                            const LossSpec& spec, std::vector<double>& grad);

// ---- batch construction ----------------------------------------------------

// Time-stamped density snapshots for interpolating ubar^FDM / u^GT at
// arbitrary (x, t): trilinear in space, linear in time.
struct DensitySeries {
  std::vector<ScalarVolume> snaps;
  std::vector<double> times;  // ascending, covering [0, 1]
};
double sample_density(const DensitySeries& series, const WorldPoint& p, double t);

struct SpaceTimePoint {
  WorldPoint x_mm;
  double t;
};

struct BatchInputs {
  const EffectiveGeometry* geom = nullptr;
  double L_bar_mm = 1.0;
  WorldPoint x0_ref_mm;
  const DensitySeries* u_char = nullptr;     // enables char loss
  const DensitySeries* u_gt = nullptr;       // enables u-t-all / u-t-end data
  const BinaryMask* y_flair = nullptr;       // enables seg loss (with y_t1gd)
  const BinaryMask* y_t1gd = nullptr;
  const ScalarVolume* fet = nullptr;         // enables fet loss (with y_fet)
  const BinaryMask* y_fet = nullptr;
};

CollocationBatch build_batch(const BatchInputs& in,
                             const std::vector<SpaceTimePoint>& residual_pts,
                             const std::vector<WorldPoint>& data_pts);

}  // namespace gbm
