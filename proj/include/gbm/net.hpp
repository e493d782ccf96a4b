#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gbm/theta.hpp"
#include "gbm/volume.hpp"

namespace gbm {

struct MlpSpec {
  int input_dim = 4;  // (x,y,z,t) normalized
  int hidden_layers = 4;
  int width = 128;
  int output_dim = 1;

  int affine_layers() const { return hidden_layers + 1; }
  int layer_in(int l) const { return l == 0 ? input_dim : width; }
  int layer_out(int l) const { return l == hidden_layers ? output_dim : width; }
  std::size_t weight_count() const;
  std::size_t layer_offset(int l) const;  // start of layer l's W block
};

struct NetworkState {
  MlpSpec spec;
  std::vector<double> weights;  // per layer: W (out x in, column-major), then b
  TrainableParams theta;
  std::uint64_t rng_seed = 0;
  WorldPoint x0_ref_mm;     // fixed centering of normalized coordinates
  double L_bar_mm = 1.0;    // spatial scale of normalized coordinates
  double d_over_rho = 0.0;  // characteristic context carried for predictions
};

NetworkState init_weights(const MlpSpec& spec, std::uint64_t seed);

void save_checkpoint(const NetworkState& state, const std::string& stem);
NetworkState load_checkpoint(const std::string& stem);

struct AnsatzOutput {
  double u = 0.0;
  double grad_x[3] = {0, 0, 0};  // d u / d x_norm_i
  double laplacian = 0.0;        // sum_i d2 u / d x_norm_i^2
  double du_dt = 0.0;            // d u / d t_norm
};

// Gaussian u0 = 0.1 exp(-0.1 |x-x0|^2) and the derivatives the ansatz and
// the x0 gradient need; x, x0 in mm.
struct GaussianIC {
  double u0;
  double grad_mm[3];      // d u0 / d x_i
  double hess_mm[3][3];   // d2 u0 / d x_i d x_j
  double lap_mm;          // trace of hess
  double grad_lap_mm[3];  // d (lap u0) / d x_k
};
GaussianIC gaussian_ic(const double x_mm[3], const WorldPoint& x0_mm);

// Batched evaluation: X is 4 x n (normalized coords and time), outputs are
// the raw network value y (1 x n), input-tangents g (4 x n) and diagonal
// spatial second derivatives hh (3 x n).
class NetTape;  // forward products retained for the reverse sweep

class NetEngine {
 public:
  explicit NetEngine(const MlpSpec& spec) : spec_(spec) {}

  // g/hh may be null to evaluate the value channel only (data-point losses).
  void forward(const std::vector<double>& weights, const Eigen::Ref<const Eigen::MatrixXd>& X,
               Eigen::RowVectorXd& y, Eigen::MatrixXd* g, Eigen::MatrixXd* hh,
               NetTape* tape = nullptr) const;

  // Accumulates d(loss)/d(weights) into wgrad given per-point adjoints of
  // (y, g, hh). Must be called with the tape produced by forward(); gbar and
  // hhbar must be null iff forward ran value-only.
  void reverse(const std::vector<double>& weights, const NetTape& tape,
               const Eigen::RowVectorXd& ybar, const Eigen::MatrixXd* gbar,
               const Eigen::MatrixXd* hhbar, double* wgrad) const;

  const MlpSpec& spec() const { return spec_; }

 private:
  MlpSpec spec_;
};

// Reusable workspace + retained forward products. All buffers are resized
// lazily and keep their allocations across calls, so a training loop that
// evaluates same-shaped batches never reallocates.
class NetTape {
 public:
  // concatenated-channel layout: 8n columns with input derivatives
  // ([value | J0..J3 | H0..H2]), n columns without
  std::vector<Eigen::MatrixXd> z_in;   // layer inputs (z_in[0] built from X)
  std::vector<Eigen::MatrixXd> s;      // tanh outputs per hidden layer
  std::vector<Eigen::MatrixXd> a_all;  // pre-activation channel blocks
  bool derivs = false;
  // reverse-sweep scratch
  Eigen::MatrixXd abar, abar_out, zbar;
  Eigen::ArrayXXd d1, d2, d1bar, d2bar, sbar;
};

// Evaluate the full ansatz u = t * NN(x,t) + u0(x) and its derivatives in
// normalized coordinates at a single point.
AnsatzOutput ansatz_eval(const NetworkState& state, const double x_norm[3], double t_norm);

}  // namespace gbm
