#include "gbm/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gbm/rng.hpp"
#include "json.hpp"

namespace gbm {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using nlohmann::json;

std::size_t MlpSpec::weight_count() const {
  std::size_t n = 0;
  for (int l = 0; l < affine_layers(); ++l)
    n += std::size_t(layer_out(l)) * layer_in(l) + layer_out(l);
  return n;
}

std::size_t MlpSpec::layer_offset(int l) const {
  std::size_t off = 0;
  for (int k = 0; k < l; ++k)
    off += std::size_t(layer_out(k)) * layer_in(k) + layer_out(k);
  return off;
}

NetworkState init_weights(const MlpSpec& spec, std::uint64_t seed) {
  NetworkState st;
  st.spec = spec;
  st.rng_seed = seed;
  st.weights.assign(spec.weight_count(), 0.0);
  Rng rng(seed);
  for (int l = 0; l < spec.affine_layers(); ++l) {
    double* w = st.weights.data() + spec.layer_offset(l);
    int fan_in = spec.layer_in(l), fan_out = spec.layer_out(l);
    double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    for (int k = 0; k < fan_out * fan_in; ++k) w[k] = rng.uniform(-limit, limit);
    // biases stay zero
  }
  return st;
}

namespace {

struct LayerView {
  Eigen::Map<const MatrixXd> W;
  Eigen::Map<const Eigen::VectorXd> b;
};

LayerView layer_view(const MlpSpec& spec, const std::vector<double>& w, int l) {
  const double* p = w.data() + spec.layer_offset(l);
  int out = spec.layer_out(l), in = spec.layer_in(l);
  return {Eigen::Map<const MatrixXd>(p, out, in),
          Eigen::Map<const Eigen::VectorXd>(p + std::size_t(out) * in, out)};
}

struct LayerGrad {
  Eigen::Map<MatrixXd> W;
  Eigen::Map<Eigen::VectorXd> b;
};

LayerGrad layer_grad(const MlpSpec& spec, double* g, int l) {
  double* p = g + spec.layer_offset(l);
  int out = spec.layer_out(l), in = spec.layer_in(l);
  return {Eigen::Map<MatrixXd>(p, out, in),
          Eigen::Map<Eigen::VectorXd>(p + std::size_t(out) * in, out)};
}

}  // namespace

// All channels ride in one matrix of 8n columns: [value | J0..J3 | H0..H2],
// so each layer is a single GEMM. The bias touches only the value block and
// tanh/chain-rule elementwise maps act blockwise.
void NetEngine::forward(const std::vector<double>& weights,
                        const Eigen::Ref<const MatrixXd>& X, RowVectorXd& y,
                        MatrixXd* g, MatrixXd* hh, NetTape* tape) const {
  const int n = int(X.cols());
  const int L = spec_.affine_layers();
  const bool derivs = g != nullptr;
  const int nc = derivs ? 8 * n : n;  // concatenated column count

  NetTape local;
  NetTape& tp = tape ? *tape : local;
  tp.derivs = derivs;
  tp.z_in.resize(L);
  tp.s.resize(L - 1);
  tp.a_all.resize(L);

  {
    MatrixXd& z0 = tp.z_in[0];
    z0.resize(spec_.input_dim, nc);
    z0.leftCols(n) = X;
    if (derivs) {
      z0.middleCols(n, 7 * n).setZero();
      for (int c = 0; c < 4; ++c) z0.row(c).segment(n + c * n, n).setOnes();
    }
  }

  for (int l = 0; l < L; ++l) {
    auto [W, b] = layer_view(spec_, weights, l);
    MatrixXd& a = tp.a_all[l];
    a.resize(spec_.layer_out(l), nc);
    a.noalias() = W * tp.z_in[l];
    a.leftCols(n).colwise() += b;
    if (l == L - 1) {
      y = a.row(0).segment(0, n);
      if (derivs) {
        g->resize(4, n);
        hh->resize(3, n);
        for (int c = 0; c < 4; ++c) g->row(c) = a.row(0).segment(n + c * n, n);
        for (int i = 0; i < 3; ++i) hh->row(i) = a.row(0).segment(5 * n + i * n, n);
      }
      return;
    }
    MatrixXd& s = tp.s[l];
    s.resize(a.rows(), n);
    s = a.leftCols(n).array().tanh().matrix();
    MatrixXd& znext = tp.z_in[l + 1];
    znext.resize(a.rows(), nc);
    znext.leftCols(n) = s;
    if (derivs) {
      tp.d1 = 1.0 - s.array().square();
      tp.d2 = -2.0 * s.array() * tp.d1;
      for (int i = 0; i < 3; ++i) {
        auto ja_i = a.middleCols(n + i * n, n).array();
        auto ha_i = a.middleCols(5 * n + i * n, n).array();
        znext.middleCols(5 * n + i * n, n) = (tp.d2 * ja_i.square() + tp.d1 * ha_i).matrix();
      }
      for (int c = 0; c < 4; ++c)
        znext.middleCols(n + c * n, n) =
            (tp.d1 * a.middleCols(n + c * n, n).array()).matrix();
    }
  }
}

void NetEngine::reverse(const std::vector<double>& weights, const NetTape& tape,
                        const RowVectorXd& ybar, const MatrixXd* gbar,
                        const MatrixXd* hhbar, double* wgrad) const {
  const int L = spec_.affine_layers();
  const int n = int(ybar.cols());
  const bool derivs = gbar != nullptr;
  if (derivs != tape.derivs)
    throw ConfigError("NetEngine::reverse: tape/adjoint channel mismatch");
  const int nc = derivs ? 8 * n : n;
  NetTape& tp = const_cast<NetTape&>(tape);  // scratch buffers only

  {  // output layer (linear)
    auto [W, b] = layer_view(spec_, weights, L - 1);
    auto Wg = layer_grad(spec_, wgrad, L - 1);
    MatrixXd& abar = tp.abar_out;
    abar.resize(1, nc);
    abar.row(0).segment(0, n) = ybar;
    if (derivs) {
      for (int c = 0; c < 4; ++c) abar.row(0).segment(n + c * n, n) = gbar->row(c);
      for (int i = 0; i < 3; ++i) abar.row(0).segment(5 * n + i * n, n) = hhbar->row(i);
    }
    Wg.W.noalias() += abar * tape.z_in[L - 1].transpose();
    Wg.b(0) += ybar.sum();
    tp.zbar.resize(W.cols(), nc);
    tp.zbar.noalias() = W.transpose() * abar;
  }

  for (int l = L - 2; l >= 0; --l) {
    const MatrixXd& s = tape.s[l];
    const MatrixXd& zbar = tp.zbar;
    tp.d1 = 1.0 - s.array().square();
    MatrixXd& abar = tp.abar;
    abar.resize(s.rows(), nc);
    if (derivs) {
      const MatrixXd& a = tape.a_all[l];
      tp.d2 = -2.0 * s.array() * tp.d1;
      tp.d1bar.resize(s.rows(), n);
      tp.d1bar.setZero();
      tp.d2bar.resize(s.rows(), n);
      tp.d2bar.setZero();
      for (int c = 0; c < 4; ++c) {
        auto jbar_c = zbar.middleCols(n + c * n, n).array();
        auto ja_c = a.middleCols(n + c * n, n).array();
        tp.d1bar += jbar_c * ja_c;
        abar.middleCols(n + c * n, n) = (jbar_c * tp.d1).matrix();
      }
      for (int i = 0; i < 3; ++i) {
        auto hbar_i = zbar.middleCols(5 * n + i * n, n).array();
        auto ja_i = a.middleCols(n + i * n, n).array();
        auto ha_i = a.middleCols(5 * n + i * n, n).array();
        tp.d2bar += hbar_i * ja_i.square();
        abar.middleCols(n + i * n, n) += (hbar_i * tp.d2 * 2.0 * ja_i).matrix();
        tp.d1bar += hbar_i * ha_i;
        abar.middleCols(5 * n + i * n, n) = (hbar_i * tp.d1).matrix();
      }
      tp.sbar = zbar.leftCols(n).array() + (-2.0 * s.array()) * tp.d1bar +
                (6.0 * s.array().square() - 2.0) * tp.d2bar;
      abar.leftCols(n) = (tp.sbar * tp.d1).matrix();
    } else {
      abar.leftCols(n) = (zbar.leftCols(n).array() * tp.d1).matrix();
    }

    auto [W, b] = layer_view(spec_, weights, l);
    auto Wg = layer_grad(spec_, wgrad, l);
    Wg.W.noalias() += abar * tape.z_in[l].transpose();
    Wg.b += abar.leftCols(n).rowwise().sum();
    if (l > 0) {
      tp.zbar.resize(W.cols(), nc);
      tp.zbar.noalias() = W.transpose() * abar;
    }
  }
}

GaussianIC gaussian_ic(const double x_mm[3], const WorldPoint& x0_mm) {
  GaussianIC o;
  double d[3] = {x_mm[0] - x0_mm.x, x_mm[1] - x0_mm.y, x_mm[2] - x0_mm.z};
  double s2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
  double E = 0.1 * std::exp(-0.1 * s2);
  o.u0 = E;
  for (int i = 0; i < 3; ++i) o.grad_mm[i] = -0.2 * d[i] * E;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      o.hess_mm[i][j] = E * (0.04 * d[i] * d[j] - (i == j ? 0.2 : 0.0));
  o.lap_mm = E * (0.04 * s2 - 0.6);
  for (int k = 0; k < 3; ++k) o.grad_lap_mm[k] = E * d[k] * (0.2 - 0.008 * s2);
  return o;
}

AnsatzOutput ansatz_eval(const NetworkState& state, const double x_norm[3], double t_norm) {
  NetEngine eng(state.spec);
  MatrixXd X(4, 1);
  X << x_norm[0], x_norm[1], x_norm[2], t_norm;
  RowVectorXd y;
  MatrixXd g, hh;
  eng.forward(state.weights, X, y, &g, &hh);

  double x_mm[3] = {state.L_bar_mm * x_norm[0] + state.x0_ref_mm.x,
                    state.L_bar_mm * x_norm[1] + state.x0_ref_mm.y,
                    state.L_bar_mm * x_norm[2] + state.x0_ref_mm.z};
  GaussianIC ic = gaussian_ic(x_mm, state.theta.x0_mm);
  const double L = state.L_bar_mm;

  AnsatzOutput out;
  out.u = t_norm * y(0) + ic.u0;
  for (int i = 0; i < 3; ++i) out.grad_x[i] = t_norm * g(i, 0) + L * ic.grad_mm[i];
  out.laplacian = t_norm * (hh(0, 0) + hh(1, 0) + hh(2, 0)) + L * L * ic.lap_mm;
  out.du_dt = y(0) + t_norm * g(3, 0);
  if (!std::isfinite(out.u) || !std::isfinite(out.du_dt) || !std::isfinite(out.laplacian) ||
      !std::isfinite(out.grad_x[0]) || !std::isfinite(out.grad_x[1]) ||
      !std::isfinite(out.grad_x[2]))
    throw NumericError("ansatz_eval: non-finite output at x=(" + std::to_string(x_norm[0]) +
                       "," + std::to_string(x_norm[1]) + "," + std::to_string(x_norm[2]) +
                       "), t=" + std::to_string(t_norm));
  return out;
}

void save_checkpoint(const NetworkState& state, const std::string& stem) {
  json j;
  j["spec"] = {{"input_dim", state.spec.input_dim},
               {"hidden_layers", state.spec.hidden_layers},
               {"width", state.spec.width},
               {"output_dim", state.spec.output_dim}};
  j["rng_seed"] = state.rng_seed;
  j["L_bar_mm"] = state.L_bar_mm;
  j["char"] = {{"d_over_rho", state.d_over_rho}, {"L_bar_mm", state.L_bar_mm}};
  j["x0_ref_mm"] = {state.x0_ref_mm.x, state.x0_ref_mm.y, state.x0_ref_mm.z};
  const auto& th = state.theta;
  j["theta"] = {{"mu_D", th.mu_D},
                {"mu_R", th.mu_R},
                {"x0_mm", {th.x0_mm.x, th.x0_mm.y, th.x0_mm.z}},
                {"u_c_flair", th.u_c_flair},
                {"u_c_t1gd", th.u_c_t1gd},
                {"m", th.m},
                {"A", th.A},
                {"train_mu", th.train_mu},
                {"train_x0", th.train_x0},
                {"train_uc", th.train_uc},
                {"train_mA", th.train_mA}};
  j["weight_count"] = state.weights.size();
  std::ofstream hf(stem + ".json");
  if (!hf) throw MissingInput("cannot write checkpoint: " + stem + ".json");
  hf << j.dump(2) << "\n";
  std::ofstream bf(stem + ".bin", std::ios::binary);
  if (!bf) throw MissingInput("cannot write checkpoint: " + stem + ".bin");
  bf.write(reinterpret_cast<const char*>(state.weights.data()),
           std::streamsize(state.weights.size() * sizeof(double)));
}

NetworkState load_checkpoint(const std::string& stem) {
  std::ifstream hf(stem + ".json");
  if (!hf) throw MissingInput("missing checkpoint: " + stem + ".json");
  json j;
  hf >> j;
  NetworkState st;
  st.spec.input_dim = j["spec"]["input_dim"].get<int>();
  st.spec.hidden_layers = j["spec"]["hidden_layers"].get<int>();
  st.spec.width = j["spec"]["width"].get<int>();
  st.spec.output_dim = j["spec"]["output_dim"].get<int>();
  st.rng_seed = j["rng_seed"].get<std::uint64_t>();
  st.L_bar_mm = j["L_bar_mm"].get<double>();
  if (j.contains("char")) st.d_over_rho = j["char"]["d_over_rho"].get<double>();
  st.x0_ref_mm = {j["x0_ref_mm"][0].get<double>(), j["x0_ref_mm"][1].get<double>(),
                  j["x0_ref_mm"][2].get<double>()};
  const auto& t = j["theta"];
  st.theta.mu_D = t["mu_D"].get<double>();
  st.theta.mu_R = t["mu_R"].get<double>();
  st.theta.x0_mm = {t["x0_mm"][0].get<double>(), t["x0_mm"][1].get<double>(),
                    t["x0_mm"][2].get<double>()};
  st.theta.u_c_flair = t["u_c_flair"].get<double>();
  st.theta.u_c_t1gd = t["u_c_t1gd"].get<double>();
  st.theta.m = t["m"].get<double>();
  st.theta.A = t["A"].get<double>();
  st.theta.train_mu = t["train_mu"].get<bool>();
  st.theta.train_x0 = t["train_x0"].get<bool>();
  st.theta.train_uc = t["train_uc"].get<bool>();
  st.theta.train_mA = t["train_mA"].get<bool>();
  std::size_t n = j["weight_count"].get<std::size_t>();
  if (n != st.spec.weight_count())
    throw ConfigError("checkpoint weight count does not match spec");
  std::ifstream bf(stem + ".bin", std::ios::binary | std::ios::ate);
  if (!bf) throw MissingInput("missing checkpoint: " + stem + ".bin");
  if (std::size_t(bf.tellg()) != n * sizeof(double))
    throw ConfigError("checkpoint blob size mismatch: " + stem + ".bin");
  bf.seekg(0);
  st.weights.resize(n);
  bf.read(reinterpret_cast<char*>(st.weights.data()), std::streamsize(n * sizeof(double)));
  return st;
}

}  // namespace gbm
