#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gbm/net.hpp"
#include "gbm/rng.hpp"

using namespace gbm;

TEST_CASE("weight layout and count") {
  MlpSpec spec;  // 4 -> 128 x4 -> 1
  CHECK(spec.weight_count() == 4 * 128 + 128 + 3 * (128 * 128 + 128) + 128 + 1);
  MlpSpec tiny{4, 2, 8, 1};
  CHECK(tiny.weight_count() == (4 * 8 + 8) + (8 * 8 + 8) + (8 + 1));
}

TEST_CASE("init_weights is deterministic and Glorot-bounded") {
  MlpSpec spec;
  NetworkState a = init_weights(spec, 42);
  NetworkState b = init_weights(spec, 42);
  CHECK(a.weights == b.weights);

  NetworkState c = init_weights(spec, 43);
  std::size_t diff = 0, nonbias = 0;
  for (int l = 0; l < spec.affine_layers(); ++l) {
    std::size_t off = spec.layer_offset(l);
    std::size_t nw = std::size_t(spec.layer_out(l)) * spec.layer_in(l);
    double limit = std::sqrt(6.0 / double(spec.layer_in(l) + spec.layer_out(l)));
    for (std::size_t k = 0; k < nw; ++k) {
      CHECK(std::abs(a.weights[off + k]) <= limit);
      diff += (a.weights[off + k] != c.weights[off + k]);
      ++nonbias;
    }
    for (int k = 0; k < spec.layer_out(l); ++k) CHECK(a.weights[off + nw + k] == 0.0);
  }
  CHECK(double(diff) / double(nonbias) > 0.99);
}

TEST_CASE("ansatz at t=0 and with zero weights") {
  MlpSpec spec{4, 2, 16, 1};
  NetworkState st = init_weights(spec, 7);
  st.L_bar_mm = 20.0;
  st.x0_ref_mm = {10, 20, 30};
  st.theta.x0_mm = {10, 20, 30};

  double x[3] = {0.3, -0.2, 0.1};
  AnsatzOutput at0 = ansatz_eval(st, x, 0.0);
  double mm[3] = {20 * 0.3 + 10, 20 * -0.2 + 20, 20 * 0.1 + 30};
  GaussianIC ic = gaussian_ic(mm, st.theta.x0_mm);
  CHECK(at0.u == doctest::Approx(ic.u0).epsilon(1e-15));

  // zero weights: u == u0 for all t, laplacian = L^2 * lap_mm; at x = x0 the
  // physical-space laplacian is -0.06
  NetworkState z = st;
  std::fill(z.weights.begin(), z.weights.end(), 0.0);
  double xc[3] = {0, 0, 0};
  AnsatzOutput o = ansatz_eval(z, xc, 0.7);
  CHECK(o.u == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(o.laplacian == doctest::Approx(-0.06 * 20.0 * 20.0).epsilon(1e-12));
  CHECK(o.grad_x[0] == doctest::Approx(0.0));
  CHECK(o.du_dt == doctest::Approx(0.0));
}

TEST_CASE("ansatz derivatives match central finite differences") {
  MlpSpec spec{4, 3, 12, 1};
  Rng rng(99);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    NetworkState st = init_weights(spec, 1000 + trial);
    st.L_bar_mm = 5.0 + 30.0 * rng.uniform();
    st.x0_ref_mm = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    st.theta.x0_mm = {st.x0_ref_mm.x + rng.uniform(-2, 2),
                      st.x0_ref_mm.y + rng.uniform(-2, 2),
                      st.x0_ref_mm.z + rng.uniform(-2, 2)};
    double x[3] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    double t = 0.05 + 0.9 * rng.uniform();
    AnsatzOutput o = ansatz_eval(st, x, t);

    const double h = 1e-5;
    auto u_at = [&](const double xx[3], double tt) { return ansatz_eval(st, xx, tt).u; };
    double lap_fd = 0.0;
    for (int d = 0; d < 3; ++d) {
      double xp[3] = {x[0], x[1], x[2]}, xm[3] = {x[0], x[1], x[2]};
      xp[d] += h;
      xm[d] -= h;
      double up = u_at(xp, t), um = u_at(xm, t), u0 = o.u;
      double g_fd = (up - um) / (2 * h);
      CHECK(o.grad_x[d] ==
            doctest::Approx(g_fd).epsilon(1e-6).scale(std::max(1.0, std::abs(g_fd))));
      lap_fd += (up - 2 * u0 + um) / (h * h);
    }
    CHECK(o.laplacian ==
          doctest::Approx(lap_fd).epsilon(2e-5).scale(std::max(1.0, std::abs(lap_fd))));
    double dt_fd = (u_at(x, t + h) - u_at(x, t - h)) / (2 * h);
    CHECK(o.du_dt == doctest::Approx(dt_fd).epsilon(1e-6).scale(std::max(1.0, std::abs(dt_fd))));
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("batched engine matches single-point evaluation") {
  MlpSpec spec{4, 4, 24, 1};
  NetworkState st = init_weights(spec, 5);
  NetEngine eng(spec);
  Rng rng(3);
  const int n = 37;
  Eigen::MatrixXd X(4, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < 4; ++r) X(r, c) = rng.uniform(-2, 2);
  Eigen::RowVectorXd y;
  Eigen::MatrixXd g, hh;
  eng.forward(st.weights, X, y, &g, &hh);
  for (int c = 0; c < n; c += 7) {
    Eigen::MatrixXd X1 = X.col(c);
    Eigen::RowVectorXd y1;
    Eigen::MatrixXd g1, hh1;
    eng.forward(st.weights, X1, y1, &g1, &hh1);
    CHECK(y(c) == doctest::Approx(y1(0)).epsilon(1e-15));
    for (int r = 0; r < 4; ++r) CHECK(g(r, c) == doctest::Approx(g1(r, 0)).epsilon(1e-14));
    for (int r = 0; r < 3; ++r) CHECK(hh(r, c) == doctest::Approx(hh1(r, 0)).epsilon(1e-14));
  }
}

TEST_CASE("reverse pass gradient matches finite differences on all channels") {
  // scalar objective mixing every output channel:
  //   S = sum_c (y_c + 2*g0_c - g3_c + 0.5*(h0_c+h1_c+h2_c))
  MlpSpec spec{4, 2, 6, 1};
  NetworkState st = init_weights(spec, 11);
  NetEngine eng(spec);
  const int n = 5;
  Eigen::MatrixXd X(4, n);
  Rng rng(13);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < 4; ++r) X(r, c) = rng.uniform(-1, 1);

  auto objective = [&](const std::vector<double>& w) {
    Eigen::RowVectorXd y;
    Eigen::MatrixXd g, hh;
    eng.forward(w, X, y, &g, &hh);
    double s = 0;
    for (int c = 0; c < n; ++c)
      s += y(c) + 2 * g(0, c) - g(3, c) + 0.5 * (hh(0, c) + hh(1, c) + hh(2, c));
    return s;
  };

  Eigen::RowVectorXd y;
  Eigen::MatrixXd g, hh;
  NetTape tape;
  eng.forward(st.weights, X, y, &g, &hh, &tape);
  Eigen::RowVectorXd ybar = Eigen::RowVectorXd::Ones(n);
  Eigen::MatrixXd gbar = Eigen::MatrixXd::Zero(4, n);
  gbar.row(0).setConstant(2.0);
  gbar.row(3).setConstant(-1.0);
  Eigen::MatrixXd hhbar = Eigen::MatrixXd::Constant(3, n, 0.5);
  std::vector<double> grad(spec.weight_count(), 0.0);
  eng.reverse(st.weights, tape, ybar, &gbar, &hhbar, grad.data());

  const double h = 1e-6;
  for (std::size_t k = 0; k < spec.weight_count(); k += 3) {
    std::vector<double> wp = st.weights, wm = st.weights;
    wp[k] += h;
    wm[k] -= h;
    double fd = (objective(wp) - objective(wm)) / (2 * h);
    CHECK(grad[k] == doctest::Approx(fd).epsilon(2e-6).scale(std::max(1.0, std::abs(fd))));
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  MlpSpec spec{4, 2, 10, 1};
  NetworkState st = init_weights(spec, 21);
  st.L_bar_mm = 25.0;
  st.d_over_rho = 8.0;
  st.x0_ref_mm = {1, 2, 3};
  st.theta.mu_D = 0.93;
  st.theta.x0_mm = {1.5, 2.5, 3.5};
  st.theta.train_mA = true;
  auto stem = (std::filesystem::temp_directory_path() / "gbm_ckpt").string();
  save_checkpoint(st, stem);
  NetworkState r = load_checkpoint(stem);
  CHECK(r.weights == st.weights);  // bit-exact via binary blob
  CHECK(r.L_bar_mm == st.L_bar_mm);
  CHECK(r.d_over_rho == st.d_over_rho);
  CHECK(r.theta.mu_D == st.theta.mu_D);
  CHECK(r.theta.train_mA == st.theta.train_mA);
  CHECK(r.rng_seed == st.rng_seed);
}
