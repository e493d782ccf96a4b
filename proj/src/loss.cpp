#include "gbm/loss.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gbm {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

DataMode parse_data_mode(const std::string& s) {
  if (s == "SEG" || s == "seg") return DataMode::SEG;
  if (s == "FET+SEG" || s == "fet+seg" || s == "FET_SEG") return DataMode::FET_SEG;
  if (s == "u-t-all" || s == "utall") return DataMode::UTALL;
  if (s == "u-t-end" || s == "utend") return DataMode::UTEND;
  throw ConfigError("unknown data mode: " + s);
}

std::string data_mode_name(DataMode m) {
  switch (m) {
    case DataMode::SEG: return "SEG";
    case DataMode::FET_SEG: return "FET+SEG";
    case DataMode::UTALL: return "u-t-all";
    case DataMode::UTEND: return "u-t-end";
  }
  return "?";
}

double smooth_heaviside(double phi_u, double u_c, double a) {
  return 1.0 / (1.0 + std::exp(-a * (phi_u - u_c)));
}

double penalty(double beta, double lo, double hi) {
  double below = std::min(0.0, beta - lo);
  double above = std::max(0.0, beta - hi);
  return below * below + above * above;
}

double residual_value(const AnsatzOutput& out, const ResidualPoint& pt,
                      const TrainableParams& theta, double cal_D, double cal_R,
                      double L_bar_mm) {
  double gdot = 0.0;
  for (int i = 0; i < 3; ++i) gdot += L_bar_mm * pt.grad_p_phi_mm[i] * out.grad_x[i];
  return theta.mu_D * cal_D * (gdot + pt.p_phi * out.laplacian) +
         theta.mu_R * cal_R * pt.phi * out.u * (1.0 - out.u) - out.du_dt;
}

namespace {

constexpr int kChunk = 512;
constexpr int kMuD = 0, kMuR = 1, kX0 = 2, kUcF = 5, kUcT = 6, kM = 7, kA = 8;

struct TermFlags {
  bool pde = false, chr = false, seg = false, fet = false;
  bool data_resid = false, data_end = false, pen = false;
};

TermFlags active_terms(const LossSpec& spec, const CollocationBatch& batch) {
  TermFlags f;
  f.pde = true;
  if (spec.stage == Stage::Pretrain) {
    if (!batch.has_char)
      throw MissingInput("pretrain loss requires the characteristic solution");
    f.chr = true;
    return f;
  }
  f.pen = true;
  switch (spec.mode) {
    case DataMode::SEG:
      if (!batch.has_seg) throw MissingInput("finetune requested without segmentation data");
      f.seg = true;
      break;
    case DataMode::FET_SEG:
      if (!batch.has_seg) throw MissingInput("finetune requested without segmentation data");
      if (!batch.has_fet) throw MissingInput("FET+SEG mode requires FET data");
      f.seg = f.fet = true;
      break;
    case DataMode::UTALL:
      if (!batch.has_gt_residual)
        throw MissingInput("u-t-all mode requires density truth at residual points");
      f.data_resid = true;
      break;
    case DataMode::UTEND:
      if (!batch.has_gt_data)
        throw MissingInput("u-t-end mode requires density truth at data points");
      f.data_end = true;
      break;
  }
  return f;
}

struct BlockResult {
  double pde = 0, chr = 0, seg = 0, fet = 0, data = 0;  // plain sums
  std::vector<double> grad;                             // empty if value-only
};

// One chunk of residual points: full derivative channels.
void residual_chunk(const NetworkState& st, const LossSpec& spec, const TermFlags& tf,
                    const ResidualPoint* pts, int n, double inv_nr, bool want_grad,
                    BlockResult& out) {
  NetEngine eng(st.spec);
  thread_local NetTape tape;  // persistent workspace, reused across iterations
  MatrixXd X(4, n);
  for (int c = 0; c < n; ++c) {
    X(0, c) = pts[c].x_norm[0];
    X(1, c) = pts[c].x_norm[1];
    X(2, c) = pts[c].x_norm[2];
    X(3, c) = pts[c].t;
  }
  RowVectorXd y;
  MatrixXd g, hh;
  eng.forward(st.weights, X, y, &g, &hh, &tape);

  RowVectorXd ybar;
  MatrixXd gbar, hhbar;
  if (want_grad) {
    ybar = RowVectorXd::Zero(n);
    gbar = MatrixXd::Zero(4, n);
    hhbar = MatrixXd::Zero(3, n);
  }
  const double L = st.L_bar_mm;
  const TrainableParams& th = st.theta;
  double* tg = want_grad ? out.grad.data() + st.spec.weight_count() : nullptr;

  for (int c = 0; c < n; ++c) {
    const ResidualPoint& pt = pts[c];
    GaussianIC ic = gaussian_ic(pt.x_mm, th.x0_mm);
    const double t = pt.t;
    double u = t * y(c) + ic.u0;
    double gx[3], gpn[3];
    for (int i = 0; i < 3; ++i) {
      gx[i] = t * g(i, c) + L * ic.grad_mm[i];
      gpn[i] = L * pt.grad_p_phi_mm[i];
    }
    double lap = t * (hh(0, c) + hh(1, c) + hh(2, c)) + L * L * ic.lap_mm;
    double ut = y(c) + t * g(3, c);
    double gdot = gpn[0] * gx[0] + gpn[1] * gx[1] + gpn[2] * gx[2];
    double diff_op = gdot + pt.p_phi * lap;
    double react = pt.phi * u * (1.0 - u);
    double F = th.mu_D * spec.cal_D * diff_op + th.mu_R * spec.cal_R * react - ut;
    if (!std::isfinite(F)) throw NumericError("residual loss: non-finite residual");
    out.pde += F * F;

    double au = 0, agx[3] = {0, 0, 0}, alap = 0, aut = 0;
    if (want_grad) {
      double wF = 2.0 * F * spec.weights.w_residual * inv_nr;
      au += wF * th.mu_R * spec.cal_R * pt.phi * (1.0 - 2.0 * u);
      for (int i = 0; i < 3; ++i) agx[i] += wF * th.mu_D * spec.cal_D * gpn[i];
      alap += wF * th.mu_D * spec.cal_D * pt.p_phi;
      aut -= wF;
      if (th.train_mu) {
        tg[kMuD] += wF * spec.cal_D * diff_op;
        tg[kMuR] += wF * spec.cal_R * react;
      }
    }
    if (tf.chr) {
      double e = pt.phi * (u - pt.u_char);
      out.chr += e * e;
      if (want_grad) au += 2.0 * e * pt.phi * spec.weights.w_char * inv_nr;
    }
    if (tf.data_resid) {
      double e = pt.phi * (u - pt.u_gt);
      out.data += e * e;
      if (want_grad) au += 2.0 * e * pt.phi * inv_nr;
    }
    if (want_grad) {
      if (th.train_x0) {
        for (int k = 0; k < 3; ++k) {
          double d = -au * ic.grad_mm[k] - alap * L * L * ic.grad_lap_mm[k];
          for (int i = 0; i < 3; ++i) d -= agx[i] * L * ic.hess_mm[i][k];
          tg[kX0 + k] += d;
        }
      }
      ybar(c) = au * t + aut;
      for (int i = 0; i < 3; ++i) gbar(i, c) = agx[i] * t;
      gbar(3, c) = aut * t;
      for (int i = 0; i < 3; ++i) hhbar(i, c) = alap * t;
    }
  }
  if (want_grad) eng.reverse(st.weights, tape, ybar, &gbar, &hhbar, out.grad.data());
}

// One chunk of data points: value channel only, t = 1.
void data_chunk(const NetworkState& st, const LossSpec& spec, const TermFlags& tf,
                const DataPoint* pts, int n, double inv_nd, double w_fet_eff,
                bool want_grad, BlockResult& out) {
  NetEngine eng(st.spec);
  thread_local NetTape tape;
  MatrixXd X(4, n);
  for (int c = 0; c < n; ++c) {
    X(0, c) = pts[c].x_norm[0];
    X(1, c) = pts[c].x_norm[1];
    X(2, c) = pts[c].x_norm[2];
    X(3, c) = 1.0;
  }
  RowVectorXd y;
  eng.forward(st.weights, X, y, nullptr, nullptr, &tape);

  RowVectorXd ybar;
  if (want_grad) ybar = RowVectorXd::Zero(n);
  const TrainableParams& th = st.theta;
  const double a = spec.sigmoid_a;
  double* tg = want_grad ? out.grad.data() + st.spec.weight_count() : nullptr;

  for (int c = 0; c < n; ++c) {
    const DataPoint& pt = pts[c];
    GaussianIC ic = gaussian_ic(pt.x_mm, th.x0_mm);
    double u1 = y(c) + ic.u0;
    double pu = pt.phi * u1;
    double au = 0.0;  // dL/du1
    if (tf.seg) {
      double HF = smooth_heaviside(pu, th.u_c_flair, a);
      double HT = smooth_heaviside(pu, th.u_c_t1gd, a);
      out.seg += (HF - pt.y_flair) * (HF - pt.y_flair) + (HT - pt.y_t1gd) * (HT - pt.y_t1gd);
      if (want_grad) {
        double dF = 2.0 * (HF - pt.y_flair) * a * HF * (1.0 - HF);
        double dT = 2.0 * (HT - pt.y_t1gd) * a * HT * (1.0 - HT);
        double w = spec.weights.w_seg * inv_nd;
        au += w * (dF + dT) * pt.phi;
        if (th.train_uc) {
          tg[kUcF] -= w * dF;
          tg[kUcT] -= w * dT;
        }
      }
    }
    if (tf.fet) {
      double r = th.m * pu - th.A - pt.p_fet;
      out.fet += r * r * pt.y_fet;
      if (want_grad && pt.y_fet != 0.0) {
        double w = w_fet_eff * inv_nd * 2.0 * r;
        au += w * th.m * pt.phi;
        if (th.train_mA) {
          tg[kM] += w * pu;
          tg[kA] -= w;
        }
      }
    }
    if (tf.data_end) {
      double e = pt.phi * (u1 - pt.u_gt);
      out.data += e * e;
      if (want_grad) au += 2.0 * e * pt.phi * inv_nd;
    }
    if (want_grad) {
      if (th.train_x0)
        for (int k = 0; k < 3; ++k) tg[kX0 + k] -= au * ic.grad_mm[k];
      ybar(c) = au;  // du1/dy = 1 at t = 1
    }
  }
  if (want_grad) eng.reverse(st.weights, tape, ybar, nullptr, nullptr, out.grad.data());
}

LossTerms run(const NetworkState& state, const CollocationBatch& batch,
              const LossSpec& spec, std::vector<double>* grad) {
  if (batch.residual.empty()) throw ConfigError("loss: empty residual batch");
  TermFlags tf = active_terms(spec, batch);
  const bool need_data_pts = tf.seg || tf.fet || tf.data_end;
  if (need_data_pts && batch.data.empty())
    throw MissingInput("loss: data terms requested but the batch has no data points");

  const std::size_t gsize = state.spec.weight_count() + TrainableParams::kSlots;
  const bool want_grad = grad != nullptr;
  if (want_grad) grad->assign(gsize, 0.0);

  const double inv_nr = 1.0 / double(batch.residual.size());
  const double inv_nd = batch.data.empty() ? 0.0 : 1.0 / double(batch.data.size());
  const double w_fet_eff = batch.has_fet ? spec.weights.w_fet : 0.0;

  const int nblocks_r = int((batch.residual.size() + kChunk - 1) / kChunk);
  const int nblocks_d = need_data_pts ? int((batch.data.size() + kChunk - 1) / kChunk) : 0;
  std::vector<BlockResult> blocks(std::size_t(nblocks_r) + nblocks_d);

#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < nblocks_r + nblocks_d; ++b) {
    BlockResult& res = blocks[b];
    if (want_grad) res.grad.assign(gsize, 0.0);
    if (b < nblocks_r) {
      int lo = b * kChunk;
      int n = int(std::min<std::size_t>(kChunk, batch.residual.size() - lo));
      residual_chunk(state, spec, tf, batch.residual.data() + lo, n, inv_nr, want_grad, res);
    } else {
      int lo = (b - nblocks_r) * kChunk;
      int n = int(std::min<std::size_t>(kChunk, batch.data.size() - lo));
      data_chunk(state, spec, tf, batch.data.data() + lo, n, inv_nd, w_fet_eff, want_grad, res);
    }
  }

  LossTerms out;
  for (const auto& b : blocks) {  // fixed-order reduction
    out.pde += b.pde;
    out.chr += b.chr;
    out.seg += b.seg;
    out.fet += b.fet;
    out.data += b.data;
    if (want_grad)
      for (std::size_t i = 0; i < gsize; ++i) (*grad)[i] += b.grad[i];
  }
  out.pde *= inv_nr;
  out.chr *= inv_nr;
  out.seg *= inv_nd;
  out.fet *= inv_nd;
  out.data *= tf.data_resid ? inv_nr : inv_nd;

  out.total = spec.weights.w_residual * out.pde;
  if (tf.chr) out.total += spec.weights.w_char * out.chr;
  if (tf.seg) out.total += spec.weights.w_seg * out.seg;
  if (tf.fet) out.total += w_fet_eff * out.fet;
  if (tf.data_resid || tf.data_end) out.total += out.data;

  if (tf.pen) {
    const ThetaBounds& B = spec.bounds;
    const TrainableParams& th = state.theta;
    struct Row {
      double v, lo, hi;
      int slot;
      bool active;
    } rows[] = {
        {th.mu_D, B.mu_lo, B.mu_hi, kMuD, th.train_mu},
        {th.mu_R, B.mu_lo, B.mu_hi, kMuR, th.train_mu},
        {th.u_c_flair, B.uc_flair_lo, B.uc_flair_hi, kUcF, th.train_uc},
        {th.u_c_t1gd, B.uc_t1gd_lo, B.uc_t1gd_hi, kUcT, th.train_uc},
        {th.m, B.m_lo, B.m_hi, kM, th.train_mA},
        {th.A, B.A_lo, B.A_hi, kA, th.train_mA},
    };
    for (const Row& r : rows) {
      out.penalty += penalty(r.v, r.lo, r.hi);
      if (want_grad && r.active) {
        double d = 2.0 * std::min(0.0, r.v - r.lo) + 2.0 * std::max(0.0, r.v - r.hi);
        (*grad)[state.spec.weight_count() + r.slot] += spec.weights.w_penalty * d;
      }
    }
    out.total += spec.weights.w_penalty * out.penalty;
  }

  if (want_grad) {  // zero frozen theta slots
    double* tg = grad->data() + state.spec.weight_count();
    const TrainableParams& th = state.theta;
    if (!th.train_mu) tg[kMuD] = tg[kMuR] = 0.0;
    if (!th.train_x0) tg[kX0] = tg[kX0 + 1] = tg[kX0 + 2] = 0.0;
    if (!th.train_uc) tg[kUcF] = tg[kUcT] = 0.0;
    if (!th.train_mA) tg[kM] = tg[kA] = 0.0;
  }
  if (!std::isfinite(out.total)) throw NumericError("loss: non-finite total loss");
  return out;
}

}  // namespace

LossTerms total_loss(const NetworkState& state, const CollocationBatch& batch,
                     const LossSpec& spec) {
  return run(state, batch, spec, nullptr);
}

LossTerms loss_and_gradient(const NetworkState& state, const CollocationBatch& batch,
                            const LossSpec& spec, std::vector<double>& grad) {
  return run(state, batch, spec, &grad);
}

double sample_density(const DensitySeries& series, const WorldPoint& p, double t) {
  if (series.snaps.empty()) throw ConfigError("sample_density: empty series");
  const auto& ts = series.times;
  if (t <= ts.front()) return trilinear_sample(series.snaps.front(), p);
  if (t >= ts.back()) return trilinear_sample(series.snaps.back(), p);
  std::size_t hi = 1;
  while (ts[hi] < t) ++hi;
  double w = (t - ts[hi - 1]) / (ts[hi] - ts[hi - 1]);
  return (1.0 - w) * trilinear_sample(series.snaps[hi - 1], p) +
         w * trilinear_sample(series.snaps[hi], p);
}

CollocationBatch build_batch(const BatchInputs& in,
                             const std::vector<SpaceTimePoint>& residual_pts,
                             const std::vector<WorldPoint>& data_pts) {
  if (!in.geom) throw ConfigError("build_batch: geometry required");
  const EffectiveGeometry& geo = *in.geom;
  CollocationBatch batch;
  batch.has_char = in.u_char != nullptr;
  batch.has_seg = in.y_flair != nullptr && in.y_t1gd != nullptr;
  batch.has_fet = in.fet != nullptr && in.y_fet != nullptr;
  batch.has_gt_residual = in.u_gt != nullptr;
  batch.has_gt_data = in.u_gt != nullptr;

  batch.residual.reserve(residual_pts.size());
  for (const auto& sp : residual_pts) {
    ResidualPoint rp;
    rp.x_mm[0] = sp.x_mm.x;
    rp.x_mm[1] = sp.x_mm.y;
    rp.x_mm[2] = sp.x_mm.z;
    rp.x_norm[0] = (sp.x_mm.x - in.x0_ref_mm.x) / in.L_bar_mm;
    rp.x_norm[1] = (sp.x_mm.y - in.x0_ref_mm.y) / in.L_bar_mm;
    rp.x_norm[2] = (sp.x_mm.z - in.x0_ref_mm.z) / in.L_bar_mm;
    rp.t = sp.t;
    rp.p_phi = trilinear_sample(geo.p_phi, sp.x_mm);
    rp.grad_p_phi_mm[0] = trilinear_sample(geo.grad_p_phi.gx, sp.x_mm);
    rp.grad_p_phi_mm[1] = trilinear_sample(geo.grad_p_phi.gy, sp.x_mm);
    rp.grad_p_phi_mm[2] = trilinear_sample(geo.grad_p_phi.gz, sp.x_mm);
    rp.phi = trilinear_sample(geo.phi, sp.x_mm);
    if (in.u_char) rp.u_char = sample_density(*in.u_char, sp.x_mm, sp.t);
    if (in.u_gt) rp.u_gt = sample_density(*in.u_gt, sp.x_mm, sp.t);
    if (!std::isfinite(rp.p_phi) || !std::isfinite(rp.phi))
      throw NumericError("build_batch: non-finite geometry value");
    batch.residual.push_back(rp);
  }
  batch.data.reserve(data_pts.size());
  for (const auto& p : data_pts) {
    DataPoint dp;
    dp.x_mm[0] = p.x;
    dp.x_mm[1] = p.y;
    dp.x_mm[2] = p.z;
    dp.x_norm[0] = (p.x - in.x0_ref_mm.x) / in.L_bar_mm;
    dp.x_norm[1] = (p.y - in.x0_ref_mm.y) / in.L_bar_mm;
    dp.x_norm[2] = (p.z - in.x0_ref_mm.z) / in.L_bar_mm;
    dp.phi = trilinear_sample(geo.phi, p);
    if (in.y_flair) dp.y_flair = trilinear_sample(*in.y_flair, p);
    if (in.y_t1gd) dp.y_t1gd = trilinear_sample(*in.y_t1gd, p);
    if (in.fet) dp.p_fet = trilinear_sample(*in.fet, p);
    if (in.y_fet) dp.y_fet = trilinear_sample(*in.y_fet, p);
    if (in.u_gt) dp.u_gt = sample_density(*in.u_gt, p, 1.0);
    batch.data.push_back(dp);
  }
  return batch;
}

}  // namespace gbm
