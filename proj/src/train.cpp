#include "gbm/train.hpp"

#include <cmath>
#include <deque>
#include <fstream>

namespace gbm {

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& st, double lr) {
  if (params.size() != grads.size()) throw ConfigError("adam_step: shape mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  st.t += 1;
  const double b1t = 1.0 - std::pow(st.beta1, double(st.t));
  const double b2t = 1.0 - std::pow(st.beta2, double(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
    double mh = st.m[i] / b1t;
    double vh = st.v[i] / b2t;
    params[i] -= lr * mh / (std::sqrt(vh) + st.eps);
  }
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Strong Wolfe line search (bracket + zoom), c1=1e-4, c2=0.9.
struct LineSearchResult {
  double alpha = 0.0, f = 0.0;
  bool ok = false;
  int evals = 0;
};

LineSearchResult wolfe_search(const Objective& fobj, const std::vector<double>& x0,
                              const std::vector<double>& d, double f0, double g0,
                              int max_trials, std::vector<double>& xtmp,
                              std::vector<double>& gtmp) {
  const double c1 = 1e-4, c2 = 0.9;
  auto eval = [&](double a, double& f, double& g) {
    for (std::size_t i = 0; i < x0.size(); ++i) xtmp[i] = x0[i] + a * d[i];
    f = fobj(xtmp, gtmp);
    g = dot(gtmp, d);
  };
  LineSearchResult res;
  double alo = 0.0, flo = f0, glo = g0;
  double aprev = 0.0, fprev = f0, gprev = g0;
  double a = 1.0;
  bool bracketed = false;
  double ahi = 0.0, fhi = 0.0;
  for (int it = 0; it < max_trials; ++it) {
    double f, g;
    if (!bracketed) {
      eval(a, f, g);
      ++res.evals;
      if (!std::isfinite(f)) {  // backtrack out of the bad region
        a = 0.5 * (aprev + a);
        continue;
      }
      if (f > f0 + c1 * a * g0 || (it > 0 && f >= fprev)) {
        alo = aprev; flo = fprev; glo = gprev;
        ahi = a; fhi = f;
        bracketed = true;
        continue;
      }
      if (std::abs(g) <= -c2 * g0) {
        res.alpha = a; res.f = f; res.ok = true;
        return res;
      }
      if (g >= 0.0) {
        alo = a; flo = f; glo = g;
        ahi = aprev; fhi = fprev;
        bracketed = true;
        continue;
      }
      aprev = a; fprev = f; gprev = g;
      a *= 2.0;
    } else {  // zoom
      a = 0.5 * (alo + ahi);
      eval(a, f, g);
      ++res.evals;
      if (!std::isfinite(f) || f > f0 + c1 * a * g0 || f >= flo) {
        ahi = a; fhi = f;
      } else {
        if (std::abs(g) <= -c2 * g0) {
          res.alpha = a; res.f = f; res.ok = true;
          return res;
        }
        if (g * (ahi - alo) >= 0.0) { ahi = alo; fhi = flo; }
        alo = a; flo = f; glo = g;
      }
      if (std::abs(ahi - alo) < 1e-16 * std::max(1.0, std::abs(alo))) break;
    }
  }
  // accept a sufficient-decrease point even if curvature was not met
  if (bracketed && flo < f0) {
    res.alpha = alo; res.f = flo; res.ok = alo > 0.0;
  }
  return res;
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double>& x,
                           const LbfgsConfig& cfg,
                           const std::function<bool(long, double)>& on_accept) {
  const std::size_t n = x.size();
  std::vector<double> g(n), xtmp(n), gtmp(n);
  double fx = f(x, g);
  if (!std::isfinite(fx)) throw NumericError("lbfgs: objective not finite at x0");

  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho;
  std::vector<double> d(n), q(n), alpha_buf;
  std::vector<double> x_best = x;
  double f_best = fx;
  LbfgsResult res;

  for (long iter = 0; iter < cfg.max_iters; ++iter) {
    // two-loop recursion: d = -H*g
    q = g;
    const int m = int(S.size());
    alpha_buf.assign(m, 0.0);
    for (int i = m - 1; i >= 0; --i) {
      double a = rho[i] * dot(S[i], q);
      alpha_buf[i] = a;
      for (std::size_t k = 0; k < n; ++k) q[k] -= a * Y[i][k];
    }
    double gamma = 1.0;
    if (m > 0) {
      double yy = dot(Y[m - 1], Y[m - 1]);
      if (yy > 0.0) gamma = dot(S[m - 1], Y[m - 1]) / yy;
    }
    for (std::size_t k = 0; k < n; ++k) q[k] *= gamma;
    for (int i = 0; i < m; ++i) {
      double b = rho[i] * dot(Y[i], q);
      for (std::size_t k = 0; k < n; ++k) q[k] += (alpha_buf[i] - b) * S[i][k];
    }
    for (std::size_t k = 0; k < n; ++k) d[k] = -q[k];

    double gd = dot(g, d);
    if (gd >= 0.0) {  // not a descent direction; restart from steepest descent
      S.clear(); Y.clear(); rho.clear();
      for (std::size_t k = 0; k < n; ++k) d[k] = -g[k];
      gd = dot(g, d);
      if (gd >= 0.0) break;  // gradient is zero
    }

    LineSearchResult ls = wolfe_search(f, x, d, fx, gd, cfg.max_line_search, xtmp, gtmp);
    if (!ls.ok) {
      res.line_search_failed = true;
      break;
    }
    std::vector<double> s(n), y(n);
    double fnew = ls.f;
    // gradient at the accepted point (gtmp currently holds it from the last eval
    // of the search at ls.alpha only if that eval was the accepted one; re-eval
    // to be safe and exact)
    for (std::size_t k = 0; k < n; ++k) xtmp[k] = x[k] + ls.alpha * d[k];
    fnew = f(xtmp, gtmp);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = xtmp[k] - x[k];
      y[k] = gtmp[k] - g[k];
    }
    x.swap(xtmp);
    g.swap(gtmp);
    double fprev = fx;
    fx = fnew;
    res.iters = iter + 1;
    if (fx < f_best) {
      f_best = fx;
      x_best = x;
    }
    double sy = dot(s, y);
    if (sy > 1e-12 * dot(y, y)) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho.push_back(1.0 / sy);
      if (int(S.size()) > cfg.history) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    if (on_accept && !on_accept(iter + 1, fx)) break;
    double rel = (fprev - fx) / std::max({std::abs(fprev), std::abs(fx), 1.0});
    if (rel < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  if (fx > f_best) {
    x = x_best;
    fx = f_best;
  }
  res.final_loss = fx;
  return res;
}

std::vector<double> pack_params(const NetworkState& state) {
  std::vector<double> x = state.weights;
  x.resize(state.weights.size() + TrainableParams::kSlots);
  double* t = x.data() + state.weights.size();
  const TrainableParams& th = state.theta;
  t[0] = th.mu_D;
  t[1] = th.mu_R;
  t[2] = th.x0_mm.x;
  t[3] = th.x0_mm.y;
  t[4] = th.x0_mm.z;
  t[5] = th.u_c_flair;
  t[6] = th.u_c_t1gd;
  t[7] = th.m;
  t[8] = th.A;
  return x;
}

void unpack_params(const std::vector<double>& x, NetworkState& state) {
  std::copy(x.begin(), x.begin() + std::ptrdiff_t(state.weights.size()),
            state.weights.begin());
  const double* t = x.data() + state.weights.size();
  TrainableParams& th = state.theta;
  th.mu_D = t[0];
  th.mu_R = t[1];
  th.x0_mm = {t[2], t[3], t[4]};
  th.u_c_flair = t[5];
  th.u_c_t1gd = t[6];
  th.m = t[7];
  th.A = t[8];
}

TrainRecord train_stage(NetworkState& state, const CollocationBatch& train_batch,
                        const CollocationBatch& test_batch, const LossSpec& spec,
                        const StageConfig& cfg) {
  TrainRecord rec;
  std::vector<double> x = pack_params(state);
  std::vector<double> grad;

  auto eval_test = [&]() {
    unpack_params(x, state);
    return total_loss(state, test_batch, spec).total;
  };

  // ---- ADAM phase
  AdamState adam;
  double best_train = std::numeric_limits<double>::infinity();
  double best_test = std::numeric_limits<double>::infinity();
  long best_train_it = 0, best_test_it = 0;
  double last_test = std::numeric_limits<double>::quiet_NaN();
  rec.stop_reason = "max_iters";
  for (long it = 0; it < cfg.max_iters; ++it) {
    unpack_params(x, state);
    LossTerms terms = loss_and_gradient(state, train_batch, spec, grad);
    if (terms.total > 1e6)
      throw NumericError("train_stage: divergence, loss " + std::to_string(terms.total));
    adam_step(x, grad, adam, cfg.adam_lr);
    if (cfg.test_every > 0 && it % cfg.test_every == 0) {
      last_test = eval_test();
      if (last_test < best_test * (1.0 - 1e-12)) {
        best_test = last_test;
        best_test_it = it;
      }
    }
    if (terms.total < best_train * (1.0 - 1e-12)) {
      best_train = terms.total;
      best_train_it = it;
    }
    rec.iters.push_back({it, terms, last_test, 'A'});
    rec.adam_iters = it + 1;
    if (it - best_train_it > cfg.early_stop_patience ||
        it - best_test_it > cfg.early_stop_patience) {
      rec.stop_reason = "early_stop";
      break;
    }
  }

  // ---- L-BFGS phase
  long lbfgs_best_it = 0;
  double lbfgs_best_test = std::numeric_limits<double>::infinity();
  LossTerms last_terms;  // terms at the most recent objective evaluation
  auto objective = [&](const std::vector<double>& xv, std::vector<double>& gv) {
    unpack_params(xv, state);
    last_terms = loss_and_gradient(state, train_batch, spec, gv);
    return last_terms.total;
  };
  auto on_accept = [&](long it, double fx) {
    // lbfgs re-evaluates at the accepted point last, so last_terms matches x
    double tv = eval_test();
    rec.iters.push_back({cfg.max_iters + it, last_terms, tv, 'L'});
    if (tv < lbfgs_best_test * (1.0 - 1e-12)) {
      lbfgs_best_test = tv;
      lbfgs_best_it = it;
    }
    return (it - lbfgs_best_it) <= cfg.early_stop_patience;
  };
  LbfgsResult lres = lbfgs_minimize(objective, x, cfg.lbfgs, on_accept);
  rec.lbfgs_iters = lres.iters;
  if (lres.converged) rec.stop_reason += "+lbfgs_tol";
  else if (lres.line_search_failed) rec.stop_reason += "+lbfgs_linesearch";
  else rec.stop_reason += "+lbfgs_max";

  unpack_params(x, state);
  rec.final_train = total_loss(state, train_batch, spec);
  rec.final_test = total_loss(state, test_batch, spec);
  return rec;
}

void write_record_csv(const TrainRecord& rec, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw MissingInput("cannot write: " + path);
  f << "iter,phase,total,pde,char,seg,fet,data,penalty,test_total\n";
  for (const auto& r : rec.iters) {
    char line[320];
    std::snprintf(line, sizeof line, "%ld,%c,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.iter, r.phase, r.train.total, r.train.pde, r.train.chr, r.train.seg,
                  r.train.fet, r.train.data, r.train.penalty, r.test_total);
    f << line;
  }
}

}  // namespace gbm
