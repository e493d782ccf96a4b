#include "gbm/pipeline.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace gbm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv(std::uint64_t h, const void* p, std::size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_file(std::uint64_t h, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return fnv(h, "missing", 7);
  char buf[65536];
  while (f.read(buf, sizeof buf) || f.gcount() > 0) h = fnv(h, buf, std::size_t(f.gcount()));
  return h;
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

bool stage_fresh(const std::string& dir, const std::string& hash) {
  std::ifstream f(dir + "/meta.json");
  if (!f) return false;
  json j;
  try {
    f >> j;
  } catch (...) {
    return false;
  }
  return j.contains("stage_hash") && j["stage_hash"] == hash;
}

void write_stage_meta(const std::string& dir, const std::string& hash,
                      const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  json j;
  j["stage_hash"] = hash;
  for (const auto& [k, v] : extra) j[k] = v;
  std::ofstream f(dir + "/meta.json");
  f << j.dump(2) << "\n";
}

std::string preprocess_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  auto mixd = [&](double x) { h = fnv(h, &x, 8); };
  auto mixi = [&](std::int64_t x) { h = fnv(h, &x, 8); };
  mixi(c.geometry.synthetic);
  mixi(int(c.geometry.shape));
  for (int d = 0; d < 3; ++d) mixi(c.geometry.dims[d]);
  for (int d = 0; d < 3; ++d) mixd(c.geometry.spacing_mm[d]);
  mixd(c.geometry.radius_mm);
  mixd(c.geometry.shell_mm);
  mixd(c.ch.epsilon_mm);
  mixd(c.ch.t_final);
  mixd(c.ch.dt);
  mixd(c.ch.dt_safety);
  mixd(c.ch.rate_tol);
  mixd(c.tau);
  if (!c.geometry.synthetic) {
    for (const std::string& s :
         {c.geometry.p_w_stem, c.geometry.p_g_stem, c.geometry.mask_stem}) {
      h = hash_file(h, s + ".json");
      h = hash_file(h, s + ".raw");
    }
  }
  return hex(h);
}

}  // namespace

GeometryArtifacts cmd_preprocess(const RunConfig& cfg) {
  const std::string dir = cfg.output_dir + "/geom";
  fs::create_directories(dir);
  const std::string hash = preprocess_hash(cfg);

  GeometryArtifacts ga;
  if (stage_fresh(dir, hash)) {
    PhaseField pf;
    pf.phi = load_volume(dir + "/phi");
    pf.tau = cfg.tau;
    pf.epsilon_mm = cfg.ch.epsilon_mm;
    ScalarVolume p_w = load_volume(dir + "/p_w");
    ScalarVolume p_g = load_volume(dir + "/p_g");
    ga.geom = assemble_geometry(p_w, p_g, pf);
    ga.brain_mask = load_mask(dir + "/brain_mask");
    return ga;
  }

  ScalarVolume p_w, p_g;
  BinaryMask mask;
  if (cfg.geometry.synthetic) {
    SyntheticBrain brain = synthetic_brain(cfg.geometry.shape, cfg.geometry.dims,
                                           cfg.geometry.spacing_mm, cfg.geometry.radius_mm,
                                           cfg.geometry.shell_mm);
    p_w = std::move(brain.p_w);
    p_g = std::move(brain.p_g);
    mask = std::move(brain.mask);
  } else {
    p_w = load_volume(cfg.geometry.p_w_stem);
    p_g = load_volume(cfg.geometry.p_g_stem);
    mask = load_mask(cfg.geometry.mask_stem);
  }
  PhaseField pf = cahn_hilliard_evolve(mask, cfg.ch);
  pf.tau = cfg.tau;
  ga.geom = assemble_geometry(p_w, p_g, pf);
  ga.brain_mask = mask;
  ga.phasefield_t = pf.t_reached;

  save_volume(p_w, dir + "/p_w");
  save_volume(p_g, dir + "/p_g");
  save_mask(mask, dir + "/brain_mask");
  save_volume(pf.phi, dir + "/phi");
  save_volume(ga.geom.p_phi, dir + "/p_phi");
  save_volume(ga.geom.grad_p_phi.gx, dir + "/grad_p_phi_x");
  save_volume(ga.geom.grad_p_phi.gy, dir + "/grad_p_phi_y");
  save_volume(ga.geom.grad_p_phi.gz, dir + "/grad_p_phi_z");
  write_stage_meta(dir, hash,
                   {{"tau", format_g17(cfg.tau)},
                    {"phi_variant", "phi_eff = clamp(phi,0,1) + tau"},
                    {"t_reached", format_g17(pf.t_reached)},
                    {"final_rate", format_g17(pf.final_rate)}});
  return ga;
}

CaseData load_case_data(const RunConfig& cfg) {
  CaseData d;
  if (cfg.y_t1gd_stem.empty() || cfg.y_flair_stem.empty())
    throw MissingInput("config: masks.y_t1gd and masks.y_flair are required");
  d.y_t1gd = load_mask(cfg.y_t1gd_stem);
  d.y_flair = load_mask(cfg.y_flair_stem);
  if (!cfg.fet_stem.empty()) {
    d.fet = load_volume(cfg.fet_stem);
    if (cfg.y_fet_stem.empty())
      throw MissingInput("config: fet.volume given without fet.mask");
    d.y_fet = load_mask(cfg.y_fet_stem);
  }
  if (!cfg.density_truth_manifest.empty()) {
    std::ifstream f(cfg.density_truth_manifest);
    if (!f) throw MissingInput("density truth manifest not found: " + cfg.density_truth_manifest);
    json j;
    f >> j;
    DensitySeries series;
    fs::path base = fs::path(cfg.density_truth_manifest).parent_path();
    for (const auto& row : j.at("snapshots")) {
      series.times.push_back(row.at("t").get<double>());
      series.snaps.push_back(load_volume((base / row.at("stem").get<std::string>()).string()));
    }
    d.u_gt = std::move(series);
  }
  return d;
}

CharacteristicParams cmd_gridsearch(const RunConfig& cfg, const CaseData& data) {
  SegFeatures f = extract_features(data.y_t1gd, data.y_flair);
  LookupTable table = load_or_build_lookup_table(
      cfg.lookup, cfg.lookup_cache_dir.empty() ? cfg.output_dir + "/lookup_cache"
                                               : cfg.lookup_cache_dir);
  return grid_search(f, table);
}

namespace {

DensitySeries run_char_fdm(const GeometryArtifacts& ga, const CharacteristicParams& chr,
                           const WorldPoint& x0, int n_snapshots) {
  FkppParams p;
  p.cal_D = chr.cal_D;
  p.cal_R = chr.cal_R;
  p.mu_D = 1.0;
  p.mu_R = 1.0;
  p.x0_mm = x0;
  p.L_bar_mm = chr.L_bar_mm;
  std::vector<double> times(n_snapshots);
  for (int s = 0; s < n_snapshots; ++s) times[s] = double(s) / double(n_snapshots - 1);
  Fkpp3dResult run = solve_fkpp_3d(ga.geom, p, 1.0, 0.0, times);
  DensitySeries series;
  series.snaps = std::move(run.snapshots);
  series.times = std::move(run.times);
  return series;
}

double clamp_ball_radius(const ScalarVolume& grid, const WorldPoint& x0, double R) {
  const auto& o = grid.origin();
  const auto& s = grid.spacing();
  double m = R;
  for (int d = 0; d < 3; ++d) {
    double lo = d == 0 ? x0.x : d == 1 ? x0.y : x0.z;
    m = std::min(m, lo - o[d]);
    m = std::min(m, o[d] + (grid.dims()[d] - 1) * s[d] - lo);
  }
  return m;
}

}  // namespace

PretrainArtifacts cmd_pretrain(const RunConfig& cfg, const GeometryArtifacts& ga,
                               const CaseData& data) {
  PretrainArtifacts pa;
  pa.features = extract_features(data.y_t1gd, data.y_flair);
  pa.chr = cmd_gridsearch(cfg, data);
  pa.u_char = run_char_fdm(ga, pa.chr, pa.features.centroid_mm, cfg.fdm_snapshots);

  pa.R_enclosing = enclosing_radius(pa.u_char.snaps.back(), pa.features.centroid_mm,
                                    cfg.sampler_pretrain.density_floor);
  pa.R_enclosing = clamp_ball_radius(ga.geom.p_phi, pa.features.centroid_mm, pa.R_enclosing);

  pa.state = init_weights(cfg.net, cfg.seed);
  pa.state.L_bar_mm = pa.chr.L_bar_mm;
  pa.state.d_over_rho = pa.chr.d_over_rho;
  pa.state.x0_ref_mm = pa.features.centroid_mm;
  pa.state.theta.x0_mm = pa.features.centroid_mm;
  pa.state.theta.u_c_flair = cfg.init_u_c_flair;
  pa.state.theta.u_c_t1gd = cfg.init_u_c_t1gd;
  pa.state.theta.train_mu = false;  // pretrain fits weights only
  pa.state.theta.train_x0 = false;
  pa.state.theta.train_uc = false;
  pa.state.theta.train_mA = false;

  SamplerConfig sc = cfg.sampler_pretrain;
  sc.seed = cfg.seed;
  auto train_pts = sample_residual_points(sc, pa.features.centroid_mm, pa.R_enclosing);
  sc.seed = cfg.seed + 1;  // independent derived seed for the test split
  auto test_pts = sample_residual_points(sc, pa.features.centroid_mm, pa.R_enclosing);

  BatchInputs bi;
  bi.geom = &ga.geom;
  bi.L_bar_mm = pa.chr.L_bar_mm;
  bi.x0_ref_mm = pa.features.centroid_mm;
  bi.u_char = &pa.u_char;
  CollocationBatch train_batch = build_batch(bi, train_pts, {});
  CollocationBatch test_batch = build_batch(bi, test_pts, {});

  LossSpec spec;
  spec.stage = Stage::Pretrain;
  spec.weights = cfg.loss_weights;
  spec.bounds = cfg.bounds;
  spec.cal_D = pa.chr.cal_D;
  spec.cal_R = pa.chr.cal_R;
  spec.sigmoid_a = cfg.sigmoid_a;

  StageConfig stage_cfg = cfg.pretrain;
  stage_cfg.stage = Stage::Pretrain;
  pa.record = train_stage(pa.state, train_batch, test_batch, spec, stage_cfg);
  return pa;
}

FinetuneArtifacts cmd_finetune(const RunConfig& cfg, const GeometryArtifacts& ga,
                               const CaseData& data, const PretrainArtifacts& pa) {
  FinetuneArtifacts fa;
  fa.state = pa.state;
  TrainableParams& th = fa.state.theta;
  th.mu_D = 1.0;
  th.mu_R = 1.0;
  th.x0_mm = pa.features.centroid_mm;
  th.u_c_flair = cfg.init_u_c_flair;
  th.u_c_t1gd = cfg.init_u_c_t1gd;
  th.m = 1.0;
  th.A = 0.0;
  th.train_mu = true;
  th.train_x0 = true;
  switch (cfg.data_mode) {
    case DataMode::SEG:
      th.train_uc = true;
      th.train_mA = false;
      break;
    case DataMode::FET_SEG:
      th.train_uc = true;
      th.train_mA = true;
      break;
    case DataMode::UTALL:
    case DataMode::UTEND:
      th.train_uc = false;
      th.train_mA = false;
      break;
  }
  if ((cfg.data_mode == DataMode::UTALL || cfg.data_mode == DataMode::UTEND) && !data.u_gt)
    throw MissingInput("data mode " + data_mode_name(cfg.data_mode) +
                       " requires density_truth_manifest");
  if (cfg.data_mode == DataMode::FET_SEG && !data.fet)
    throw MissingInput("FET+SEG mode requires fet inputs");

  SamplerConfig sc = cfg.sampler_finetune;
  sc.seed = cfg.seed + 2;
  auto train_pts = sample_residual_points(sc, pa.features.centroid_mm, pa.R_enclosing);
  sc.seed = cfg.seed + 3;
  auto test_pts = sample_residual_points(sc, pa.features.centroid_mm, pa.R_enclosing);
  sc.seed = cfg.seed + 4;
  auto dp = sample_data_points(sc, ga.geom.p_phi, pa.features.centroid_mm, pa.R_enclosing);
  sc.seed = cfg.seed + 5;
  auto dp_test = sample_data_points(sc, ga.geom.p_phi, pa.features.centroid_mm, pa.R_enclosing);

  BatchInputs bi;
  bi.geom = &ga.geom;
  bi.L_bar_mm = pa.chr.L_bar_mm;
  bi.x0_ref_mm = pa.features.centroid_mm;
  bi.y_flair = &data.y_flair;
  bi.y_t1gd = &data.y_t1gd;
  if (data.fet) {
    bi.fet = &*data.fet;
    bi.y_fet = &*data.y_fet;
  }
  if (data.u_gt) bi.u_gt = &*data.u_gt;
  CollocationBatch train_batch = build_batch(bi, train_pts, dp.points);
  CollocationBatch test_batch = build_batch(bi, test_pts, dp_test.points);

  LossSpec spec;
  spec.stage = Stage::Finetune;
  spec.mode = cfg.data_mode;
  spec.weights = cfg.loss_weights;
  spec.bounds = cfg.bounds;
  spec.cal_D = pa.chr.cal_D;
  spec.cal_R = pa.chr.cal_R;
  spec.sigmoid_a = cfg.sigmoid_a;

  StageConfig stage_cfg = cfg.finetune;
  stage_cfg.stage = Stage::Finetune;
  fa.record = train_stage(fa.state, train_batch, test_batch, spec, stage_cfg);
  return fa;
}

std::vector<ScalarVolume> predict_fdm(const GeometryArtifacts& ga,
                                      const CharacteristicParams& chr,
                                      const TrainableParams& theta,
                                      const std::vector<double>& times, int* steps) {
  FkppParams p;
  p.cal_D = chr.cal_D;
  p.cal_R = chr.cal_R;
  p.mu_D = theta.mu_D;
  p.mu_R = theta.mu_R;
  p.x0_mm = theta.x0_mm;
  p.L_bar_mm = chr.L_bar_mm;
  double t_end = 0.0;
  for (double t : times) t_end = std::max(t_end, t);
  Fkpp3dResult run = solve_fkpp_3d(ga.geom, p, std::max(t_end, 1e-9), 0.0, times);
  if (steps) *steps = int(run.steps);
  return std::move(run.snapshots);
}

ScalarVolume predict_pinn(const NetworkState& state, const ScalarVolume& grid, double t_norm) {
  if (t_norm < 0.0 || t_norm > 1.0)
    throw ConfigError(
        "predict_pinn: the network is trained on t in [0,1]; evaluation beyond the "
        "training horizon is refused (use the FDM prediction instead)");
  ScalarVolume out(grid.dims(), grid.spacing(), grid.origin());
  NetEngine eng(state.spec);
  const int nx = grid.nx(), ny = grid.ny(), nz = grid.nz();
  const int chunk = 4096;
  std::vector<WorldPoint> pts;
  pts.reserve(chunk);
  Eigen::MatrixXd X(4, chunk);
  Eigen::RowVectorXd y;
  std::size_t n0 = 0;
  auto flush = [&](std::size_t count) {
    if (count == 0) return;
    eng.forward(state.weights, X.leftCols(int(count)), y, nullptr, nullptr);
    for (std::size_t c = 0; c < count; ++c) {
      double x_mm[3] = {pts[c].x, pts[c].y, pts[c].z};
      GaussianIC ic = gaussian_ic(x_mm, state.theta.x0_mm);
      out[n0 + c] = t_norm * y(int(c)) + ic.u0;
    }
    n0 += count;
    pts.clear();
  };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        WorldPoint w = grid.world(i, j, k);
        int c = int(pts.size());
        X(0, c) = (w.x - state.x0_ref_mm.x) / state.L_bar_mm;
        X(1, c) = (w.y - state.x0_ref_mm.y) / state.L_bar_mm;
        X(2, c) = (w.z - state.x0_ref_mm.z) / state.L_bar_mm;
        X(3, c) = t_norm;
        pts.push_back(w);
        if (int(pts.size()) == chunk) flush(chunk);
      }
  flush(pts.size());
  return out;
}

EvalReport evaluate_case(const RunConfig& cfg, const GeometryArtifacts& ga,
                         const CaseData& data, const ScalarVolume& u_fdm_t1,
                         const TrainableParams& theta,
                         const BinaryMask* recurrence, bool* has_recurrence) {
  EvalReport rep;
  const ScalarVolume& phi = ga.geom.phi;
  ScalarVolume phi_u(u_fdm_t1.dims(), u_fdm_t1.spacing(), u_fdm_t1.origin());
  for (std::size_t n = 0; n < phi_u.size(); ++n) phi_u[n] = phi[n] * u_fdm_t1[n];

  BinaryMask pred_t1gd(u_fdm_t1.dims(), u_fdm_t1.spacing(), u_fdm_t1.origin());
  BinaryMask pred_flair(u_fdm_t1.dims(), u_fdm_t1.spacing(), u_fdm_t1.origin());
  for (std::size_t n = 0; n < phi_u.size(); ++n) {
    pred_t1gd[n] = phi_u[n] > theta.u_c_t1gd ? 1.0 : 0.0;
    pred_flair[n] = phi_u[n] > theta.u_c_flair ? 1.0 : 0.0;
  }
  rep.dice_t1gd = dice(pred_t1gd, data.y_t1gd);
  rep.dice_flair = dice(pred_flair, data.y_flair);

  if (data.fet && data.y_fet) {
    ScalarVolume pred(phi_u.dims(), phi_u.spacing(), phi_u.origin());
    if (cfg.data_mode == DataMode::FET_SEG) {
      for (std::size_t n = 0; n < pred.size(); ++n) pred[n] = theta.m * phi_u[n] - theta.A;
      rep.corr_fet = corr_fet(pred, *data.fet, *data.y_fet, FetCorrMode::Model);
    } else {
      rep.corr_fet = corr_fet(phi_u, *data.fet, *data.y_fet, FetCorrMode::Density);
    }
    rep.solidity = solidity(*data.y_fet);
  }

  BinaryMask rtog = rtog_ctv(data.y_flair, 20.0);
  BinaryMask pers = personalized_ctv(u_fdm_t1, 0.01);
  rep.ctv_rtog_volume_mm3 = double(rtog.count()) * rtog.voxel_volume();
  rep.ctv_pers_volume_mm3 = double(pers.count()) * pers.voxel_volume();
  if (recurrence) {
    rep.ctv_rtog_efficiency = ctv_stats(rtog, *recurrence).efficiency;
    rep.ctv_pers_efficiency = ctv_stats(pers, *recurrence).efficiency;
    if (has_recurrence) *has_recurrence = true;
  } else if (has_recurrence) {
    *has_recurrence = false;
  }
  return rep;
}

void write_inference_result(const InferenceResult& r, const std::string& path) {
  JsonWriter w;
  w.begin();
  w.field("config_hash", r.config_hash);
  w.field("seed", std::uint64_t(r.seed));
  w.field("data_mode", r.data_mode);
  w.field("skipped_finetune", r.skipped_finetune);
  w.begin("characteristic_params");
  w.field("d_over_rho", r.chr.d_over_rho);
  w.field("L_bar_mm", r.chr.L_bar_mm);
  w.field("cal_D", r.chr.cal_D);
  w.field("cal_R", r.chr.cal_R);
  w.end();
  w.begin("theta");
  w.field("mu_D", r.theta.mu_D);
  w.field("mu_R", r.theta.mu_R);
  w.field("x0_mm", std::vector<double>{r.theta.x0_mm.x, r.theta.x0_mm.y, r.theta.x0_mm.z});
  w.field("u_c_flair", r.theta.u_c_flair);
  w.field("u_c_t1gd", r.theta.u_c_t1gd);
  w.field("m", r.theta.m);
  w.field("A", r.theta.A);
  w.end();
  auto losses = [&](const std::string& name, const LossTerms& t) {
    w.begin(name);
    w.field("total", t.total);
    w.field("pde", t.pde);
    w.field("char", t.chr);
    w.field("seg", t.seg);
    w.field("fet", t.fet);
    w.field("data", t.data);
    w.field("penalty", t.penalty);
    w.end();
  };
  losses("pretrain_losses", r.pretrain_losses);
  losses("finetune_losses", r.finetune_losses);
  w.begin("metrics");
  w.field("dice_t1gd", r.metrics.dice_t1gd);
  w.field("dice_flair", r.metrics.dice_flair);
  w.field("corr_fet", r.metrics.corr_fet);
  w.field("solidity", r.metrics.solidity);
  w.field("ctv_rtog_volume_mm3", r.metrics.ctv_rtog_volume_mm3);
  w.field("ctv_pers_volume_mm3", r.metrics.ctv_pers_volume_mm3);
  w.field("has_recurrence_metrics", r.has_recurrence_metrics);
  if (r.has_recurrence_metrics) {
    w.field("ctv_rtog_efficiency", r.metrics.ctv_rtog_efficiency);
    w.field("ctv_pers_efficiency", r.metrics.ctv_pers_efficiency);
  }
  w.end();
  w.end();
  w.save(path);
}

InferenceResult cmd_pipeline(const RunConfig& cfg, bool skip_finetune) {
  fs::create_directories(cfg.output_dir);
  GeometryArtifacts ga = cmd_preprocess(cfg);
  CaseData data = load_case_data(cfg);

  PretrainArtifacts pa = cmd_pretrain(cfg, ga, data);
  write_record_csv(pa.record, cfg.output_dir + "/pretrain_record.csv");
  save_checkpoint(pa.state, cfg.output_dir + "/checkpoint_pretrain");

  InferenceResult res;
  res.chr = pa.chr;
  res.config_hash = cfg.config_hash();
  res.seed = cfg.seed;
  res.data_mode = data_mode_name(cfg.data_mode);
  res.pretrain_losses = pa.record.final_train;
  res.skipped_finetune = skip_finetune;

  NetworkState final_state = pa.state;
  if (!skip_finetune) {
    FinetuneArtifacts fa = cmd_finetune(cfg, ga, data, pa);
    write_record_csv(fa.record, cfg.output_dir + "/finetune_record.csv");
    save_checkpoint(fa.state, cfg.output_dir + "/checkpoint_finetune");
    res.finetune_losses = fa.record.final_train;
    final_state = fa.state;
  } else {
    final_state.theta.mu_D = 1.0;
    final_state.theta.mu_R = 1.0;
    final_state.theta.x0_mm = pa.features.centroid_mm;
    final_state.theta.u_c_flair = cfg.init_u_c_flair;
    final_state.theta.u_c_t1gd = cfg.init_u_c_t1gd;
    final_state.theta.m = 1.0;
    final_state.theta.A = 0.0;
  }
  res.theta = final_state.theta;

  // u^FDM predictions at requested times (clamped to >= 1.0 horizon for eval)
  std::vector<double> times = cfg.snapshot_times;
  bool has_t1 = false;
  for (double t : times) has_t1 |= std::abs(t - 1.0) < 1e-12;
  if (!has_t1) times.push_back(1.0);
  std::vector<ScalarVolume> preds = predict_fdm(ga, pa.chr, final_state.theta, times);
  std::size_t t1_idx = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "u_t%g", times[i]);
    save_volume(preds[i], cfg.output_dir + "/" + name);
    if (std::abs(times[i] - 1.0) < 1e-12) t1_idx = i;
  }
  ScalarVolume u_pinn = predict_pinn(final_state, ga.geom.p_phi, 1.0);
  for (auto& v : u_pinn.data()) v = std::clamp(v, 0.0, 1.0);
  save_volume(u_pinn, cfg.output_dir + "/u_pinn_t1");

  res.metrics = evaluate_case(cfg, ga, data, preds[t1_idx], final_state.theta, nullptr,
                              &res.has_recurrence_metrics);
  write_inference_result(res, cfg.output_dir + "/inference_result.json");
  return res;
}

}  // namespace gbm
