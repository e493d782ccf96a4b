#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "gbm/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace gbm;
using nlohmann::json;

namespace {

RunConfig need_config(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required");
  return load_config(path);
}

int run_synth(const RunConfig& cfg, const std::string& gt_path, const std::string& out_dir) {
  std::ifstream f(gt_path);
  if (!f) throw MissingInput("GT parameter file not found: " + gt_path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad GT JSON: ") + e.what());
  }
  GeometryArtifacts ga = cmd_preprocess(cfg);

  SyntheticCaseParams gt;
  CharacteristicParams chr =
      make_char_params(j.at("d_over_rho").get<double>(), j.at("L_bar").get<double>());
  gt.fkpp.cal_D = chr.cal_D;
  gt.fkpp.cal_R = chr.cal_R;
  gt.fkpp.L_bar_mm = chr.L_bar_mm;
  gt.fkpp.mu_D = j.at("mu_D").get<double>();
  gt.fkpp.mu_R = j.at("mu_R").get<double>();
  if (j.contains("x0_mm")) {
    gt.fkpp.x0_mm = {j["x0_mm"][0].get<double>(), j["x0_mm"][1].get<double>(),
                     j["x0_mm"][2].get<double>()};
  } else {  // default: center of the grid
    const auto& g = ga.geom.p_phi;
    gt.fkpp.x0_mm = g.world((g.nx() - 1) / 2, (g.ny() - 1) / 2, (g.nz() - 1) / 2);
  }
  gt.u_c_flair = j.value("u_c_flair", 0.35);
  gt.u_c_t1gd = j.value("u_c_t1gd", 0.6);
  gt.m = j.value("m", 1.0);
  gt.A = j.value("A", 0.1);
  gt.fet_from_noisy = j.value("fet_from_noisy", true);

  NoiseConfig noise;
  if (j.contains("noise")) {
    noise.sigma = j["noise"].value("sigma", noise.sigma);
    noise.kernel_size = j["noise"].value("kernel_size", noise.kernel_size);
    noise.seed = j["noise"].value("seed", std::uint64_t(0));
    noise.amplitude = j["noise"].value("amplitude", 1.0);
  } else {
    noise.amplitude = 0.0;
  }

  SyntheticCase sc = make_synthetic_case(gt, ga.geom, noise, cfg.fdm_snapshots);
  fs::create_directories(out_dir);
  save_mask(sc.y_t1gd, out_dir + "/y_t1gd");
  save_mask(sc.y_flair, out_dir + "/y_flair");
  save_mask(sc.y_fet, out_dir + "/y_fet");
  save_volume(sc.fet, out_dir + "/fet");
  save_volume(sc.u_gt, out_dir + "/u_gt");
  save_volume(sc.u_noisy, out_dir + "/u_noisy");
  json manifest;
  manifest["gt"] = {{"d_over_rho", chr.d_over_rho},
                    {"L_bar", chr.L_bar_mm},
                    {"cal_D", chr.cal_D},
                    {"cal_R", chr.cal_R},
                    {"mu_D", gt.fkpp.mu_D},
                    {"mu_R", gt.fkpp.mu_R},
                    {"x0_mm", {gt.fkpp.x0_mm.x, gt.fkpp.x0_mm.y, gt.fkpp.x0_mm.z}},
                    {"u_c_flair", gt.u_c_flair},
                    {"u_c_t1gd", gt.u_c_t1gd},
                    {"m", gt.m},
                    {"A", gt.A},
                    {"fet_from_noisy", gt.fet_from_noisy}};
  manifest["noise"] = {{"sigma", noise.sigma},
                       {"kernel_size", noise.kernel_size},
                       {"seed", noise.seed},
                       {"amplitude", noise.amplitude}};
  json snaps = json::array();
  for (std::size_t s = 0; s < sc.u_gt_series.snaps.size(); ++s) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "u_gt_s%02zu", s);
    save_volume(sc.u_gt_series.snaps[s], out_dir + "/" + stem);
    snaps.push_back({{"t", sc.u_gt_series.times[s]}, {"stem", stem}});
  }
  manifest["snapshots"] = snaps;
  std::ofstream mf(out_dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
  std::printf("synthetic case written to %s\n", out_dir.c_str());
  return 0;
}

int run_predict(const RunConfig& cfg, const std::string& checkpoint,
                const std::vector<double>& times, bool want_pinn) {
  GeometryArtifacts ga = cmd_preprocess(cfg);
  NetworkState st = load_checkpoint(checkpoint);
  if (st.d_over_rho <= 0.0)
    throw ConfigError("checkpoint lacks characteristic parameters");
  CharacteristicParams chr = make_char_params(st.d_over_rho, st.L_bar_mm);

  fs::create_directories(cfg.output_dir);
  if (want_pinn) {
    for (double t : times) {
      ScalarVolume u = predict_pinn(st, ga.geom.p_phi, t);
      char name[64];
      std::snprintf(name, sizeof name, "u_pinn_t%g", t);
      save_volume(u, cfg.output_dir + "/" + name);
    }
  } else {
    std::vector<ScalarVolume> preds = predict_fdm(ga, chr, st.theta, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "u_t%g", times[i]);
      save_volume(preds[i], cfg.output_dir + "/" + name);
    }
  }
  return 0;
}

int run_evaluate(const RunConfig& cfg, const std::string& u_fdm_stem,
                 const std::string& recurrence_stem, const std::string& out_path) {
  GeometryArtifacts ga = cmd_preprocess(cfg);
  CaseData data = load_case_data(cfg);
  ScalarVolume u_fdm = load_volume(u_fdm_stem);
  TrainableParams theta;
  theta.u_c_flair = cfg.init_u_c_flair;
  theta.u_c_t1gd = cfg.init_u_c_t1gd;
  std::optional<BinaryMask> rec;
  if (!recurrence_stem.empty()) rec = load_mask(recurrence_stem);
  bool has_rec = false;
  EvalReport rep = evaluate_case(cfg, ga, data, u_fdm, theta, rec ? &*rec : nullptr, &has_rec);
  InferenceResult r;
  r.metrics = rep;
  r.has_recurrence_metrics = has_rec;
  r.config_hash = cfg.config_hash();
  r.seed = cfg.seed;
  r.data_mode = data_mode_name(cfg.data_mode);
  write_inference_result(r, out_path);
  std::printf("report written to %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisher-KPP glioblastoma parameter inference"};
  app.require_subcommand(1);

  std::string config_path, gt_path, out_dir = "synth_case", checkpoint, u_fdm_stem,
              recurrence_stem, report_path = "eval_report.json", table_out;
  std::vector<double> times{1.0};
  bool skip_finetune = false, want_pinn = false;

  auto* c_pre = app.add_subcommand("preprocess", "build phase field and geometry");
  c_pre->add_option("--config", config_path)->required();

  auto* c_grid = app.add_subcommand("gridsearch", "estimate characteristic parameters");
  c_grid->add_option("--config", config_path)->required();
  c_grid->add_option("--table-out", table_out, "also dump the lookup table");

  auto* c_prt = app.add_subcommand("pretrain", "train the PINN on the characteristic solution");
  c_prt->add_option("--config", config_path)->required();

  auto* c_ft = app.add_subcommand("finetune", "fine-tune on patient data");
  c_ft->add_option("--config", config_path)->required();

  auto* c_pred = app.add_subcommand("predict", "predict density volumes");
  c_pred->add_option("--config", config_path)->required();
  c_pred->add_option("--checkpoint", checkpoint)->required();
  c_pred->add_option("--times", times, "normalized times");
  c_pred->add_flag("--pinn", want_pinn, "evaluate the network instead of the FDM");

  auto* c_syn = app.add_subcommand("synth", "generate a synthetic case");
  c_syn->add_option("--config", config_path)->required();
  c_syn->add_option("--gt", gt_path, "ground-truth parameter JSON")->required();
  c_syn->add_option("--out", out_dir);

  auto* c_eval = app.add_subcommand("evaluate", "compute evaluation metrics");
  c_eval->add_option("--config", config_path)->required();
  c_eval->add_option("--u-fdm", u_fdm_stem)->required();
  c_eval->add_option("--recurrence", recurrence_stem);
  c_eval->add_option("--out", report_path);

  auto* c_pipe = app.add_subcommand("pipeline", "run the full workflow");
  c_pipe->add_option("--config", config_path)->required();
  c_pipe->add_flag("--skip-finetune", skip_finetune);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_pre->parsed()) {
      RunConfig cfg = need_config(config_path);
      cmd_preprocess(cfg);
      std::printf("geometry artifacts written to %s/geom\n", cfg.output_dir.c_str());
      return 0;
    }
    if (c_grid->parsed()) {
      RunConfig cfg = need_config(config_path);
      CaseData data = load_case_data(cfg);
      CharacteristicParams chr = cmd_gridsearch(cfg, data);
      if (!table_out.empty()) {
        LookupTable t = load_or_build_lookup_table(
            cfg.lookup, cfg.lookup_cache_dir.empty() ? cfg.output_dir + "/lookup_cache"
                                                     : cfg.lookup_cache_dir);
        save_lookup_table(t, table_out);
      }
      fs::create_directories(cfg.output_dir);
      JsonWriter w;
      w.begin();
      w.field("d_over_rho", chr.d_over_rho);
      w.field("L_bar_mm", chr.L_bar_mm);
      w.field("cal_D", chr.cal_D);
      w.field("cal_R", chr.cal_R);
      w.end();
      w.save(cfg.output_dir + "/characteristic_params.json");
      std::printf("d_over_rho=%g L_bar=%g cal_D=%.6g cal_R=%.6g\n", chr.d_over_rho,
                  chr.L_bar_mm, chr.cal_D, chr.cal_R);
      return 0;
    }
    if (c_prt->parsed()) {
      RunConfig cfg = need_config(config_path);
      GeometryArtifacts ga = cmd_preprocess(cfg);
      CaseData data = load_case_data(cfg);
      PretrainArtifacts pa = cmd_pretrain(cfg, ga, data);
      fs::create_directories(cfg.output_dir);
      write_record_csv(pa.record, cfg.output_dir + "/pretrain_record.csv");
      save_checkpoint(pa.state, cfg.output_dir + "/checkpoint_pretrain");
      std::printf("pretrain done: final train %.3e test %.3e (%s)\n",
                  pa.record.final_train.total, pa.record.final_test.total,
                  pa.record.stop_reason.c_str());
      return 0;
    }
    if (c_ft->parsed()) {
      RunConfig cfg = need_config(config_path);
      GeometryArtifacts ga = cmd_preprocess(cfg);
      CaseData data = load_case_data(cfg);
      PretrainArtifacts pa = cmd_pretrain(cfg, ga, data);
      FinetuneArtifacts fa = cmd_finetune(cfg, ga, data, pa);
      fs::create_directories(cfg.output_dir);
      write_record_csv(fa.record, cfg.output_dir + "/finetune_record.csv");
      save_checkpoint(fa.state, cfg.output_dir + "/checkpoint_finetune");
      const auto& th = fa.state.theta;
      std::printf("finetune done: mu_D=%.4f mu_R=%.4f uc=(%.3f,%.3f) m=%.3f A=%.3f\n",
                  th.mu_D, th.mu_R, th.u_c_flair, th.u_c_t1gd, th.m, th.A);
      return 0;
    }
    if (c_pred->parsed()) return run_predict(need_config(config_path), checkpoint, times, want_pinn);
    if (c_syn->parsed()) return run_synth(need_config(config_path), gt_path, out_dir);
    if (c_eval->parsed())
      return run_evaluate(need_config(config_path), u_fdm_stem, recurrence_stem, report_path);
    if (c_pipe->parsed()) {
      RunConfig cfg = need_config(config_path);
      InferenceResult r = cmd_pipeline(cfg, skip_finetune);
      std::printf("pipeline done: mu_D=%.4f mu_R=%.4f dice_t1gd=%.3f dice_flair=%.3f\n",
                  r.theta.mu_D, r.theta.mu_R, r.metrics.dice_t1gd, r.metrics.dice_flair);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "missing input: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
