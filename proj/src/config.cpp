#include "gbm/config.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace gbm {

using nlohmann::json;

RunConfig default_config() {
  RunConfig c;
  c.geometry.synthetic = true;
  c.lookup = LookupConfig::defaults();
  c.sampler_pretrain.n_residual = 20000;
  c.sampler_pretrain.n_data = 5000;
  c.sampler_finetune.n_residual = 5000;
  c.sampler_finetune.n_data = 5000;
  c.pretrain.stage = Stage::Pretrain;
  c.pretrain.max_iters = 20000;
  c.pretrain.adam_lr = 1e-3;
  c.pretrain.lbfgs.max_iters = 20000;
  c.finetune.stage = Stage::Finetune;
  c.finetune.max_iters = 5000;
  c.finetune.adam_lr = 1e-4;
  c.finetune.lbfgs.max_iters = 5000;
  return c;
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("config: " + msg);
}

template <typename T>
T get_or(const json& j, const std::string& key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + key + "': " + e.what());
  }
}

Vec3 get_vec3(const json& j, const std::string& key, Vec3 def) {
  if (!j.contains(key)) return def;
  auto a = j.at(key);
  require(a.is_array() && a.size() == 3, key + " must be a 3-array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Index3 get_idx3(const json& j, const std::string& key, Index3 def) {
  if (!j.contains(key)) return def;
  auto a = j.at(key);
  require(a.is_array() && a.size() == 3, key + " must be a 3-array");
  return {a[0].get<int>(), a[1].get<int>(), a[2].get<int>()};
}

StageConfig parse_stage(const json& j, StageConfig def) {
  StageConfig s = def;
  s.max_iters = get_or<long>(j, "max_iters", def.max_iters);
  s.adam_lr = get_or<double>(j, "adam_lr", def.adam_lr);
  s.early_stop_patience = get_or<long>(j, "patience", def.early_stop_patience);
  s.test_every = get_or<int>(j, "test_every", def.test_every);
  if (j.contains("lbfgs")) {
    const auto& lb = j.at("lbfgs");
    s.lbfgs.history = get_or<int>(lb, "history", def.lbfgs.history);
    s.lbfgs.max_line_search = get_or<int>(lb, "max_line_search", def.lbfgs.max_line_search);
    s.lbfgs.tol = get_or<double>(lb, "tol", def.lbfgs.tol);
    s.lbfgs.max_iters = get_or<long>(lb, "max_iters", def.lbfgs.max_iters);
  }
  require(s.max_iters >= 0 && s.adam_lr > 0 && s.early_stop_patience > 0,
          "stage iteration counts/lr must be positive");
  return s;
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingInput("config file not found: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c = default_config();
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);

  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    if (g.contains("synthetic")) {
      const auto& s = g.at("synthetic");
      c.geometry.synthetic = true;
      std::string shape = get_or<std::string>(s, "shape", "sphere");
      require(shape == "sphere" || shape == "two-shell", "geometry shape must be sphere|two-shell");
      c.geometry.shape = shape == "sphere" ? BrainShape::Sphere : BrainShape::TwoShell;
      c.geometry.dims = get_idx3(s, "dims", c.geometry.dims);
      c.geometry.spacing_mm = get_vec3(s, "spacing_mm", c.geometry.spacing_mm);
      c.geometry.radius_mm = get_or<double>(s, "radius_mm", c.geometry.radius_mm);
      c.geometry.shell_mm = get_or<double>(s, "shell_mm", c.geometry.shell_mm);
    } else {
      c.geometry.synthetic = false;
      c.geometry.p_w_stem = get_or<std::string>(g, "p_w", "");
      c.geometry.p_g_stem = get_or<std::string>(g, "p_g", "");
      c.geometry.mask_stem = get_or<std::string>(g, "brain_mask", "");
      require(!c.geometry.p_w_stem.empty() && !c.geometry.p_g_stem.empty() &&
                  !c.geometry.mask_stem.empty(),
              "geometry needs synthetic{} or p_w/p_g/brain_mask stems");
    }
  }
  if (j.contains("phasefield")) {
    const auto& p = j.at("phasefield");
    c.ch.epsilon_mm = get_or<double>(p, "epsilon_mm", c.ch.epsilon_mm);
    c.ch.t_final = get_or<double>(p, "t_final", c.ch.t_final);
    c.ch.dt = get_or<double>(p, "dt", c.ch.dt);
    c.ch.dt_safety = get_or<double>(p, "dt_safety", c.ch.dt_safety);
    c.ch.rate_tol = get_or<double>(p, "rate_tol", c.ch.rate_tol);
    c.tau = get_or<double>(p, "tau", c.tau);
    require(c.ch.epsilon_mm > 0, "epsilon_mm must be positive");
    require(c.tau >= 0, "tau must be >= 0");
  }
  if (j.contains("masks")) {
    c.y_t1gd_stem = get_or<std::string>(j.at("masks"), "y_t1gd", "");
    c.y_flair_stem = get_or<std::string>(j.at("masks"), "y_flair", "");
  }
  if (j.contains("fet")) {
    c.fet_stem = get_or<std::string>(j.at("fet"), "volume", "");
    c.y_fet_stem = get_or<std::string>(j.at("fet"), "mask", "");
  }
  c.density_truth_manifest = get_or<std::string>(j, "density_truth_manifest", "");
  if (j.contains("lookup")) {
    const auto& l = j.at("lookup");
    c.lookup.d_over_rho_grid =
        get_or<std::vector<double>>(l, "d_over_rho_grid", c.lookup.d_over_rho_grid);
    c.lookup.L_grid = get_or<std::vector<double>>(l, "L_grid", c.lookup.L_grid);
    c.lookup.nr = get_or<int>(l, "nr", c.lookup.nr);
    c.lookup.radius_offset_mm = get_or<double>(l, "radius_offset_mm", c.lookup.radius_offset_mm);
    c.lookup_cache_dir = get_or<std::string>(l, "cache_dir", "");
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    c.sampler_pretrain.n_residual =
        get_or<int>(s, "n_residual_pretrain", c.sampler_pretrain.n_residual);
    c.sampler_finetune.n_residual =
        get_or<int>(s, "n_residual_finetune", c.sampler_finetune.n_residual);
    c.sampler_pretrain.n_data = c.sampler_finetune.n_data =
        get_or<int>(s, "n_data", c.sampler_finetune.n_data);
    c.sampler_pretrain.lambda_t = c.sampler_finetune.lambda_t =
        get_or<double>(s, "lambda_t", c.sampler_finetune.lambda_t);
    c.sampler_pretrain.density_floor = c.sampler_finetune.density_floor =
        get_or<double>(s, "density_floor", c.sampler_finetune.density_floor);
    require(c.sampler_pretrain.n_residual > 0 && c.sampler_finetune.n_residual > 0 &&
                c.sampler_finetune.n_data > 0,
            "sampler counts must be positive");
    require(c.sampler_finetune.lambda_t > 0, "lambda_t must be positive");
    require(c.sampler_finetune.density_floor > 0 && c.sampler_finetune.density_floor < 1,
            "density_floor must be in (0,1)");
  }
  if (j.contains("net")) {
    const auto& n = j.at("net");
    c.net.width = get_or<int>(n, "width", c.net.width);
    c.net.hidden_layers = get_or<int>(n, "hidden_layers", c.net.hidden_layers);
    require(c.net.width > 0 && c.net.hidden_layers >= 1, "net width/layers must be positive");
  }
  if (j.contains("pretrain")) c.pretrain = parse_stage(j.at("pretrain"), c.pretrain);
  if (j.contains("finetune")) c.finetune = parse_stage(j.at("finetune"), c.finetune);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    c.loss_weights.w_seg = get_or<double>(l, "w_seg", c.loss_weights.w_seg);
    c.loss_weights.w_fet = get_or<double>(l, "w_fet", c.loss_weights.w_fet);
    c.sigmoid_a = get_or<double>(l, "sigmoid_a", c.sigmoid_a);
    if (l.contains("bounds")) {
      const auto& b = l.at("bounds");
      c.bounds.mu_lo = get_or<double>(b, "mu_lo", c.bounds.mu_lo);
      c.bounds.mu_hi = get_or<double>(b, "mu_hi", c.bounds.mu_hi);
      c.bounds.uc_flair_lo = get_or<double>(b, "uc_flair_lo", c.bounds.uc_flair_lo);
      c.bounds.uc_flair_hi = get_or<double>(b, "uc_flair_hi", c.bounds.uc_flair_hi);
      c.bounds.uc_t1gd_lo = get_or<double>(b, "uc_t1gd_lo", c.bounds.uc_t1gd_lo);
      c.bounds.uc_t1gd_hi = get_or<double>(b, "uc_t1gd_hi", c.bounds.uc_t1gd_hi);
      c.bounds.m_lo = get_or<double>(b, "m_lo", c.bounds.m_lo);
      c.bounds.m_hi = get_or<double>(b, "m_hi", c.bounds.m_hi);
      c.bounds.A_lo = get_or<double>(b, "A_lo", c.bounds.A_lo);
      c.bounds.A_hi = get_or<double>(b, "A_hi", c.bounds.A_hi);
    }
    require(c.loss_weights.w_seg >= 0 && c.loss_weights.w_fet >= 0, "loss weights must be >= 0");
  }
  if (j.contains("data_mode")) c.data_mode = parse_data_mode(j.at("data_mode").get<std::string>());
  c.snapshot_times = get_or<std::vector<double>>(j, "snapshot_times", c.snapshot_times);
  c.fdm_snapshots = get_or<int>(j, "fdm_snapshots", c.fdm_snapshots);
  require(c.fdm_snapshots >= 2, "fdm_snapshots must be >= 2");
  c.init_u_c_flair = get_or<double>(j, "init_u_c_flair", c.init_u_c_flair);
  c.init_u_c_t1gd = get_or<double>(j, "init_u_c_t1gd", c.init_u_c_t1gd);
  return c;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

JsonWriter& JsonWriter::begin(const std::string& k) {
  comma();
  key(k);
  out_ += "{";
  first_.push_back(true);
  return *this;
}
JsonWriter& JsonWriter::end() {
  out_ += "}";
  first_.pop_back();
  return *this;
}
JsonWriter& JsonWriter::begin_array(const std::string& k) {
  comma();
  key(k);
  out_ += "[";
  first_.push_back(true);
  return *this;
}
JsonWriter& JsonWriter::end_array() {
  out_ += "]";
  first_.pop_back();
  return *this;
}
void JsonWriter::comma() {
  if (first_.empty()) return;
  if (!first_.back()) out_ += ",";
  first_.back() = false;
}
void JsonWriter::key(const std::string& k) {
  if (!k.empty()) out_ += "\"" + k + "\":";
}
JsonWriter& JsonWriter::field(const std::string& k, double v) {
  comma();
  key(k);
  out_ += format_g17(v);
  return *this;
}
JsonWriter& JsonWriter::field(const std::string& k, const std::string& v) {
  comma();
  key(k);
  out_ += "\"";
  for (char ch : v) {
    if (ch == '"' || ch == '\\') out_ += '\\';
    out_ += ch;
  }
  out_ += "\"";
  return *this;
}
JsonWriter& JsonWriter::field(const std::string& k, std::int64_t v) {
  comma();
  key(k);
  out_ += std::to_string(v);
  return *this;
}
JsonWriter& JsonWriter::field(const std::string& k, std::uint64_t v) {
  comma();
  key(k);
  out_ += std::to_string(v);
  return *this;
}
JsonWriter& JsonWriter::field(const std::string& k, bool v) {
  comma();
  key(k);
  out_ += v ? "true" : "false";
  return *this;
}
JsonWriter& JsonWriter::elem(double v) {
  comma();
  out_ += format_g17(v);
  return *this;
}
JsonWriter& JsonWriter::field(const std::string& k, const std::vector<double>& v) {
  begin_array(k);
  for (double x : v) elem(x);
  return end_array();
}
void JsonWriter::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw MissingInput("cannot write: " + path);
  f << out_ << "\n";
}

std::string RunConfig::config_hash() const {
  // hash the reproducibility-relevant numbers, bit-exact
  std::uint64_t h = 1469598103934665603ull;
  auto mixb = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  auto mixd = [&](double x) { mixb(&x, 8); };
  auto mixi = [&](std::int64_t x) { mixb(&x, 8); };
  auto mixs = [&](const std::string& s) { mixb(s.data(), s.size()); };
  mixi(std::int64_t(seed));
  mixi(geometry.synthetic);
  mixi(int(geometry.shape));
  for (int d = 0; d < 3; ++d) mixi(geometry.dims[d]);
  for (int d = 0; d < 3; ++d) mixd(geometry.spacing_mm[d]);
  mixd(geometry.radius_mm);
  mixd(geometry.shell_mm);
  mixs(geometry.p_w_stem);
  mixs(geometry.p_g_stem);
  mixs(geometry.mask_stem);
  mixd(ch.epsilon_mm);
  mixd(ch.t_final);
  mixd(ch.dt);
  mixd(ch.dt_safety);
  mixd(ch.rate_tol);
  mixd(tau);
  mixs(y_t1gd_stem);
  mixs(y_flair_stem);
  mixs(fet_stem);
  mixs(y_fet_stem);
  mixs(density_truth_manifest);
  mixs(lookup_config_hash(lookup));
  mixi(sampler_pretrain.n_residual);
  mixi(sampler_finetune.n_residual);
  mixi(sampler_finetune.n_data);
  mixd(sampler_finetune.lambda_t);
  mixd(sampler_finetune.density_floor);
  mixi(net.width);
  mixi(net.hidden_layers);
  for (const StageConfig* s : {&pretrain, &finetune}) {
    mixi(s->max_iters);
    mixd(s->adam_lr);
    mixi(s->early_stop_patience);
    mixi(s->test_every);
    mixi(s->lbfgs.history);
    mixi(s->lbfgs.max_line_search);
    mixd(s->lbfgs.tol);
    mixi(s->lbfgs.max_iters);
  }
  mixd(loss_weights.w_seg);
  mixd(loss_weights.w_fet);
  mixd(sigmoid_a);
  mixi(int(data_mode));
  for (double t : snapshot_times) mixd(t);
  mixi(fdm_snapshots);
  mixd(init_u_c_flair);
  mixd(init_u_c_t1gd);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

void write_default_config(const std::string& path) {
  RunConfig c = default_config();
  json j;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["geometry"]["synthetic"] = {{"shape", "sphere"},
                                {"dims", {64, 64, 64}},
                                {"spacing_mm", {2.0, 2.0, 2.0}},
                                {"radius_mm", 50.0}};
  j["phasefield"] = {{"epsilon_mm", c.ch.epsilon_mm}, {"t_final", c.ch.t_final},
                     {"tau", c.tau}};
  j["masks"] = {{"y_t1gd", ""}, {"y_flair", ""}};
  j["lookup"] = {{"nr", c.lookup.nr}, {"cache_dir", "lookup_cache"}};
  j["sampler"] = {{"n_residual_pretrain", c.sampler_pretrain.n_residual},
                  {"n_residual_finetune", c.sampler_finetune.n_residual},
                  {"n_data", c.sampler_finetune.n_data},
                  {"lambda_t", c.sampler_finetune.lambda_t}};
  j["net"] = {{"width", c.net.width}, {"hidden_layers", c.net.hidden_layers}};
  j["pretrain"] = {{"max_iters", c.pretrain.max_iters}, {"adam_lr", c.pretrain.adam_lr},
                   {"patience", c.pretrain.early_stop_patience}};
  j["finetune"] = {{"max_iters", c.finetune.max_iters}, {"adam_lr", c.finetune.adam_lr},
                   {"patience", c.finetune.early_stop_patience}};
  j["loss"] = {{"w_seg", c.loss_weights.w_seg}, {"w_fet", c.loss_weights.w_fet}};
  j["data_mode"] = "SEG";
  j["snapshot_times"] = c.snapshot_times;
  std::ofstream f(path);
  if (!f) throw MissingInput("cannot write: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace gbm
