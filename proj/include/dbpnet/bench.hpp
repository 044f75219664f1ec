#pragma once

// Command implementations behind the dbpnet_bench executable. Every command
// writes byte-deterministic outputs; wall-clock timings go to *_timing sidecar
// files next to them.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dbpnet/checkpoint.hpp"
#include "dbpnet/dataset.hpp"
#include "dbpnet/ekf.hpp"
#include "dbpnet/estimators.hpp"
#include "dbpnet/geometry_io.hpp"
#include "dbpnet/io.hpp"
#include "dbpnet/plant.hpp"
#include "dbpnet/svg.hpp"

namespace dbpnet::bench {

namespace fs = std::filesystem;
using io::json;

enum ExitCode : int {
  exit_ok = 0,
  exit_config = 2,
  exit_io = 3,
  exit_numerical = 4,
  exit_check_failed = 5,
};

inline int exit_code_for(const Error& e) {
  switch (e.error_class()) {
    case ErrorClass::config: return exit_config;
    case ErrorClass::io: return exit_io;
    default: return exit_numerical;
  }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct Paths {
  fs::path geometry;
  fs::path dataset_dir;
  fs::path output_dir;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::string> variants{"dbpnet", "dbpnet_no_physics", "dbpnet_no_bayesian", "dbpnet_no_dpc"};
  bool baselines = true;  ///< also run pinn and ekf
};

struct KincheckOptions {
  int rack_points = 101;
  int damper_points = 101;
  double tolerance = 1e-9;
};

struct ReportOptions {
  bool plots = true;
  std::string split = "test";
};

struct RunConfig {
  fs::path source;  ///< config file, empty when built in code
  Paths paths;
  plant::VehicleParams vehicle;
  DatasetConfig dataset;
  est::TrainConfig train;
  ekf::EkfConfig ekf;
  AblationOptions ablation;
  KincheckOptions kincheck;
  ReportOptions report;
};

using EnvLookup = std::function<const char*(const char*)>;

inline const char* process_env(const char* name) { return std::getenv(name); }

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }) == keys.end())
      throw ConfigError("unknown field '" + where + "." + it.key() + "'");
}

template <class T>
void get(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(dst);
  } catch (const json::exception&) {
    throw ConfigError("field '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Parses a run config. Relative paths resolve against base_dir; the
/// DBPNET_GEOMETRY, DBPNET_DATASET_DIR and DBPNET_OUTPUT_DIR variables
/// override the corresponding paths.
inline RunConfig parse_run_config(const json& j, const fs::path& base_dir, const EnvLookup& env = process_env) {
  using detail::get;
  RunConfig c;
  detail::check_keys(j, "config",
                     {"format", "paths", "vehicle", "noise", "dataset", "train", "ekf", "ablation",
                      "kincheck", "report"});
  if (j.contains("format") && j.at("format") != "dbpnet-run")
    throw ConfigError("config format must be 'dbpnet-run'");

  const json paths = j.value("paths", json::object());
  detail::check_keys(paths, "paths", {"geometry", "dataset_dir", "output_dir"});
  std::string geom = "default_geometry.json", data = "dataset", out = "output";
  get(paths, "geometry", geom, "paths");
  get(paths, "dataset_dir", data, "paths");
  get(paths, "output_dir", out, "paths");
  if (const char* v = env("DBPNET_GEOMETRY"); v && *v) geom = v;
  if (const char* v = env("DBPNET_DATASET_DIR"); v && *v) data = v;
  if (const char* v = env("DBPNET_OUTPUT_DIR"); v && *v) out = v;
  auto resolve = [&](const std::string& p) {
    const fs::path q(p);
    return (q.is_absolute() ? q : base_dir / q).lexically_normal();
  };
  c.paths = {resolve(geom), resolve(data), resolve(out)};
  if (!fs::exists(c.paths.geometry))
    throw ConfigError("geometry file not found: " + c.paths.geometry.string());

  const json veh = j.value("vehicle", json::object());
  detail::check_keys(veh, "vehicle",
                     {"m_s", "m_u", "wheelbase", "track_f", "track_r", "h_cg", "a_front", "k_f", "k_r",
                      "c_lo", "c_hi", "v_knee", "k_tire", "i_roll", "i_pitch", "steer_arm",
                      "rack_per_rev"});
  auto& v = c.vehicle;
  get(veh, "m_s", v.m_s, "vehicle");
  get(veh, "m_u", v.m_u, "vehicle");
  get(veh, "wheelbase", v.wheelbase, "vehicle");
  get(veh, "track_f", v.track_f, "vehicle");
  get(veh, "track_r", v.track_r, "vehicle");
  get(veh, "h_cg", v.h_cg, "vehicle");
  get(veh, "a_front", v.a_front, "vehicle");
  get(veh, "k_f", v.k_f, "vehicle");
  get(veh, "k_r", v.k_r, "vehicle");
  get(veh, "c_lo", v.damper.c_lo, "vehicle");
  get(veh, "c_hi", v.damper.c_hi, "vehicle");
  get(veh, "v_knee", v.damper.v_knee, "vehicle");
  get(veh, "k_tire", v.k_tire, "vehicle");
  get(veh, "i_roll", v.i_roll, "vehicle");
  get(veh, "i_pitch", v.i_pitch, "vehicle");
  get(veh, "steer_arm", v.steer_arm, "vehicle");
  get(veh, "rack_per_rev", v.rack_per_rev, "vehicle");
  v.validate();

  const json noise = j.value("noise", json::object());
  detail::check_keys(noise, "noise", {"delta", "a_spr", "a_unspr", "d_sus", "d_sus_dot", "F_p", "seed"});
  auto& n = c.dataset.noise;
  get(noise, "delta", n.delta, "noise");
  get(noise, "a_spr", n.a_spr, "noise");
  get(noise, "a_unspr", n.a_unspr, "noise");
  get(noise, "d_sus", n.d_sus, "noise");
  get(noise, "d_sus_dot", n.d_sus_dot, "noise");
  get(noise, "F_p", n.f_p, "noise");
  get(noise, "seed", n.seed, "noise");
  n.validate();

  const json ds = j.value("dataset", json::object());
  detail::check_keys(ds, "dataset", {"dt", "output_rate", "duration", "road_seed", "n_collocation", "split"});
  get(ds, "dt", c.dataset.dt, "dataset");
  get(ds, "output_rate", c.dataset.output_rate, "dataset");
  get(ds, "duration", c.dataset.duration, "dataset");
  get(ds, "road_seed", c.dataset.road_seed, "dataset");
  get(ds, "n_collocation", c.dataset.n_collocation, "dataset");
  if (ds.contains("split")) {
    const json& sp = ds.at("split");
    detail::check_keys(sp, "dataset.split", {"train", "validation", "test"});
    get(sp, "train", c.dataset.split.train, "dataset.split");
    get(sp, "validation", c.dataset.split.validation, "dataset.split");
    get(sp, "test", c.dataset.split.test, "dataset.split");
  }
  if (!(c.dataset.duration > 0.0 && c.dataset.output_rate > 0.0))
    throw ConfigError("dataset duration and output rate must be > 0");
  validate_split(c.dataset.split);

  c.train = ckpt::train_config_from_json(j.value("train", json::object()));

  const json ek = j.value("ekf", json::object());
  detail::check_keys(ek, "ekf", {"q_sprung", "q_unsprung", "q_road", "r_std", "p0_std"});
  get(ek, "q_sprung", c.ekf.q_sprung, "ekf");
  get(ek, "q_unsprung", c.ekf.q_unsprung, "ekf");
  get(ek, "q_road", c.ekf.q_road, "ekf");
  get(ek, "r_std", c.ekf.r_std, "ekf");
  get(ek, "p0_std", c.ekf.p0_std, "ekf");

  const json ab = j.value("ablation", json::object());
  detail::check_keys(ab, "ablation", {"seeds", "variants", "baselines"});
  get(ab, "seeds", c.ablation.seeds, "ablation");
  get(ab, "variants", c.ablation.variants, "ablation");
  get(ab, "baselines", c.ablation.baselines, "ablation");
  if (c.ablation.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  for (const auto& m : c.ablation.variants) est::parse_method(m);

  const json kc = j.value("kincheck", json::object());
  detail::check_keys(kc, "kincheck", {"rack_points", "damper_points", "tolerance"});
  get(kc, "rack_points", c.kincheck.rack_points, "kincheck");
  get(kc, "damper_points", c.kincheck.damper_points, "kincheck");
  get(kc, "tolerance", c.kincheck.tolerance, "kincheck");
  if (c.kincheck.rack_points < 2 || c.kincheck.damper_points < 2)
    throw ConfigError("kincheck grid needs at least 2 points per axis");

  const json rp = j.value("report", json::object());
  detail::check_keys(rp, "report", {"plots", "split"});
  get(rp, "plots", c.report.plots, "report");
  get(rp, "split", c.report.split, "report");
  parse_split(c.report.split);

  c.ekf.dt = 1.0 / c.dataset.output_rate;
  c.ekf.k_tire = c.vehicle.k_tire;
  return c;
}

inline RunConfig load_run_config(const fs::path& path, const EnvLookup& env = process_env) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  RunConfig c = parse_run_config(io::read_json(path), fs::absolute(path).parent_path(), env);
  c.source = path;
  return c;
}

/// Everything derived from the config that the commands share.
struct Context {
  RunConfig cfg;
  GeometryFile geo;
  plant::VehicleModel model;
  dyn::QuarterCarParams qc;
  ekf::EkfConfig ekf;

  explicit Context(RunConfig c)
      : cfg(std::move(c)), geo(load_geometry(cfg.paths.geometry)), model(cfg.vehicle, geo) {
    qc = plant::quarter_car_params(cfg.vehicle, model.table(), cfg.train.damper_nominal);
    ekf = cfg.ekf;
    ekf.motion_ratio = model.table().motion_ratio_design();
  }
};

struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::string method = "dbpnet";
  std::optional<fs::path> out;
  std::optional<fs::path> checkpoint;
  std::optional<std::string> split;
};

inline fs::path output_dir(const Context& ctx, const CommandOptions& o) {
  return o.out ? *o.out : ctx.cfg.paths.output_dir;
}

inline std::string run_name(const std::string& method, std::uint64_t seed) {
  return method == "ekf" ? "ekf" : method + "-seed" + std::to_string(seed);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Dataset require_dataset(const Context& ctx) {
  if (!fs::exists(ctx.cfg.paths.dataset_dir / "manifest.json"))
    throw IoError("no dataset at " + ctx.cfg.paths.dataset_dir.string() + " (run 'generate' first)");
  return load_dataset(ctx.cfg.paths.dataset_dir);
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

inline Dataset cmd_generate(const Context& ctx, const CommandOptions& o, std::ostream& log) {
  DatasetConfig dc = ctx.cfg.dataset;
  if (o.seed) dc.noise.seed = *o.seed;
  const fs::path dir = o.out ? *o.out : ctx.cfg.paths.dataset_dir;
  Dataset ds = build_dataset(ctx.model, dc);
  write_dataset(dir, ds);
  log << "dataset written to " << dir.string() << "\n";
  for (const auto& sc : ds.scenarios)
    log << "  " << sc.name << "  " << plant::class_name(sc.cls) << "  " << split_name(sc.split) << "  "
        << sc.inputs.size() << " rows\n";
  log << "collocation points: " << ds.collocation_count() << "\n";
  return ds;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline io::Table training_log_table(const est::Model& m) {
  io::Table t;
  t.columns = {"epoch", "L_d", "L_p", "KL", "total", "val_rmse"};
  for (const auto& e : m.log)
    t.rows.push_back({static_cast<double>(e.epoch), e.l_d, e.l_p, e.kl, e.total, e.val_rmse});
  return t;
}

inline est::TrainConfig train_config_for(const Context& ctx, const std::string& method, std::uint64_t seed) {
  est::TrainConfig tc = est::configure_variant(ctx.cfg.train, est::parse_method(method));
  tc.seed = seed;
  return tc;
}

/// Trains one method and writes checkpoint.json, train_log.csv and
/// train_timing.json into dir. The log and checkpoint are rewritten
/// atomically after every epoch.
inline est::Model train_run(const Context& ctx, const Dataset& ds, const std::string& method, std::uint64_t seed,
                            const fs::path& dir, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const est::TrainConfig tc = train_config_for(ctx, method, seed);
  est::Model m = est::train(ds, tc, ctx.qc, method, [&](const est::Model& cur, const est::EpochLog& e) {
    io::write_csv_atomic(dir / "train_log.csv", training_log_table(cur));
    ckpt::save((dir / "checkpoint.json").string(), cur);
    log << method << " seed " << seed << " epoch " << e.epoch << "  L_d " << e.l_d << "  L_p " << e.l_p
        << "  KL " << e.kl << "  total " << e.total << "  val_rmse " << e.val_rmse << " N\n";
  });
  io::write_csv_atomic(dir / "train_log.csv", training_log_table(m));
  ckpt::save((dir / "checkpoint.json").string(), m);
  io::write_json_atomic(dir / "train_timing.json", {{"wall_s", seconds_since(t0)}, {"epochs", tc.epochs}});
  return m;
}

inline est::Model cmd_train(const Context& ctx, const CommandOptions& o, std::ostream& log) {
  if (o.method == "ekf") throw ConfigError("method 'ekf' has no training phase");
  const Dataset ds = require_dataset(ctx);
  const std::uint64_t seed = o.seed.value_or(ctx.cfg.train.seed);
  const fs::path dir = output_dir(ctx, o) / "runs" / run_name(o.method, seed);
  est::Model m = train_run(ctx, ds, o.method, seed, dir, log);
  log << "checkpoint: " << (dir / "checkpoint.json").string() << "\n";
  return m;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct ScenarioPrediction {
  const ScenarioData* scenario = nullptr;
  est::PredictiveOutput out;
};

struct ReportRow {
  std::string method;
  std::string cls;  ///< NormalDriving, EmergencyDriving or All
  std::string split;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double max_error = 0.0;
  double wall_s = 0.0;  ///< kept out of the deterministic report file
};

/// Predictions for every scenario of a split by the named method.
inline std::vector<ScenarioPrediction> predict_split(const Context& ctx, const Dataset& ds, SplitName split,
                                                     const std::string& method, const est::Model* model,
                                                     std::uint64_t seed) {
  std::vector<ScenarioPrediction> res;
  std::uint64_t k = 0;
  for (const auto* sc : ds.split(split)) {
    ScenarioPrediction p;
    p.scenario = sc;
    if (method == "ekf") {
      p.out.mean = ekf::ekf_estimate(sc->inputs, ctx.qc, ctx.ekf);
      p.out.variance.assign(p.out.mean.size(), WheelLoads{});
    } else {
      Rng rng(Rng::derive(seed, 1000 + k));
      p.out = est::predict_series(*model, sc->inputs, model->cfg.s_samples, rng);
    }
    res.push_back(std::move(p));
    ++k;
  }
  return res;
}

/// Pooled metrics per scenario class plus an "All" row.
inline std::vector<ReportRow> report_rows(const std::vector<ScenarioPrediction>& preds, const std::string& method,
                                          const std::string& split, std::uint64_t seed) {
  std::vector<ReportRow> rows;
  for (const char* cls : {"All", "NormalDriving", "EmergencyDriving"}) {
    std::vector<WheelLoads> p, t;
    for (const auto& sp : preds) {
      if (std::string(cls) != "All" && plant::class_name(sp.scenario->cls) != std::string(cls)) continue;
      p.insert(p.end(), sp.out.mean.begin(), sp.out.mean.end());
      t.insert(t.end(), sp.scenario->loads.begin(), sp.scenario->loads.end());
    }
    if (p.empty()) continue;
    const est::Metrics m = est::evaluate(p, t);
    rows.push_back({method, cls, split, seed, m.rmse_mean, m.max_error_mean, 0.0});
  }
  return rows;
}

inline io::TextTable report_table(const std::vector<ReportRow>& rows) {
  io::TextTable t;
  t.columns = {"method", "class", "split", "seed", "rmse", "max_error"};
  for (const auto& r : rows)
    t.rows.push_back({r.method, r.cls, r.split, std::to_string(r.seed), io::format_double(r.rmse),
                      io::format_double(r.max_error)});
  return t;
}

/// Inserts rows into a report CSV keyed by (method, class, split, seed):
/// new keys append, existing keys are replaced in place, so reruns are
/// idempotent.
inline void upsert_report(const fs::path& path, const std::vector<ReportRow>& rows) {
  io::TextTable t = report_table({});
  if (fs::exists(path)) {
    t = io::read_text_csv(path);
    if (t.columns != report_table({}).columns) throw IoError(path.string() + ": unexpected report columns");
  }
  const io::TextTable add = report_table(rows);
  for (const auto& r : add.rows) {
    auto it = std::find_if(t.rows.begin(), t.rows.end(), [&](const std::vector<std::string>& e) {
      return e[0] == r[0] && e[1] == r[1] && e[2] == r[2] && e[3] == r[3];
    });
    if (it != t.rows.end())
      *it = r;
    else
      t.rows.push_back(r);
  }
  io::write_csv_atomic(path, t);
}

inline io::Table prediction_table(const ScenarioPrediction& sp) {
  io::Table t;
  t.columns = {"t"};
  for (const char* n : corner_names) t.columns.push_back(std::string("mean_") + n);
  for (const char* n : corner_names) t.columns.push_back(std::string("var_") + n);
  for (const char* n : corner_names) t.columns.push_back(std::string("F_") + n);
  const auto& sc = *sp.scenario;
  for (std::size_t i = 0; i < sc.inputs.size(); ++i) {
    std::vector<double> row{sc.inputs[i].t};
    row.insert(row.end(), sp.out.mean[i].begin(), sp.out.mean[i].end());
    row.insert(row.end(), sp.out.variance[i].begin(), sp.out.variance[i].end());
    row.insert(row.end(), sc.loads[i].begin(), sc.loads[i].end());
    t.rows.push_back(std::move(row));
  }
  return t;
}

struct EvalResult {
  std::vector<ReportRow> rows;
  fs::path dir;
  double ms_per_sample = 0.0;
};

inline EvalResult cmd_eval(const Context& ctx, const CommandOptions& o, std::ostream& log) {
  const Dataset ds = require_dataset(ctx);
  const std::string split = o.split.value_or(ctx.cfg.report.split);
  const SplitName sn = parse_split(split);
  const std::string& method = o.method;
  std::uint64_t seed = o.seed.value_or(ctx.cfg.train.seed);
  const fs::path out = output_dir(ctx, o);
  fs::path dir = out / "runs" / run_name(method, seed);
  std::optional<est::Model> model;
  if (method != "ekf") {
    est::parse_method(method);
    const fs::path cp = o.checkpoint ? *o.checkpoint : dir / "checkpoint.json";
    if (!fs::exists(cp)) throw IoError("checkpoint not found: " + cp.string() + " (run 'train' first)");
    model = ckpt::load(cp.string());
    if (model->method != method)
      throw ConfigError("checkpoint holds method '" + model->method + "', requested '" + method + "'");
    if (!o.seed) seed = model->cfg.seed;
    dir = out / "runs" / run_name(method, seed);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto preds = predict_split(ctx, ds, sn, method, model ? &*model : nullptr, seed);
  const double wall = seconds_since(t0);
  std::size_t samples = 0;
  for (const auto& p : preds) samples += p.out.mean.size();
  if (samples == 0) throw EmptySplit("split '" + split + "' has no samples");

  EvalResult r;
  r.dir = dir;
  r.ms_per_sample = 1e3 * wall / static_cast<double>(samples);
  r.rows = report_rows(preds, method, split, seed);
  for (auto& row : r.rows) row.wall_s = wall;
  for (const auto& p : preds) {
    io::write_csv_atomic(dir / ("predictions_" + p.scenario->name + ".csv"), prediction_table(p));
    if (ctx.cfg.report.plots) {
      svg::Series s;
      for (const auto& x : p.scenario->inputs) s.t.push_back(x.t);
      s.truth = p.scenario->loads;
      s.mean = p.out.mean;
      if (method != "ekf") s.variance = p.out.variance;
      io::write_text_atomic(dir / ("plot_" + p.scenario->name + ".svg"),
                            svg::wheel_load_plot(s, method + " on " + p.scenario->name));
    }
  }
  io::write_csv_atomic(dir / ("metrics_" + split + ".csv"), report_table(r.rows));
  io::write_json_atomic(dir / ("eval_timing_" + split + ".json"),
                        {{"wall_s", wall}, {"samples", samples}, {"ms_per_sample", r.ms_per_sample}});
  upsert_report(out / "report.csv", r.rows);
  for (const auto& row : r.rows)
    log << method << "  " << row.cls << "  " << split << "  rmse " << row.rmse << " N  max_error " << row.max_error
        << " N\n";
  return r;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

/// Linear-interpolation quantile of a sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw EmptyBatch("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }
inline double iqr(const std::vector<double>& v) { return quantile(v, 0.75) - quantile(v, 0.25); }

struct AblationRow {
  std::string method;
  std::uint64_t seed = 0;
  double rmse_all = 0.0, max_all = 0.0;
  double rmse_normal = 0.0, max_normal = 0.0;
  double rmse_emergency = 0.0, max_emergency = 0.0;
  double wall_s = 0.0;
};

struct AblationSummary {
  std::string method;
  bool reference = false;
  std::size_t runs = 0;
  double median_rmse = 0.0, iqr_rmse = 0.0;
  double median_max = 0.0, iqr_max = 0.0;
  double median_rmse_normal = 0.0, median_rmse_emergency = 0.0;
};

inline AblationRow ablation_row(const std::vector<ReportRow>& rows, const std::string& method, std::uint64_t seed) {
  AblationRow a;
  a.method = method;
  a.seed = seed;
  for (const auto& r : rows) {
    if (r.cls == "All") a.rmse_all = r.rmse, a.max_all = r.max_error;
    if (r.cls == "NormalDriving") a.rmse_normal = r.rmse, a.max_normal = r.max_error;
    if (r.cls == "EmergencyDriving") a.rmse_emergency = r.rmse, a.max_emergency = r.max_error;
  }
  return a;
}

inline std::vector<AblationSummary> summarize(const std::vector<AblationRow>& rows) {
  std::vector<std::string> methods;
  for (const auto& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  std::vector<AblationSummary> out;
  for (const auto& m : methods) {
    std::vector<double> rm, mx, rn, re;
    for (const auto& r : rows)
      if (r.method == m) {
        rm.push_back(r.rmse_all);
        mx.push_back(r.max_all);
        rn.push_back(r.rmse_normal);
        re.push_back(r.rmse_emergency);
      }
    AblationSummary s;
    s.method = m;
    s.reference = m == "dbpnet";
    s.runs = rm.size();
    s.median_rmse = median(rm);
    s.iqr_rmse = iqr(rm);
    s.median_max = median(mx);
    s.iqr_max = iqr(mx);
    s.median_rmse_normal = median(rn);
    s.median_rmse_emergency = median(re);
    out.push_back(s);
  }
  return out;
}

inline io::TextTable ablation_rows_table(const std::vector<AblationRow>& rows) {
  io::TextTable t;
  t.columns = {"method", "seed", "rmse", "max_error", "rmse_normal", "max_error_normal", "rmse_emergency",
               "max_error_emergency"};
  for (const auto& r : rows)
    t.rows.push_back({r.method, std::to_string(r.seed), io::format_double(r.rmse_all), io::format_double(r.max_all),
                      io::format_double(r.rmse_normal), io::format_double(r.max_normal),
                      io::format_double(r.rmse_emergency), io::format_double(r.max_emergency)});
  return t;
}

inline io::TextTable ablation_summary_table(const std::vector<AblationSummary>& s) {
  io::TextTable t;
  t.columns = {"method", "reference", "runs", "median_rmse", "iqr_rmse", "median_max_error", "iqr_max_error",
               "median_rmse_normal", "median_rmse_emergency"};
  for (const auto& r : s)
    t.rows.push_back({r.method, r.reference ? "1" : "0", std::to_string(r.runs), io::format_double(r.median_rmse),
                      io::format_double(r.iqr_rmse), io::format_double(r.median_max),
                      io::format_double(r.iqr_max), io::format_double(r.median_rmse_normal),
                      io::format_double(r.median_rmse_emergency)});
  return t;
}

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
};

/// Trains every configured variant for every seed (plus the pinn and ekf
/// baselines when enabled) and evaluates each on the report split.
inline AblationResult run_ablation(const Context& ctx, const Dataset& ds, const std::vector<std::string>& methods,
                                   const std::vector<std::uint64_t>& seeds, const fs::path& dir,
                                   std::ostream& log) {
  const std::string split = ctx.cfg.report.split;
  const SplitName sn = parse_split(split);
  AblationResult res;
  json timing = json::array();
  for (std::uint64_t seed : seeds)
    for (const auto& method : methods) {
      if (method == "ekf" && seed != seeds.front()) continue;  // deterministic, one run suffices
      const auto t0 = std::chrono::steady_clock::now();
      std::optional<est::Model> model;
      if (method != "ekf") {
        std::ostringstream quiet;
        model = train_run(ctx, ds, method, seed, dir / "runs" / run_name(method, seed), quiet);
      }
      const auto preds = predict_split(ctx, ds, sn, method, model ? &*model : nullptr, seed);
      const auto rows = report_rows(preds, method, split, seed);
      AblationRow a = ablation_row(rows, method, seed);
      a.wall_s = seconds_since(t0);
      res.rows.push_back(a);
      timing.push_back({{"method", method}, {"seed", seed}, {"wall_s", a.wall_s}});
      log << method << " seed " << seed << "  rmse " << a.rmse_all << " N  (normal " << a.rmse_normal
          << ", emergency " << a.rmse_emergency << ")  max_error " << a.max_all << " N  [" << a.wall_s << " s]\n";
      io::write_csv_atomic(dir / "rows.csv", ablation_rows_table(res.rows));
    }
  res.summary = summarize(res.rows);
  io::write_csv_atomic(dir / "rows.csv", ablation_rows_table(res.rows));
  io::write_csv_atomic(dir / "summary.csv", ablation_summary_table(res.summary));
  io::write_json_atomic(dir / "ablation_timing.json", timing);
  return res;
}

inline AblationResult cmd_ablate(const Context& ctx, const CommandOptions& o, std::ostream& log) {
  const Dataset ds = require_dataset(ctx);
  std::vector<std::string> methods = ctx.cfg.ablation.variants;
  if (ctx.cfg.ablation.baselines) {
    methods.push_back("pinn");
    methods.push_back("ekf");
  }
  std::vector<std::uint64_t> seeds = ctx.cfg.ablation.seeds;
  if (o.seed) seeds = {*o.seed};
  const fs::path dir = output_dir(ctx, o) / "ablation";
  AblationResult r = run_ablation(ctx, ds, methods, seeds, dir, log);
  log << "\nmethod               median rmse +- IQR      median max_error +- IQR\n";
  for (const auto& s : r.summary) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-20s %9.3f +- %-9.3f %9.3f +- %-9.3f%s\n", s.method.c_str(), s.median_rmse,
                  s.iqr_rmse, s.median_max, s.iqr_max, s.reference ? "  (reference)" : "");
    log << buf;
  }
  return r;
}

// ---------------------------------------------------------------------------
// kincheck
// ---------------------------------------------------------------------------

struct KincheckReport {
  int rack_points = 0, damper_points = 0;
  double max_residual = 0.0;
  double min_condition = 0.0, max_condition = 0.0;
  std::size_t lockups = 0, singular = 0;
  bool pass = false;
};

inline KincheckReport kincheck(const GeometryFile& geo, const KincheckOptions& opt, io::TextTable* grid = nullptr) {
  const auto& g = geo.geometry;
  dyn::UnsprungBody body;
  body.cg = geo.unsprung_cg;
  body.inertia = geo.unsprung_inertia;
  KincheckReport r;
  r.rack_points = opt.rack_points;
  r.damper_points = opt.damper_points;
  r.min_condition = std::numeric_limits<double>::infinity();
  if (grid) grid->columns = {"x_a", "x_d", "residual", "condition", "status"};
  for (int i = 0; i < opt.rack_points; ++i)
    for (int k = 0; k < opt.damper_points; ++k) {
      const double xa = std::lerp(g.limits.rack_min, g.limits.rack_max, i / double(opt.rack_points - 1));
      const double xd = std::lerp(g.limits.damper_min, g.limits.damper_max, k / double(opt.damper_points - 1));
      std::string status = "ok";
      double res = 0.0, cond = 0.0;
      try {
        const auto hp = kin::hard_points(g, xa, xd);
        res = kin::constraint_residual(g, hp);
        r.max_residual = std::max(r.max_residual, res);
        cond = dyn::condition_number(dyn::assemble_equilibrium(hp, body, {}, {}).a);
        r.min_condition = std::min(r.min_condition, cond);
        r.max_condition = std::max(r.max_condition, cond);
        if (!(cond <= 1e12)) {
          status = "singular";
          ++r.singular;
        }
      } catch (const KinematicLockup&) {
        status = "lockup";
        ++r.lockups;
      } catch (const DegenerateLink&) {
        status = "singular";
        ++r.singular;
      }
      if (grid)
        grid->rows.push_back({io::format_double(xa), io::format_double(xd), io::format_double(res),
                              io::format_double(cond), status});
    }
  r.pass = r.max_residual < opt.tolerance && r.lockups == 0;
  return r;
}

inline KincheckReport cmd_kincheck(const Context& ctx, const CommandOptions& o, std::ostream& log) {
  io::TextTable grid;
  const KincheckReport r = kincheck(ctx.geo, ctx.cfg.kincheck, &grid);
  const fs::path dir = output_dir(ctx, o) / "kincheck";
  io::write_csv_atomic(dir / "grid.csv", grid);
  io::write_json_atomic(dir / "summary.json", {{"geometry", ctx.geo.geometry.name},
                                               {"grid", {r.rack_points, r.damper_points}},
                                               {"tolerance_m", ctx.cfg.kincheck.tolerance},
                                               {"max_residual_m", r.max_residual},
                                               {"min_condition", r.min_condition},
                                               {"max_condition", r.max_condition},
                                               {"lockups", r.lockups},
                                               {"singular_poses", r.singular},
                                               {"pass", r.pass}});
  log << "geometry " << ctx.geo.geometry.name << ", grid " << r.rack_points << " x " << r.damper_points
      << " (rack x damper)\n"
      << "max constraint residual " << r.max_residual << " m (tolerance " << ctx.cfg.kincheck.tolerance << ")\n"
      << "equilibrium condition number " << r.min_condition << " .. " << r.max_condition << "\n"
      << "lockups " << r.lockups << ", singular poses " << r.singular << "\n"
      << (r.pass ? "PASS" : "FAIL") << "\n";
  return r;
}

}  // namespace dbpnet::bench
