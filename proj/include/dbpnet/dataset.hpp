#pragma once

// Dataset assembly and file format.
//
//   <dir>/manifest.json              splits, classes, seeds, noise, provenance
//   <dir>/<scenario>.csv             noisy sensor channels plus true loads
//   <dir>/collocation/<scenario>.csv clean sensor channels for the physics term,
//                                    training scenarios only, column "row" gives
//                                    the matching line of the scenario file

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dbpnet/io.hpp"
#include "dbpnet/plant.hpp"
#include "dbpnet/types.hpp"

namespace dbpnet {

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

inline SplitSpec default_split() {
  return {{"urban_stop_go", "rural_winding", "rural_rough", "highway_cruise", "emergency_brake",
           "brake_in_turn"},
          {"highway_lane_change", "emergency_avoidance"},
          {"urban_turns", "distracted_swerve"}};
}

struct DatasetConfig {
  SplitSpec split = default_split();
  double dt = 0.001;
  double output_rate = 20.0;
  double duration = 40.0;
  std::uint64_t road_seed = 7;
  plant::NoiseConfig noise;
  long long n_collocation = -1;  ///< -1: one clean copy of every training sample
};

enum class SplitName { train, validation, test };

inline const char* split_name(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::validation: return "validation";
    default: return "test";
  }
}

inline SplitName parse_split(const std::string& s) {
  if (s == "train") return SplitName::train;
  if (s == "validation") return SplitName::validation;
  if (s == "test") return SplitName::test;
  throw ConfigError("unknown split '" + s + "'");
}

struct ScenarioData {
  std::string name;
  plant::ScenarioClass cls = plant::ScenarioClass::normal;
  SplitName split = SplitName::train;
  std::uint64_t noise_seed = 0;
  std::vector<SensorSample> inputs;  ///< noisy
  std::vector<WheelLoads> loads;     ///< true
  std::vector<std::size_t> colloc_rows;
  std::vector<SensorSample> colloc;  ///< clean copies of inputs[colloc_rows[i]]
};

struct Dataset {
  std::vector<ScenarioData> scenarios;
  io::json manifest;

  std::vector<const ScenarioData*> split(SplitName s) const {
    std::vector<const ScenarioData*> out;
    for (const auto& sc : scenarios)
      if (sc.split == s) out.push_back(&sc);
    return out;
  }
  std::size_t rows(SplitName s) const {
    std::size_t n = 0;
    for (const auto* sc : split(s)) n += sc->inputs.size();
    return n;
  }
  std::size_t collocation_count() const {
    std::size_t n = 0;
    for (const auto& sc : scenarios) n += sc.colloc.size();
    return n;
  }
};

inline void validate_split(const SplitSpec& s) {
  const auto known = plant::scenario_names();
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const auto& n : *part) {
      if (std::find(known.begin(), known.end(), n) == known.end())
        throw ConfigError("unknown scenario '" + n + "' in split");
      if (!seen.insert(n).second) throw ConfigError("scenario '" + n + "' assigned to two splits");
    }
  if (s.train.empty()) throw EmptySplit("train split has no scenarios");
  if (s.validation.empty()) throw EmptySplit("validation split has no scenarios");
  if (s.test.empty()) throw EmptySplit("test split has no scenarios");
}

namespace dataset_detail {

inline std::vector<double> sample_row(const SensorSample& s) {
  std::vector<double> r{s.t};
  const auto f = s.features();
  r.insert(r.end(), f.begin(), f.end());
  return r;
}

inline SensorSample sample_from(const std::vector<double>& r, std::size_t off) {
  SensorSample s;
  s.t = r[off];
  s.delta = r[off + 1];
  for (int i = 0; i < 4; ++i) {
    s.a_spr[i] = r[off + 2 + i];
    s.a_unspr[i] = r[off + 6 + i];
    s.d_sus[i] = r[off + 10 + i];
    s.d_sus_dot[i] = r[off + 14 + i];
    s.f_p[i] = r[off + 18 + i];
  }
  return s;
}

inline std::vector<std::string> input_columns() {
  auto c = dataset_columns();
  c.resize(2 + 5 * 4);
  return c;
}

}  // namespace dataset_detail

/// Simulates every assigned scenario, adds noise and picks collocation rows.
inline Dataset build_dataset(const plant::VehicleModel& model, const DatasetConfig& cfg) {
  validate_split(cfg.split);
  cfg.noise.validate();
  const auto names = plant::scenario_names();
  Dataset ds;
  auto add = [&](const std::string& name, SplitName sp) {
    const std::uint64_t index =
        static_cast<std::uint64_t>(std::find(names.begin(), names.end(), name) - names.begin());
    const auto prof = plant::scenario(name, cfg.road_seed, cfg.duration);
    const auto tr = plant::simulate(model, prof, cfg.dt, cfg.output_rate);
    ScenarioData sc;
    sc.name = name;
    sc.cls = prof.cls;
    sc.split = sp;
    sc.noise_seed = Rng::derive(cfg.noise.seed, index);
    Rng rng(sc.noise_seed);
    for (const auto& pt : tr.points) {
      sc.inputs.push_back(plant::add_noise(pt.clean, cfg.noise, rng));
      sc.loads.push_back(pt.loads);
      sc.colloc.push_back(pt.clean);  // trimmed below
    }
    ds.scenarios.push_back(std::move(sc));
  };
  for (const auto& n : cfg.split.train) add(n, SplitName::train);
  for (const auto& n : cfg.split.validation) add(n, SplitName::validation);
  for (const auto& n : cfg.split.test) add(n, SplitName::test);

  // Collocation rows spread evenly over the concatenated training samples.
  const std::size_t n_train = ds.rows(SplitName::train);
  const std::size_t n_f = cfg.n_collocation < 0 ? n_train : static_cast<std::size_t>(cfg.n_collocation);
  if (n_f > n_train)
    throw ConfigError("n_collocation " + std::to_string(n_f) + " exceeds the " +
                      std::to_string(n_train) + " training samples");
  std::vector<std::size_t> picks;
  for (std::size_t k = 0; k < n_f; ++k) picks.push_back(k * n_train / n_f);
  std::size_t base = 0, cursor = 0;
  for (auto& sc : ds.scenarios) {
    std::vector<SensorSample> clean;
    clean.swap(sc.colloc);
    if (sc.split != SplitName::train) continue;
    const std::size_t n = sc.inputs.size();
    while (cursor < picks.size() && picks[cursor] < base + n) {
      const std::size_t row = picks[cursor++] - base;
      sc.colloc_rows.push_back(row);
      sc.colloc.push_back(clean[row]);
    }
    base += n;
  }

  const auto& vp = model.params();
  io::json scen = io::json::array();
  for (const auto& sc : ds.scenarios)
    scen.push_back({{"name", sc.name},
                    {"class", plant::class_name(sc.cls)},
                    {"split", split_name(sc.split)},
                    {"file", sc.name + ".csv"},
                    {"rows", sc.inputs.size()},
                    {"noise_seed", sc.noise_seed},
                    {"collocation_rows", sc.colloc.size()}});
  ds.manifest = {
      {"format", "dbpnet-dataset"},
      {"version", 1},
      {"columns", dataset_columns()},
      {"generator",
       {{"model", "7-DOF ride model, RK4"},
        {"dt", cfg.dt},
        {"output_rate_hz", cfg.output_rate},
        {"duration_s", cfg.duration},
        {"road_seed", cfg.road_seed},
        {"vehicle",
         {{"m_s", vp.m_s},
          {"m_u", vp.m_u},
          {"wheelbase", vp.wheelbase},
          {"track_f", vp.track_f},
          {"track_r", vp.track_r},
          {"h_cg", vp.h_cg},
          {"a_front", vp.a_front},
          {"k_f", vp.k_f},
          {"k_r", vp.k_r},
          {"c_lo", vp.damper.c_lo},
          {"c_hi", vp.damper.c_hi},
          {"v_knee", vp.damper.v_knee},
          {"k_tire", vp.k_tire}}},
        {"motion_ratio_design", model.table().motion_ratio_design()}}},
      {"noise",
       {{"seed", cfg.noise.seed},
        {"delta", cfg.noise.delta},
        {"a_spr", cfg.noise.a_spr},
        {"a_unspr", cfg.noise.a_unspr},
        {"d_sus", cfg.noise.d_sus},
        {"d_sus_dot", cfg.noise.d_sus_dot},
        {"F_p", cfg.noise.f_p}}},
      {"splits",
       {{"train", cfg.split.train}, {"validation", cfg.split.validation}, {"test", cfg.split.test}}},
      {"collocation", {{"n_f", n_f}, {"source", "clean inputs of training samples"}}},
      {"scenarios", scen},
  };
  return ds;
}

inline void write_dataset(const io::fs::path& dir, const Dataset& ds) {
  using namespace dataset_detail;
  for (const auto& sc : ds.scenarios) {
    io::Table t;
    t.columns = dataset_columns();
    for (std::size_t r = 0; r < sc.inputs.size(); ++r) {
      auto row = sample_row(sc.inputs[r]);
      row.insert(row.end(), sc.loads[r].begin(), sc.loads[r].end());
      t.rows.push_back(std::move(row));
    }
    io::write_csv_atomic(dir / (sc.name + ".csv"), t);
    if (sc.split != SplitName::train) continue;
    io::Table c;
    c.columns = {"row"};
    for (const auto& n : input_columns()) c.columns.push_back(n);
    for (std::size_t r = 0; r < sc.colloc.size(); ++r) {
      std::vector<double> row{static_cast<double>(sc.colloc_rows[r])};
      const auto s = sample_row(sc.colloc[r]);
      row.insert(row.end(), s.begin(), s.end());
      c.rows.push_back(std::move(row));
    }
    io::write_csv_atomic(dir / "collocation" / (sc.name + ".csv"), c);
  }
  // manifest last: its presence marks a complete dataset
  io::write_json_atomic(dir / "manifest.json", ds.manifest);
}

inline Dataset load_dataset(const io::fs::path& dir) {
  using namespace dataset_detail;
  const auto mpath = dir / "manifest.json";
  if (!io::fs::exists(mpath)) throw IoError("no dataset manifest at " + mpath.string());
  Dataset ds;
  ds.manifest = io::read_json(mpath);
  if (ds.manifest.value("format", std::string{}) != "dbpnet-dataset")
    throw IoError(mpath.string() + ": not a dbpnet-dataset manifest");
  const auto cols = dataset_columns();
  for (const auto& e : ds.manifest.at("scenarios")) {
    ScenarioData sc;
    sc.name = e.at("name").get<std::string>();
    sc.cls = e.at("class").get<std::string>() == "EmergencyDriving" ? plant::ScenarioClass::emergency
                                                                   : plant::ScenarioClass::normal;
    sc.split = parse_split(e.at("split").get<std::string>());
    sc.noise_seed = e.at("noise_seed").get<std::uint64_t>();
    const auto path = dir / e.at("file").get<std::string>();
    const io::Table t = io::read_csv(path);
    if (t.columns != cols) throw IoError(path.string() + ": unexpected column layout");
    for (const auto& row : t.rows) {
      sc.inputs.push_back(sample_from(row, 0));
      sc.loads.push_back({row[22], row[23], row[24], row[25]});
    }
    if (sc.inputs.size() != e.at("rows").get<std::size_t>())
      throw IoError(path.string() + ": row count disagrees with manifest");
    if (sc.split == SplitName::train) {
      const auto cpath = dir / "collocation" / (sc.name + ".csv");
      const io::Table c = io::read_csv(cpath);
      for (const auto& row : c.rows) {
        const double r = row[0];
        if (r < 0 || r >= static_cast<double>(sc.inputs.size()) || r != std::floor(r))
          throw IoError(cpath.string() + ": row index out of range");
        sc.colloc_rows.push_back(static_cast<std::size_t>(r));
        sc.colloc.push_back(sample_from(row, 1));
      }
    }
    ds.scenarios.push_back(std::move(sc));
  }
  return ds;
}

}  // namespace dbpnet
