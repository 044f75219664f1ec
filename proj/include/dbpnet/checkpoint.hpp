#pragma once

// Versioned JSON checkpoints. Doubles are written in shortest round-trip form
// so save/load is lossless.

#include <json.hpp>

#include <string>
#include <vector>

#include "dbpnet/errors.hpp"
#include "dbpnet/estimators.hpp"
#include "dbpnet/io.hpp"

namespace dbpnet::ckpt {

using nlohmann::json;

inline constexpr int format_version = 1;

inline json vec_json(const nn::Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nn::Vec json_vec(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string("checkpoint field '") + what + "' must be an array");
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const nn::Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json train_config_json(const est::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"k_samples", c.k_samples},
          {"s_samples", c.s_samples},
          {"lr", c.lr},
          {"sigma_n", c.sigma_n},
          {"w_d", c.w_d},
          {"w_p", c.w_p},
          {"prior_sigma", c.prior_sigma},
          {"init_std", c.init_std},
          {"dpc_init_scale", c.dpc_init_scale},
          {"damper_nominal", c.damper_nominal},
          {"seed", c.seed},
          {"width", c.width},
          {"layers", c.layers},
          {"dpc_hidden", c.dpc_hidden},
          {"bayesian", c.bayesian},
          {"dpc", c.dpc},
          {"ns_dropout", c.ns_dropout}};
}

/// Reads a training config; absent keys keep the defaults of `base`.
inline est::TrainConfig train_config_from_json(const json& j, est::TrainConfig c = {}) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  auto get = [&](const char* k, auto& dst) {
    if (!j.contains(k)) return;
    try {
      j.at(k).get_to(dst);
    } catch (const json::exception&) {
      throw ConfigError(std::string("training config field '") + k + "' has the wrong type");
    }
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("k_samples", c.k_samples);
  get("s_samples", c.s_samples);
  get("lr", c.lr);
  get("sigma_n", c.sigma_n);
  get("w_d", c.w_d);
  get("w_p", c.w_p);
  get("prior_sigma", c.prior_sigma);
  get("init_std", c.init_std);
  get("dpc_init_scale", c.dpc_init_scale);
  get("damper_nominal", c.damper_nominal);
  get("seed", c.seed);
  get("width", c.width);
  get("layers", c.layers);
  get("dpc_hidden", c.dpc_hidden);
  get("bayesian", c.bayesian);
  get("dpc", c.dpc);
  get("ns_dropout", c.ns_dropout);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"epochs", "batch_size", "k_samples", "s_samples", "lr", "sigma_n",
                                  "w_d", "w_p", "prior_sigma", "init_std", "dpc_init_scale",
                                  "damper_nominal", "seed", "width", "layers", "dpc_hidden",
                                  "bayesian", "dpc", "ns_dropout"};
    if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known))
      throw ConfigError("unknown training config field '" + it.key() + "'");
  }
  c.validate();
  return c;
}

inline json to_json(const est::Model& m) {
  json j;
  j["format"] = "dbpnet-checkpoint";
  j["version"] = format_version;
  j["method"] = m.method;
  j["network"] = {{"in_dim", m.shape.in_dim},
                  {"width", m.shape.width},
                  {"layers", m.shape.layers},
                  {"out_dim", m.shape.out_dim},
                  {"activation", "tanh"}};
  j["bayesian"] = m.bayesian();
  j["ns_dropout"] = m.ns_dropout;
  j["mu"] = vec_json(m.post.mu);
  j["rho"] = m.bayesian() ? vec_json(m.post.rho) : json::array();
  if (m.has_dpc)
    j["dpc"] = {{"in_dim", m.dpc.shape.in_dim},
                {"width", m.dpc.shape.width},
                {"hidden", m.dpc.shape.hidden},
                {"params", vec_json(m.dpc.p)}};
  else
    j["dpc"] = nullptr;
  j["normalizer"] = {{"mean", vec_json(m.norm.mean)},
                     {"sd", vec_json(m.norm.sd)},
                     {"f0", std::vector<double>(m.norm.f0.begin(), m.norm.f0.end())}};
  j["quarter_car"] = {{"m_spr", m.qc.m_spr}, {"m_unspr", m.qc.m_unspr}, {"k_f", m.qc.k_f},
                      {"k_r", m.qc.k_r},     {"c_f", m.qc.c_f},         {"c_r", m.qc.c_r},
                      {"f0_f", m.qc.f0_f},   {"f0_r", m.qc.f0_r}};
  j["train_config"] = train_config_json(m.cfg);
  j["train_size"] = m.train_size;
  json log = json::array();
  for (const auto& e : m.log)
    log.push_back({{"epoch", e.epoch}, {"l_d", e.l_d}, {"l_p", e.l_p}, {"kl", e.kl},
                   {"total", e.total}, {"val_rmse", e.val_rmse}});
  j["log"] = log;
  return j;
}

inline est::Model from_json(const json& j) {
  try {
    if (j.value("format", "") != "dbpnet-checkpoint") throw ConfigError("not a dbpnet checkpoint");
    const int v = j.at("version").get<int>();
    if (v != format_version)
      throw ConfigError("unsupported checkpoint version " + std::to_string(v));
    est::Model m;
    m.method = j.at("method").get<std::string>();
    const auto& n = j.at("network");
    m.shape = {n.at("in_dim").get<int>(), n.at("width").get<int>(), n.at("layers").get<int>(),
               n.at("out_dim").get<int>()};
    m.shape.validate();
    m.post.mu = json_vec(j.at("mu"), "mu");
    if (static_cast<std::size_t>(m.post.mu.size()) != m.shape.param_count())
      throw ConfigError("checkpoint mu has " + std::to_string(m.post.mu.size()) +
                        " entries, network needs " + std::to_string(m.shape.param_count()));
    if (j.at("bayesian").get<bool>()) {
      m.post.rho = json_vec(j.at("rho"), "rho");
      if (m.post.rho.size() != m.post.mu.size()) throw ConfigError("checkpoint rho/mu length mismatch");
    }
    m.ns_dropout = j.at("ns_dropout").get<bool>();
    const auto& d = j.at("dpc");
    m.has_dpc = !d.is_null();
    if (m.has_dpc) {
      m.dpc.shape.in_dim = d.at("in_dim").get<int>();
      m.dpc.shape.width = d.at("width").get<int>();
      m.dpc.shape.hidden = d.at("hidden").get<std::vector<int>>();
      m.dpc.p = json_vec(d.at("params"), "dpc.params");
      if (static_cast<std::size_t>(m.dpc.p.size()) != m.dpc.shape.param_count())
        throw ConfigError("checkpoint DPC parameter count does not match its shape");
    }
    const auto& z = j.at("normalizer");
    m.norm.mean = json_vec(z.at("mean"), "normalizer.mean");
    m.norm.sd = json_vec(z.at("sd"), "normalizer.sd");
    if (m.norm.mean.size() != m.shape.in_dim || m.norm.sd.size() != m.shape.in_dim)
      throw ConfigError("checkpoint normalizer does not match the input width");
    const auto f0 = z.at("f0").get<std::vector<double>>();
    if (f0.size() != 4) throw ConfigError("checkpoint normalizer f0 must have 4 entries");
    std::copy(f0.begin(), f0.end(), m.norm.f0.begin());
    const auto& q = j.at("quarter_car");
    m.qc.m_spr = q.at("m_spr").get<double>();
    m.qc.m_unspr = q.at("m_unspr").get<double>();
    m.qc.k_f = q.at("k_f").get<double>();
    m.qc.k_r = q.at("k_r").get<double>();
    m.qc.c_f = q.at("c_f").get<double>();
    m.qc.c_r = q.at("c_r").get<double>();
    m.qc.f0_f = q.at("f0_f").get<double>();
    m.qc.f0_r = q.at("f0_r").get<double>();
    m.cfg = train_config_from_json(j.at("train_config"));
    m.train_size = j.at("train_size").get<std::size_t>();
    for (const auto& e : j.at("log"))
      m.log.push_back({e.at("epoch").get<int>(), e.at("l_d").get<double>(), e.at("l_p").get<double>(),
                       e.at("kl").get<double>(), e.at("total").get<double>(),
                       e.at("val_rmse").get<double>()});
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save(const std::string& path, const est::Model& m) { io::write_json_atomic(path, to_json(m)); }

inline est::Model load(const std::string& path) {
  try {
    return from_json(io::read_json(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace dbpnet::ckpt
