#pragma once

// Geometry file: hard points, travel limits, knuckle-attached extras and the
// derived RSSR parameters of the three chains. The derived block is checked
// against a fresh derivation on load, so a hand-edited or stale file is
// rejected rather than silently rebuilt.

#include <string>

#include "dbpnet/io.hpp"
#include "dbpnet/kinematics.hpp"

namespace dbpnet {

struct GeometryFile {
  kin::SuspensionGeometry geometry;
  kin::Vec3 unsprung_cg = kin::Vec3::Zero();
  Eigen::Matrix3d unsprung_inertia = Eigen::Matrix3d::Identity();
};

namespace geometry_detail {

using io::json;

inline json vec_json(const kin::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline kin::Vec3 vec_from(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("geometry: missing '" + key + "'");
  const json& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ConfigError("geometry: '" + key + "' must be [x, y, z]");
  kin::Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!a[i].is_number()) throw ConfigError("geometry: '" + key + "' has a non-numeric entry");
    v[i] = a[i].get<double>();
  }
  return v;
}

inline double num(const json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw ConfigError("geometry: missing numeric '" + key + "'");
  return j.at(key).get<double>();
}

inline json chain_json(const kin::ChainModel& c) {
  return {{"h0", c.rssr.h0},
          {"h1", c.rssr.h1},
          {"h3", c.rssr.h3},
          {"l", c.rssr.l},
          {"s0", c.rssr.s0},
          {"s3", c.rssr.s3},
          {"alpha30", c.rssr.alpha30},
          {"design_theta0", c.design_angle},
          {"branch", c.branch == kin::Branch::elbow_plus ? "elbow+" : "elbow-"}};
}

inline void check_chain(const json& meta, const std::string& name, const kin::ChainModel& derived,
                        bool prismatic) {
  if (!meta.contains(name)) throw ConfigError("geometry: rssr block lacks chain '" + name + "'");
  const json& j = meta.at(name);
  kin::RssrGeometry g{num(j, "h0"), num(j, "h1"),      num(j, "h3"),     num(j, "l"),
                      num(j, "s0"), num(j, "s3"), num(j, "alpha30")};
  try {
    kin::validate(g, prismatic);
  } catch (const ConfigError& e) {
    throw ConfigError("geometry: chain '" + name + "': " + e.what());
  }
  const double tol = 1e-6;
  const kin::RssrGeometry& d = derived.rssr;
  const double diffs[] = {g.h0 - d.h0, g.h1 - d.h1, g.h3 - d.h3, g.l - d.l,
                          g.s0 - d.s0, g.s3 - d.s3, g.alpha30 - d.alpha30};
  for (double df : diffs)
    if (std::abs(df) > tol)
      throw ConfigError("geometry: chain '" + name +
                        "' metadata disagrees with the hard points (stale or edited file)");
  const std::string br = j.value("branch", std::string{});
  const std::string want = derived.branch == kin::Branch::elbow_plus ? "elbow+" : "elbow-";
  if (br != want) throw ConfigError("geometry: chain '" + name + "' branch must be " + want);
}

}  // namespace geometry_detail

inline io::json geometry_to_json(const GeometryFile& f) {
  using geometry_detail::chain_json;
  using geometry_detail::vec_json;
  const auto& g = f.geometry;
  const auto& h = g.nominal;
  io::json inertia = io::json::array();
  for (int r = 0; r < 3; ++r)
    inertia.push_back(
        {f.unsprung_inertia(r, 0), f.unsprung_inertia(r, 1), f.unsprung_inertia(r, 2)});
  return {
      {"format", "dbpnet-geometry"},
      {"version", g.version},
      {"name", g.name},
      {"frame", "vehicle frame, x forward, y left, z up, origin on the ground below the front "
                "axle centreline; meters; left-front corner"},
      {"hard_points",
       {{"u1", vec_json(h.u1)},
        {"u2", vec_json(h.u2)},
        {"l1", vec_json(h.l1)},
        {"l2", vec_json(h.l2)},
        {"p1", vec_json(h.p1)},
        {"p2", vec_json(h.p2)},
        {"t", vec_json(h.t)},
        {"s1", vec_json(h.s1)},
        {"s2", vec_json(h.s2)},
        {"s3", vec_json(h.s3)}}},
      {"rack_axis", vec_json(g.rack_axis)},
      {"wheel_center", vec_json(g.wheel_center)},
      {"contact_point", vec_json(g.contact_point)},
      {"unsprung_cg", vec_json(f.unsprung_cg)},
      {"unsprung_inertia", inertia},
      {"travel_limits",
       {{"rack_min", g.limits.rack_min},
        {"rack_max", g.limits.rack_max},
        {"damper_min", g.limits.damper_min},
        {"damper_max", g.limits.damper_max}}},
      {"rssr", {{"lca", chain_json(g.lca)}, {"uca", chain_json(g.uca)}, {"steer", chain_json(g.steer)}}},
  };
}

inline GeometryFile geometry_from_json(const io::json& j) {
  using namespace geometry_detail;
  if (!j.is_object() || j.value("format", std::string{}) != "dbpnet-geometry")
    throw ConfigError("geometry: not a dbpnet-geometry document");
  if (j.value("version", 0) != 1) throw ConfigError("geometry: unsupported version");
  if (!j.contains("hard_points")) throw ConfigError("geometry: missing 'hard_points'");
  const json& hp = j.at("hard_points");
  kin::HardPoints h;
  h.u1 = vec_from(hp, "u1");
  h.u2 = vec_from(hp, "u2");
  h.l1 = vec_from(hp, "l1");
  h.l2 = vec_from(hp, "l2");
  h.p1 = vec_from(hp, "p1");
  h.p2 = vec_from(hp, "p2");
  h.t = vec_from(hp, "t");
  h.s1 = vec_from(hp, "s1");
  h.s2 = vec_from(hp, "s2");
  h.s3 = vec_from(hp, "s3");
  if (!j.contains("travel_limits")) throw ConfigError("geometry: missing 'travel_limits'");
  const json& tl = j.at("travel_limits");
  kin::TravelLimits lim{num(tl, "rack_min"), num(tl, "rack_max"), num(tl, "damper_min"),
                        num(tl, "damper_max")};

  // Metadata first: an invalid link length is reported as such, before any
  // derivation from the hard points is attempted.
  if (!j.contains("rssr")) throw ConfigError("geometry: missing 'rssr' block");
  const json& meta = j.at("rssr");
  for (const char* name : {"lca", "uca", "steer"}) {
    if (!meta.contains(name)) throw ConfigError(std::string("geometry: rssr block lacks '") + name + "'");
    const json& c = meta.at(name);
    kin::RssrGeometry g{num(c, "h0"), num(c, "h1"), num(c, "h3"),     num(c, "l"),
                        num(c, "s0"), num(c, "s3"), num(c, "alpha30")};
    try {
      kin::validate(g, std::string(name) != "uca");
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("geometry: chain '") + name + "': " + e.what());
    }
  }

  GeometryFile f;
  f.geometry = kin::make_suspension_geometry(j.value("name", std::string("unnamed")), h,
                                             vec_from(j, "rack_axis"), lim,
                                             vec_from(j, "wheel_center"),
                                             vec_from(j, "contact_point"));
  check_chain(meta, "lca", f.geometry.lca, true);
  check_chain(meta, "uca", f.geometry.uca, false);
  check_chain(meta, "steer", f.geometry.steer, true);

  f.unsprung_cg = vec_from(j, "unsprung_cg");
  if (!j.contains("unsprung_inertia")) throw ConfigError("geometry: missing 'unsprung_inertia'");
  const json& in = j.at("unsprung_inertia");
  if (!in.is_array() || in.size() != 3) throw ConfigError("geometry: unsprung_inertia must be 3x3");
  for (int r = 0; r < 3; ++r) {
    if (!in[r].is_array() || in[r].size() != 3)
      throw ConfigError("geometry: unsprung_inertia must be 3x3");
    for (int c = 0; c < 3; ++c) f.unsprung_inertia(r, c) = in[r][c].get<double>();
  }
  const Eigen::Matrix3d& I = f.unsprung_inertia;
  if ((I - I.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(I).eigenvalues().minCoeff() <= 0.0)
    throw ConfigError("geometry: unsprung_inertia must be symmetric positive definite");
  return f;
}

inline GeometryFile load_geometry(const io::fs::path& path) {
  if (!io::fs::exists(path)) throw ConfigError("geometry file not found: " + path.string());
  try {
    return geometry_from_json(io::read_json(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void save_geometry(const io::fs::path& path, const GeometryFile& f) {
  io::write_json_atomic(path, geometry_to_json(f));
}

/// The shipped left-front double wishbone, a Formula-Student sized layout
/// matched to the 1.240 m front track. The damper acts directly on the lower
/// ball joint (p1 = s3).
inline GeometryFile default_geometry() {
  using kin::Vec3;
  kin::HardPoints h;
  h.s1 = Vec3(-0.005, 0.560, 0.330);
  h.s3 = Vec3(0.005, 0.575, 0.130);
  h.s2 = Vec3(0.070, 0.565, 0.170);
  h.u1 = Vec3(0.120, 0.300, 0.300);
  h.u2 = Vec3(-0.120, 0.300, 0.290);
  h.l1 = Vec3(0.140, 0.250, 0.110);
  h.l2 = Vec3(-0.140, 0.250, 0.110);
  h.t = Vec3(0.070, 0.250, 0.160);
  h.p2 = Vec3(0.020, 0.350, 0.520);
  h.p1 = h.s3;
  kin::TravelLimits lim{-0.03, 0.03, -0.055, 0.055};
  GeometryFile f;
  f.geometry = kin::make_suspension_geometry("fs-double-wishbone-lf", h, Vec3::UnitY(), lim,
                                             Vec3(0.0, 0.620, 0.230), Vec3(0.0, 0.620, 0.0));
  f.unsprung_cg = Vec3(0.0, 0.600, 0.230);
  f.unsprung_inertia = Eigen::Vector3d(0.30, 0.50, 0.30).asDiagonal();
  return f;
}

}  // namespace dbpnet
