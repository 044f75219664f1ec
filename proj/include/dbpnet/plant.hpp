#pragma once

// Synthetic vehicle: a 7-DOF ride model (sprung heave, pitch, roll and four
// unsprung heaves) driven by scripted speed, rack and road profiles, with
// quasi-static lateral and longitudinal load transfer applied as body moments.
// Sensor channels go through the linkage model so that damper compression and
// pushrod force carry the geometry's motion ratio.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dbpnet/dynamics.hpp"
#include "dbpnet/errors.hpp"
#include "dbpnet/geometry_io.hpp"
#include "dbpnet/kinematics.hpp"
#include "dbpnet/rng.hpp"
#include "dbpnet/types.hpp"

namespace dbpnet::plant {

using dyn::gravity;

struct DamperMap {
  double c_lo = 500.0;   ///< N*s/m, high-speed slope
  double c_hi = 4500.0;  ///< N*s/m, slope through zero
  double v_knee = 0.05;  ///< m/s

  /// Force at the wheel for compression rate v (positive resists compression).
  double force(double v) const {
    return c_lo * v + (c_hi - c_lo) * v_knee * std::tanh(v / v_knee);
  }
};

struct VehicleParams {
  double m_s = 248.0;            ///< sprung mass, kg
  double m_u = 9.0;              ///< unsprung mass per corner, kg
  double wheelbase = 1.600;      ///< m
  double track_f = 1.240;        ///< m
  double track_r = 1.234;        ///< m
  double h_cg = 0.320;           ///< m
  double a_front = 0.862;        ///< CG to front axle, m
  double k_f = 78000.0;          ///< wheel rate, N/m
  double k_r = 100000.0;         ///< wheel rate, N/m
  DamperMap damper;
  double k_tire = 120000.0;      ///< N/m
  double i_roll = 30.0;          ///< kg*m^2
  double i_pitch = 110.0;        ///< kg*m^2
  double steer_arm = 0.07;       ///< rack travel per radian of road-wheel angle, m
  double rack_per_rev = 0.09;    ///< rack travel per steering-wheel turn, m
  double state_bound = 1e3;      ///< divergence guard on the state vector norm

  double b_rear() const { return wheelbase - a_front; }

  void validate() const {
    const double v[] = {m_s, m_u, wheelbase, track_f, track_r, h_cg, a_front, k_f, k_r,
                        damper.c_lo, damper.c_hi, damper.v_knee, k_tire, i_roll, i_pitch,
                        steer_arm, rack_per_rev, state_bound};
    for (double x : v)
      if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("vehicle parameters must be positive");
    if (!(a_front < wheelbase)) throw ConfigError("CG-to-front-axle must be shorter than wheelbase");
  }

  /// Static tire load per corner, N.
  double static_load(Corner c) const {
    const double share = is_front(c) ? b_rear() / wheelbase : a_front / wheelbase;
    return 0.5 * m_s * share * gravity + m_u * gravity;
  }
  double total_weight() const { return (m_s + 4.0 * m_u) * gravity; }

  /// Corner position relative to the sprung CG (x forward, y left).
  double corner_x(Corner c) const { return is_front(c) ? a_front : -b_rear(); }
  double corner_y(Corner c) const {
    const double half = 0.5 * (is_front(c) ? track_f : track_r);
    return (c == Corner::fl || c == Corner::rl) ? half : -half;
  }
  double wheel_rate(Corner c) const { return is_front(c) ? k_f : k_r; }
};

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

enum class ScenarioClass { normal, emergency };

inline const char* class_name(ScenarioClass c) {
  return c == ScenarioClass::normal ? "NormalDriving" : "EmergencyDriving";
}

/// Road elevation along the left and right wheel tracks, by distance.
struct Road {
  struct Wave {
    double amplitude, wavelength, phase_left, phase_right;
  };
  struct Bump {
    double start, length, height;
    bool left, right;
  };
  std::vector<Wave> waves;
  std::vector<Bump> bumps;

  double height(bool left, double s) const {
    double z = 0.0;
    for (const Wave& w : waves)
      z += w.amplitude *
           std::sin(2.0 * std::numbers::pi * s / w.wavelength + (left ? w.phase_left : w.phase_right));
    for (const Bump& b : bumps) {
      if ((left && !b.left) || (!left && !b.right)) continue;
      const double u = (s - b.start) / b.length;
      if (u > 0.0 && u < 1.0) z += 0.5 * b.height * (1.0 - std::cos(2.0 * std::numbers::pi * u));
    }
    return z;
  }

  /// Random-phase sinusoid texture with amplitude falling with wavenumber.
  static Road textured(Rng& rng, double rms_scale, double min_wavelength, double max_wavelength,
                       int count) {
    Road r;
    for (int i = 0; i < count; ++i) {
      const double f = static_cast<double>(i) / std::max(1, count - 1);
      const double wl = max_wavelength * std::pow(min_wavelength / max_wavelength, f);
      const double amp = rms_scale * std::sqrt(wl / max_wavelength);
      const double pl = rng.uniform(0.0, 2.0 * std::numbers::pi);
      // left/right tracks share the long waves, decorrelate on short ones
      const double pr = pl + (1.0 - std::sqrt(wl / max_wavelength)) * rng.uniform(0.0, 2.0 * std::numbers::pi);
      r.waves.push_back({amp, wl, pl, pr});
    }
    return r;
  }
};

struct ScenarioProfile {
  std::string name;
  ScenarioClass cls = ScenarioClass::normal;
  double duration = 40.0;
  std::function<double(double)> rack;   ///< x_a(t), m
  std::function<double(double)> speed;  ///< v(t), m/s
  std::function<double(double)> accel;  ///< dv/dt
  Road road;
};

namespace shape {

/// C1 step from 0 to 1 over [t0, t0 + dur].
inline double ease(double t, double t0, double dur) {
  if (t <= t0) return 0.0;
  if (t >= t0 + dur) return 1.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * (t - t0) / dur));
}
inline double ease_rate(double t, double t0, double dur) {
  if (t <= t0 || t >= t0 + dur) return 0.0;
  return 0.5 * std::numbers::pi / dur * std::sin(std::numbers::pi * (t - t0) / dur);
}

/// Raised-cosine pulse of height 1 over [t0, t0 + dur].
inline double pulse(double t, double t0, double dur) {
  if (t <= t0 || t >= t0 + dur) return 0.0;
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (t - t0) / dur));
}

/// Speed schedule through (t, v) keyframes with eased transitions.
struct SpeedPlan {
  double v0;
  struct Change {
    double t0, dur, dv;
  };
  std::vector<Change> changes;

  double v(double t) const {
    double s = v0;
    for (const auto& c : changes) s += c.dv * ease(t, c.t0, c.dur);
    return s;
  }
  double a(double t) const {
    double s = 0.0;
    for (const auto& c : changes) s += c.dv * ease_rate(t, c.t0, c.dur);
    return s;
  }
};

/// Rack command as a sum of eased holds and pulses.
struct RackPlan {
  struct Pulse {
    double t0, dur, amp;
  };
  struct Sine {
    double t0, t1, amp, period;
  };
  std::vector<Pulse> pulses;
  std::vector<Sine> sines;

  double operator()(double t) const {
    double x = 0.0;
    for (const auto& p : pulses) x += p.amp * pulse(t, p.t0, p.dur);
    for (const auto& s : sines) {
      if (t <= s.t0 || t >= s.t1) continue;
      const double env = ease(t, s.t0, 2.0) * (1.0 - ease(t, s.t1 - 2.0, 2.0));
      x += env * s.amp * std::sin(2.0 * std::numbers::pi * (t - s.t0) / s.period);
    }
    return x;
  }
};

}  // namespace shape

inline ScenarioProfile make_profile(std::string name, ScenarioClass cls, double duration,
                                    shape::SpeedPlan sp, std::function<double(double)> rack,
                                    Road road) {
  ScenarioProfile p;
  p.name = std::move(name);
  p.cls = cls;
  p.duration = duration;
  p.speed = [sp](double t) { return sp.v(t); };
  p.accel = [sp](double t) { return sp.a(t); };
  p.rack = std::move(rack);
  p.road = std::move(road);
  return p;
}

/// Constant speed, constant rack, flat road.
inline ScenarioProfile steady_profile(const std::string& name, double v, double x_a,
                                      double duration = 40.0, double ramp = 0.0) {
  shape::SpeedPlan sp{v, {}};
  return make_profile(name, ScenarioClass::normal, duration, sp,
                      [x_a, ramp](double t) { return ramp > 0 ? x_a * shape::ease(t, 0.0, ramp) : x_a; },
                      Road{});
}

inline std::vector<std::string> scenario_names() {
  return {"urban_stop_go",  "urban_turns",         "rural_winding",     "rural_rough",
          "highway_cruise", "highway_lane_change", "emergency_brake",   "emergency_avoidance",
          "distracted_swerve", "brake_in_turn"};
}

/// Scripted scenario library. Road textures are drawn from a stream derived
/// from the road seed and the scenario index.
inline ScenarioProfile scenario(const std::string& name, std::uint64_t road_seed,
                                double duration = 40.0) {
  using namespace shape;
  const auto names = scenario_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown scenario '" + name + "'");
  Rng rng(Rng::derive(road_seed, static_cast<std::uint64_t>(it - names.begin())));
  const double T = duration;
  auto turn_train = [](std::vector<RackPlan::Pulse> p) {
    RackPlan r;
    r.pulses = std::move(p);
    return r;
  };

  if (name == "urban_stop_go") {
    SpeedPlan sp{0.0, {{1, 4, 12}, {10, 4, -12}, {16, 4, 10}, {26, 3.5, -10}, {31, 4, 11}}};
    Road road = Road::textured(rng, 0.002, 0.4, 20.0, 12);
    road.bumps.push_back({40.0, 3.0, 0.025, true, true});
    road.bumps.push_back({150.0, 3.0, 0.025, true, true});
    RackPlan rk = turn_train({{5, 3, 0.004}, {22, 3, -0.004}, {34, 3, 0.003}});
    return make_profile(name, ScenarioClass::normal, T, sp, rk, road);
  }
  if (name == "urban_turns") {
    SpeedPlan sp{6.0, {{4, 2, 2}, {14, 2, -2}, {22, 3, 3}, {30, 3, -3}}};
    Road road = Road::textured(rng, 0.0025, 0.4, 20.0, 12);
    road.bumps.push_back({95.0, 2.0, 0.015, true, false});
    RackPlan rk = turn_train({{2, 4, 0.010}, {9, 4, -0.010}, {16, 5, 0.008}, {25, 4, -0.007},
                              {33, 5, 0.010}});
    return make_profile(name, ScenarioClass::normal, T, sp, rk, road);
  }
  if (name == "rural_winding") {
    SpeedPlan sp{15.0, {{10, 4, 2}, {25, 4, -3}}};
    Road road = Road::textured(rng, 0.003, 0.3, 30.0, 14);
    RackPlan rk;
    rk.sines.push_back({0.5, T - 0.5, 0.0022, 6.0});
    return make_profile(name, ScenarioClass::normal, T, sp, rk, road);
  }
  if (name == "rural_rough") {
    SpeedPlan sp{12.0, {{15, 5, -2}, {28, 4, 3}}};
    Road road = Road::textured(rng, 0.008, 0.25, 25.0, 16);
    road.bumps.push_back({120.0, 1.5, 0.02, false, true});
    road.bumps.push_back({300.0, 1.5, 0.03, true, false});
    RackPlan rk;
    rk.sines.push_back({1.0, T - 1.0, 0.0015, 9.0});
    return make_profile(name, ScenarioClass::normal, T, sp, rk, road);
  }
  if (name == "highway_cruise") {
    SpeedPlan sp{28.0, {{12, 6, 2}, {26, 6, -3}}};
    Road road = Road::textured(rng, 0.002, 1.0, 60.0, 12);
    RackPlan rk;
    rk.sines.push_back({2.0, T - 2.0, 0.0003, 14.0});
    return make_profile(name, ScenarioClass::normal, T, sp, rk, road);
  }
  if (name == "highway_lane_change") {
    SpeedPlan sp{27.0, {{20, 5, 1}}};
    Road road = Road::textured(rng, 0.002, 1.0, 60.0, 12);
    RackPlan rk = turn_train({{6, 2.5, 0.0008}, {8.5, 2.5, -0.0008}, {24, 3, -0.0007},
                              {27, 3, 0.0007}});
    return make_profile(name, ScenarioClass::normal, T, sp, rk, road);
  }
  if (name == "emergency_brake") {
    SpeedPlan sp{20.0, {{5, 2.2, -17}, {9, 6, 15}, {20, 2.0, -14}, {24, 6, 12}, {33, 1.8, -12}}};
    Road road = Road::textured(rng, 0.003, 0.4, 30.0, 12);
    RackPlan rk = turn_train({{14, 3, 0.002}, {28, 3, -0.002}});
    return make_profile(name, ScenarioClass::emergency, T, sp, rk, road);
  }
  if (name == "emergency_avoidance") {
    SpeedPlan sp{20.0, {{6.5, 1.5, -6}, {15, 5, 6}, {26.5, 1.5, -7}, {32, 4, 6}}};
    Road road = Road::textured(rng, 0.003, 0.4, 30.0, 12);
    RackPlan rk = turn_train({{5, 1.1, 0.0042}, {6.1, 1.1, -0.0045}, {7.2, 1.0, 0.002},
                              {25, 1.0, -0.004}, {26, 1.0, 0.0045}, {27, 1.0, -0.002}});
    return make_profile(name, ScenarioClass::emergency, T, sp, rk, road);
  }
  if (name == "distracted_swerve") {
    SpeedPlan sp{16.0, {{9, 1.5, -5}, {14, 5, 5}, {29, 1.5, -6}}};
    Road road = Road::textured(rng, 0.006, 0.3, 25.0, 14);
    road.bumps.push_back({60.0, 1.2, 0.03, true, false});
    road.bumps.push_back({430.0, 1.2, 0.03, false, true});
    RackPlan rk = turn_train({{7, 1.0, 0.0055}, {8, 1.2, -0.0062}, {9.2, 1.4, 0.003},
                              {27, 0.9, -0.005}, {27.9, 1.2, 0.0058}, {29.1, 1.4, -0.0026}});
    return make_profile(name, ScenarioClass::emergency, T, sp, rk, road);
  }
  // brake_in_turn
  SpeedPlan sp{15.0, {{10, 1.5, -7}, {17, 5, 8}, {30, 1.5, -8}}};
  Road road = Road::textured(rng, 0.003, 0.4, 30.0, 12);
  RackPlan rk = turn_train({{6, 8, 0.0042}, {26, 8, -0.0045}});
  return make_profile(name, ScenarioClass::emergency, T, sp, rk, road);
}

// ---------------------------------------------------------------------------
// Linkage tables for sensor synthesis
// ---------------------------------------------------------------------------

/// Damper compression against wheel travel (contact-point rise) at zero rack
/// travel, with the derivatives needed for the pushrod force.
class LinkageTable {
 public:
  LinkageTable() = default;

  LinkageTable(const GeometryFile& geo, int n = 1101) {
    const auto& g = geo.geometry;
    const double lo = g.limits.damper_min, hi = g.limits.damper_max;
    const double zc0 = g.contact_point.z();
    const double zg0 = geo.unsprung_cg.z();
    xd_.resize(n);
    travel_.resize(n);
    cg_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double xd = std::lerp(lo, hi, static_cast<double>(i) / (n - 1));
      const auto st = kin::hard_points(g, 0.0, xd);
      xd_[i] = xd;
      travel_[i] = st.contact_point.z() - zc0;
      cg_[i] = st.knuckle_point(geo.unsprung_cg).z() - zg0;
    }
    for (int i = 1; i < n; ++i)
      if (!(travel_[i] > travel_[i - 1]))
        throw ConfigError("wheel travel is not monotone in damper compression");
    dtravel_.resize(n);
    dcg_.resize(n);
    for (int i = 0; i < n; ++i) {
      const int a = std::max(0, i - 1), b = std::min(n - 1, i + 1);
      dtravel_[i] = (travel_[b] - travel_[a]) / (xd_[b] - xd_[a]);
      dcg_[i] = (cg_[b] - cg_[a]) / (xd_[b] - xd_[a]);
    }
    const auto k0 = static_cast<std::size_t>(lower(xd_, 0.0));
    mr0_ = 1.0 / interp(xd_, dtravel_, 0.0, k0);
  }

  /// Damper compression for a wheel travel, linear beyond the table.
  double compression(double travel) const { return interp(travel_, xd_, travel, lower(travel_, travel)); }

  /// d(compression)/d(travel) at a wheel travel.
  double motion_ratio(double travel) const {
    const double xd = compression(travel);
    return 1.0 / interp(xd_, dtravel_, xd, lower(xd_, xd));
  }
  /// d(contact z)/d(compression) and d(CG z)/d(compression) at a compression.
  double contact_rate(double xd) const { return interp(xd_, dtravel_, xd, lower(xd_, xd)); }
  double cg_rate(double xd) const { return interp(xd_, dcg_, xd, lower(xd_, xd)); }
  double motion_ratio_design() const { return mr0_; }

 private:
  static std::size_t lower(const std::vector<double>& x, double v) {
    auto it = std::upper_bound(x.begin(), x.end(), v);
    std::size_t i = it == x.begin() ? 0 : static_cast<std::size_t>(it - x.begin() - 1);
    return std::min(i, x.size() - 2);
  }
  static double interp(const std::vector<double>& x, const std::vector<double>& y, double v,
                       std::size_t i) {
    const double t = (v - x[i]) / (x[i + 1] - x[i]);
    return y[i] + t * (y[i + 1] - y[i]);
  }

  std::vector<double> xd_, travel_, cg_, dtravel_, dcg_;
  double mr0_ = 1.0;
};

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// State layout: [z, pitch, roll, zu_fl, zu_fr, zu_rl, zu_rr] then the seven rates.
/// Heave and unsprung heights are deviations from static equilibrium, pitch
/// is nose-up positive, roll is left-side-up positive.
using State = Eigen::Matrix<double, 14, 1>;

struct TrajectoryPoint {
  State state;
  SensorSample clean;
  WheelLoads loads{};
  Quad wheel_travel{};
  double a_x = 0.0, a_y = 0.0, speed = 0.0, x_a = 0.0;
  dyn::Slip slip;
};

struct Trajectory {
  std::string scenario;
  ScenarioClass cls = ScenarioClass::normal;
  std::vector<TrajectoryPoint> points;
};

class VehicleModel {
 public:
  VehicleModel(VehicleParams p, const GeometryFile& geo) : p_(p), table_(geo) { p_.validate(); }

  const VehicleParams& params() const { return p_; }
  const LinkageTable& table() const { return table_; }

  struct Inputs {
    double a_x, a_y;
    Quad z_road;
  };

  Inputs inputs(const ScenarioProfile& prof, double t, double distance) const {
    Inputs in;
    const double v = prof.speed(t);
    in.a_x = prof.accel(t);
    const double road_angle = prof.rack(t) / p_.steer_arm;
    in.a_y = v * v * std::tan(road_angle) / p_.wheelbase;
    for (Corner c : all_corners) {
      const bool left = c == Corner::fl || c == Corner::rl;
      const double s = is_front(c) ? distance : distance - p_.wheelbase;
      in.z_road[idx(c)] = prof.road.height(left, s);
    }
    return in;
  }

  /// Suspension compression (wheel relative to body) and its rate per corner.
  void deflections(const State& x, Quad& s, Quad& sd) const {
    for (Corner c : all_corners) {
      const int i = idx(c);
      const double xi = p_.corner_x(c), yi = p_.corner_y(c);
      const double zb = x(0) + xi * x(1) + yi * x(2);
      const double zbd = x(7) + xi * x(8) + yi * x(9);
      s[i] = x(3 + i) - zb;
      sd[i] = x(10 + i) - zbd;
    }
  }

  double tire_load(Corner c, double z_road, double z_u) const {
    return std::max(0.0, p_.static_load(c) + p_.k_tire * (z_road - z_u));
  }

  State derivative(const State& x, const Inputs& in) const {
    Quad s, sd;
    deflections(x, s, sd);
    State dx;
    dx.head<7>() = x.tail<7>();
    double fz = 0.0, mp = p_.m_s * in.a_x * p_.h_cg, mr = p_.m_s * in.a_y * p_.h_cg;
    for (Corner c : all_corners) {
      const int i = idx(c);
      const double fs = p_.wheel_rate(c) * s[i] + p_.damper.force(sd[i]);
      fz += fs;
      mp += p_.corner_x(c) * fs;
      mr += p_.corner_y(c) * fs;
      const double ft = tire_load(c, in.z_road[i], x(3 + i)) - p_.static_load(c);
      dx(10 + i) = (ft - fs) / p_.m_u;
    }
    dx(7) = fz / p_.m_s;
    dx(8) = mp / p_.i_pitch;
    dx(9) = mr / p_.i_roll;
    return dx;
  }

  TrajectoryPoint observe(const State& x, const ScenarioProfile& prof, double t,
                          double distance) const {
    const Inputs in = inputs(prof, t, distance);
    const State dx = derivative(x, in);
    TrajectoryPoint pt;
    pt.state = x;
    pt.a_x = in.a_x;
    pt.a_y = in.a_y;
    pt.speed = prof.speed(t);
    pt.x_a = prof.rack(t);
    pt.slip = {in.a_x / gravity, in.a_y / gravity, 0.0};
    Quad s, sd;
    deflections(x, s, sd);
    SensorSample& o = pt.clean;
    o.t = t;
    o.delta = pt.x_a * 2.0 * std::numbers::pi / p_.rack_per_rev;
    for (Corner c : all_corners) {
      const int i = idx(c);
      const double xi = p_.corner_x(c), yi = p_.corner_y(c);
      o.a_spr[i] = dx(7) + xi * dx(8) + yi * dx(9);
      o.a_unspr[i] = dx(10 + i);
      const double xd = table_.compression(s[i]);
      o.d_sus[i] = xd;
      o.d_sus_dot[i] = table_.motion_ratio(s[i]) * sd[i];
      const double f_spring = p_.static_load(c) + p_.wheel_rate(c) * s[i] + p_.damper.force(sd[i]);
      o.f_p[i] = f_spring * table_.contact_rate(xd) - p_.m_u * gravity * table_.cg_rate(xd);
      pt.loads[i] = tire_load(c, in.z_road[i], x(3 + i));
      pt.wheel_travel[i] = s[i];
    }
    return pt;
  }

 private:
  VehicleParams p_;
  LinkageTable table_;
};

/// Integrates a scenario with classical RK4 and samples at output_rate.
inline Trajectory simulate(const VehicleModel& model, const ScenarioProfile& prof, double dt,
                           double output_rate = 20.0) {
  if (!(dt > 0.0 && dt <= 0.05)) throw ConfigError("integration step must lie in (0, 0.05] s");
  if (!(prof.duration > 0.0) || !prof.rack || !prof.speed || !prof.accel)
    throw ConfigError("scenario '" + prof.name + "' is not well formed");
  const double out_dt = 1.0 / output_rate;
  const int sub = static_cast<int>(std::ceil(out_dt / dt - 1e-9));
  const double h = out_dt / sub;
  const int n_out = static_cast<int>(std::floor(prof.duration * output_rate + 1e-9)) + 1;

  Trajectory tr;
  tr.scenario = prof.name;
  tr.cls = prof.cls;
  tr.points.reserve(n_out);
  State x = State::Zero();
  double dist = 0.0;
  // distance integrates v(t) with the same RK4 weights (Simpson on each step)
  auto f = [&](const State& s, double t, double d) {
    return model.derivative(s, model.inputs(prof, t, d));
  };
  tr.points.push_back(model.observe(x, prof, 0.0, dist));
  for (int k = 1; k < n_out; ++k) {
    for (int j = 0; j < sub; ++j) {
      const double t = ((k - 1) * sub + j) * h;
      const double v0 = prof.speed(t), vm = prof.speed(t + 0.5 * h), v1 = prof.speed(t + h);
      const double dm = dist + 0.5 * h * v0;  // midpoint distance estimates
      const State k1 = f(x, t, dist);
      const State k2 = f(x + 0.5 * h * k1, t + 0.5 * h, dm);
      const State k3 = f(x + 0.5 * h * k2, t + 0.5 * h, dist + 0.5 * h * vm);
      const double d1 = dist + h / 6.0 * (v0 + 4.0 * vm + v1);
      const State k4 = f(x + h * k3, t + h, d1);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      dist = d1;
      if (!x.allFinite() || x.norm() > model.params().state_bound)
        throw IntegrationDiverged("scenario '" + prof.name + "' at t=" + std::to_string(t + h) +
                                  " s");
    }
    tr.points.push_back(model.observe(x, prof, k * out_dt, dist));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Sensor noise
// ---------------------------------------------------------------------------

struct NoiseConfig {
  double delta = 0.01;      ///< rad
  double a_spr = 0.5;       ///< m/s^2
  double a_unspr = 2.0;     ///< m/s^2
  double d_sus = 0.0005;    ///< m
  double d_sus_dot = 0.01;  ///< m/s
  double f_p = 10.0;        ///< N
  std::uint64_t seed = 1;

  void validate() const {
    for (double s : {delta, a_spr, a_unspr, d_sus, d_sus_dot, f_p})
      if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("noise standard deviations must be >= 0");
  }
};

/// Adds independent zero-mean Gaussian noise per channel; time is untouched.
inline SensorSample add_noise(const SensorSample& in, const NoiseConfig& cfg, Rng& rng) {
  SensorSample o = in;
  o.delta += cfg.delta * rng.normal();
  for (int i = 0; i < 4; ++i) o.a_spr[i] += cfg.a_spr * rng.normal();
  for (int i = 0; i < 4; ++i) o.a_unspr[i] += cfg.a_unspr * rng.normal();
  for (int i = 0; i < 4; ++i) o.d_sus[i] += cfg.d_sus * rng.normal();
  for (int i = 0; i < 4; ++i) o.d_sus_dot[i] += cfg.d_sus_dot * rng.normal();
  for (int i = 0; i < 4; ++i) o.f_p[i] += cfg.f_p * rng.normal();
  return o;
}

/// Quarter-car prior consistent with the plant, expressed per unit damper
/// compression through the design motion ratio. The damper is represented by
/// a single linear coefficient, so its nonlinearity stays a model gap.
inline dyn::QuarterCarParams quarter_car_params(const VehicleParams& p, const LinkageTable& table,
                                                double c_nominal) {
  const double mr = table.motion_ratio_design();
  dyn::QuarterCarParams q;
  q.m_spr = p.m_s;
  q.m_unspr = p.m_u;
  q.k_f = p.k_f / mr;
  q.k_r = p.k_r / mr;
  q.c_f = c_nominal / mr;
  q.c_r = c_nominal / mr;
  q.f0_f = p.static_load(Corner::fl);
  q.f0_r = p.static_load(Corner::rl);
  return q;
}

}  // namespace dbpnet::plant
