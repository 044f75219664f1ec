#pragma once

// Suspension linkage kinematics: RSSR closure solver and the double-wishbone
// hard-point model built from three RSSR submechanisms.
//
// Chain layout (vehicle frame: x forward, y left, z up):
//   lca chain    damper length (driven by x_d) positions the lower control arm
//                about the l1-l2 axis; the damper chassis end p2 is the fixed
//                (zero-length input link) end of the chain.
//   uca chain    lower ball joint s3 drives the upper control arm about u1-u2
//                through the kingpin coupler |s1 - s3|.
//   steer chain  rack travel x_a moves the inner tie-rod point t (prismatic
//                input); the tie rod turns the knuckle about the kingpin s3-s1.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

#include "dbpnet/errors.hpp"

namespace dbpnet::kin {

using Vec3 = Eigen::Vector3d;
using Rotation3 = Eigen::Matrix3d;

inline constexpr double pi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * pi);
  if (r <= -pi) r += 2.0 * pi;
  return r;
}

/// Rz(theta) * Rx(alpha), written out entry by entry.
inline Rotation3 direction_cosine(double theta, double alpha) {
  const double ct = std::cos(theta), st = std::sin(theta);
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  Rotation3 m;
  m << ct, -st * ca, st * sa,
       st, ct * ca, -ct * sa,
       0.0, sa, ca;
  return m;
}

// ---------------------------------------------------------------------------
// RSSR mechanism
// ---------------------------------------------------------------------------

/// Revolute-sphere-sphere-revolute submechanism in its canonical frame.
/// Frame origin sits on the input axis z1 at the foot of the common
/// perpendicular; the output axis z3 passes through (-h0, 0, 0).
struct RssrGeometry {
  double h0 = 0.0;       ///< distance between the two revolute axes [m]
  double h1 = 0.0;       ///< input link length [m]
  double h3 = 0.0;       ///< output link length [m]
  double l = 0.0;        ///< coupler length [m]
  double s0 = 0.0;       ///< input hinge offset along z1 [m]
  double s3 = 0.0;       ///< output hinge offset along z3 [m]
  double alpha30 = 0.0;  ///< skew angle between z1 and z3 [rad]
};

enum class Branch { elbow_plus, elbow_minus };

/// Throws ConfigError when the geometry violates its invariants. A prismatic
/// input chain carries no input link, so h1 is not checked there.
inline void validate(const RssrGeometry& g, bool prismatic_input = false) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(g.h0) || !finite(g.h1) || !finite(g.h3) || !finite(g.l) || !finite(g.s0) ||
      !finite(g.s3) || !finite(g.alpha30))
    throw ConfigError("RSSR geometry has non-finite entries");
  if (!prismatic_input && !(g.h1 > 0.0)) throw ConfigError("RSSR input link h1 must be > 0");
  if (!(g.h3 > 0.0)) throw ConfigError("RSSR output link h3 must be > 0");
  if (!(g.l > 0.0)) throw ConfigError("RSSR coupler length l must be > 0");
  if (g.alpha30 < 0.0 || g.alpha30 >= pi) throw ConfigError("RSSR skew angle must lie in [0, pi)");
}

/// Coefficients of A sin(theta0) + B cos(theta0) + C = 0.
struct TrigCoefficients {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

inline TrigCoefficients rssr_coefficients(const RssrGeometry& g, double theta1) {
  const double ca = std::cos(g.alpha30), sa = std::sin(g.alpha30);
  const double c1 = std::cos(theta1), s1 = std::sin(theta1);
  TrigCoefficients k;
  k.a = ca * s1 - g.s0 * sa / g.h1;
  k.b = -(g.h0 / g.h1 + c1);
  k.c = (g.h1 * g.h1 - g.l * g.l + g.h3 * g.h3 + g.h0 * g.h0 + g.s3 * g.s3 + g.s0 * g.s0 -
         2.0 * g.s3 * g.s0 * ca) /
            (2.0 * g.h1 * g.h3) +
        (g.h0 * c1 - g.s3 * sa * s1) / g.h3;
  return k;
}

/// Limit of h1 * rssr_coefficients as h1 -> 0 with the input hinge sliding
/// along z1: the input point becomes (0, 0, s0 + s_travel).
inline TrigCoefficients rssr_prismatic_coefficients(const RssrGeometry& g, double s_travel) {
  const double ca = std::cos(g.alpha30), sa = std::sin(g.alpha30);
  const double s0 = g.s0 + s_travel;
  TrigCoefficients k;
  k.a = -s0 * sa;
  k.b = -g.h0;
  k.c = (g.h3 * g.h3 + g.h0 * g.h0 + g.s3 * g.s3 + s0 * s0 - g.l * g.l - 2.0 * g.s3 * s0 * ca) /
        (2.0 * g.h3);
  return k;
}

inline double trig_residual(const TrigCoefficients& k, double theta) {
  return k.a * std::sin(theta) + k.b * std::cos(theta) + k.c;
}

/// Solves A sin + B cos + C = 0 on the requested branch. Throws NoSolution when
/// A^2 + B^2 < C^2.
inline double solve_trig(const TrigCoefficients& k, Branch branch) {
  const double r2 = k.a * k.a + k.b * k.b;
  if (!(r2 > 0.0) || k.c * k.c > r2)
    throw NoSolution("closure has no real root (A^2 + B^2 < C^2)");
  const double r = std::sqrt(r2);
  const double phi = std::atan2(k.a, k.b);
  const double half = std::acos(std::clamp(-k.c / r, -1.0, 1.0));
  double theta = branch == Branch::elbow_plus ? phi + half : phi - half;
  // Newton polish away from the tangent (double-root) configuration.
  for (int it = 0; it < 2; ++it) {
    const double df = k.a * std::cos(theta) - k.b * std::sin(theta);
    if (std::abs(df) <= 1e-6 * r) break;
    theta -= trig_residual(k, theta) / df;
  }
  return wrap_angle(theta);
}

inline double rssr_solve(const RssrGeometry& g, double theta1, Branch branch) {
  return solve_trig(rssr_coefficients(g, theta1), branch);
}

inline double rssr_prismatic_solve(const RssrGeometry& g, double s_travel,
                                   Branch branch = Branch::elbow_plus) {
  return solve_trig(rssr_prismatic_coefficients(g, s_travel), branch);
}

/// Hinge positions B and C in the canonical frame.
inline Vec3 rssr_input_point(const RssrGeometry& g, double theta1) {
  return Vec3(g.h1 * std::cos(theta1), g.h1 * std::sin(theta1), g.s0);
}

inline Vec3 rssr_output_point(const RssrGeometry& g, double theta0) {
  const double ca = std::cos(g.alpha30), sa = std::sin(g.alpha30);
  const double c0 = std::cos(theta0), s0 = std::sin(theta0);
  return Vec3(-g.h0 + g.h3 * c0, -g.h3 * ca * s0 + g.s3 * sa, g.h3 * sa * s0 + g.s3 * ca);
}

inline double rssr_coupler_length(const RssrGeometry& g, double theta1, double theta0) {
  return (rssr_input_point(g, theta1) - rssr_output_point(g, theta0)).norm();
}

// ---------------------------------------------------------------------------
// Placing an RSSR chain in the vehicle frame
// ---------------------------------------------------------------------------

struct Line {
  Vec3 point;
  Vec3 direction;  ///< need not be normalized
};

/// Where a point sits on a link revolving about one of the chain axes.
struct LinkPoint {
  double radius = 0.0;  ///< distance from the axis
  double offset = 0.0;  ///< coordinate along the axis from the perpendicular foot
  double angle = 0.0;   ///< link angle in the chain convention
};

/// Canonical RSSR frame embedded in the vehicle frame.
struct RssrFrame {
  Vec3 origin;   ///< A', foot of the common perpendicular on the input axis
  Vec3 ex, ey, ez;
  Vec3 foot3;    ///< D', foot on the output axis
  Vec3 d3;       ///< output axis direction, (0, sin a, cos a) in frame coords
  Vec3 w3;       ///< output link direction at theta0 = pi/2
  double h0 = 0.0;
  double alpha = 0.0;

  LinkPoint input_params(const Vec3& p) const {
    const Vec3 r = p - origin;
    LinkPoint lp;
    lp.offset = r.dot(ez);
    const Vec3 radial = r - lp.offset * ez;
    lp.radius = radial.norm();
    lp.angle = std::atan2(radial.dot(ey), radial.dot(ex));
    return lp;
  }

  Vec3 input_point(const LinkPoint& lp) const {
    return origin + lp.radius * (std::cos(lp.angle) * ex + std::sin(lp.angle) * ey) +
           lp.offset * ez;
  }

  LinkPoint output_params(const Vec3& p) const {
    const Vec3 r = p - foot3;
    LinkPoint lp;
    lp.offset = r.dot(d3);
    const Vec3 radial = r - lp.offset * d3;
    lp.radius = radial.norm();
    lp.angle = std::atan2(radial.dot(w3), radial.dot(ex));
    return lp;
  }

  Vec3 output_point(double radius, double offset, double angle) const {
    return foot3 + offset * d3 + radius * (std::cos(angle) * ex + std::sin(angle) * w3);
  }
};

/// Builds the canonical frame for an input axis and an output axis.
inline RssrFrame make_rssr_frame(const Line& input_axis, const Line& output_axis) {
  const double tiny = 1e-12;
  Vec3 d1 = input_axis.direction;
  Vec3 d3 = output_axis.direction;
  if (d1.norm() < tiny || d3.norm() < tiny) throw ConfigError("RSSR axis direction is zero");
  d1.normalize();
  d3.normalize();

  const Vec3 w0 = input_axis.point - output_axis.point;
  const double b = d1.dot(d3);
  const double d = d1.dot(w0);
  const double e = d3.dot(w0);
  const double denom = 1.0 - b * b;

  RssrFrame f;
  if (denom > 1e-14) {
    const double t1 = (b * e - d) / denom;
    const double t3 = (e - b * d) / denom;
    f.origin = input_axis.point + t1 * d1;
    f.foot3 = output_axis.point + t3 * d3;
  } else {
    f.origin = input_axis.point;
    f.foot3 = output_axis.point + d3.dot(input_axis.point - output_axis.point) * d3;
  }
  const Vec3 perp = f.origin - f.foot3;
  f.h0 = perp.norm();
  f.ez = d1;
  if (f.h0 > 1e-12) {
    f.ex = perp / f.h0;
  } else {
    const Vec3 n = d1.cross(d3);
    if (n.norm() < 1e-12) throw ConfigError("RSSR axes coincide");
    f.ex = n.normalized();
    f.h0 = 0.0;
    f.foot3 = f.origin;
  }
  f.ey = f.ez.cross(f.ex);

  double sy = d3.dot(f.ey);
  double cz = d3.dot(f.ez);
  if (sy < 0.0 || (sy == 0.0 && cz < 0.0)) {
    d3 = -d3;
    sy = -sy;
    cz = -cz;
  }
  f.d3 = d3;
  f.alpha = std::atan2(sy, cz);
  if (f.alpha >= pi) f.alpha = 0.0;
  const double ca = std::cos(f.alpha), sa = std::sin(f.alpha);
  f.w3 = -ca * f.ey + sa * f.ez;
  return f;
}

// ---------------------------------------------------------------------------
// Double-wishbone hard points
// ---------------------------------------------------------------------------

/// The ten hard points, vehicle frame, meters.
struct HardPoints {
  Vec3 u1, u2;  ///< upper control arm, front/rear chassis pivots
  Vec3 l1, l2;  ///< lower control arm, front/rear chassis pivots
  Vec3 p1, p2;  ///< spring-damper lower (arm side) and upper (chassis) joints
  Vec3 t;       ///< inner tie-rod joint on the rack
  Vec3 s1, s2, s3;  ///< knuckle: upper ball joint, tie-rod joint, lower ball joint
};

struct TravelLimits {
  double rack_min = -0.03;
  double rack_max = 0.03;
  double damper_min = -0.055;  ///< rebound (negative compression)
  double damper_max = 0.055;
};

/// Solved description of one chain: the RSSR parameters at the design pose,
/// the branch that reproduces the design pose, and the frame it lives in.
struct ChainModel {
  RssrGeometry rssr;
  RssrFrame frame;
  Branch branch = Branch::elbow_plus;
  double design_angle = 0.0;
};

struct SuspensionGeometry {
  std::string name = "default";
  int version = 1;
  HardPoints nominal;
  Vec3 rack_axis = Vec3::UnitY();
  TravelLimits limits;
  Vec3 wheel_center = Vec3::Zero();   ///< knuckle-attached
  Vec3 contact_point = Vec3::Zero();  ///< knuckle-attached
  double tire_radius = 0.0;

  // Derived at construction.
  ChainModel lca, uca, steer;
  LinkPoint lca_s3;            ///< s3 on the lower arm, in the lca frame
  double damper_length = 0.0;  ///< |p1 - p2| at x_d = 0
  double tie_rod_length = 0.0;
  double kingpin_length = 0.0;
  double tie_rod_axial = 0.0;   ///< (s2 - s3) projected on the kingpin axis
  double tie_rod_radius = 0.0;  ///< distance of s2 from the kingpin axis
};

/// Hard-point positions at one (x_a, x_d) pose plus the knuckle's rigid motion
/// relative to the design pose (p_now = R * p_design + T for knuckle points).
struct HardPointState {
  double x_a = 0.0;
  double x_d = 0.0;
  HardPoints points;
  Rotation3 knuckle_rotation = Rotation3::Identity();
  Vec3 knuckle_translation = Vec3::Zero();
  Vec3 wheel_center = Vec3::Zero();
  Vec3 contact_point = Vec3::Zero();

  Vec3 knuckle_point(const Vec3& design) const {
    return knuckle_rotation * design + knuckle_translation;
  }
};

namespace detail {

inline Branch branch_matching(const TrigCoefficients& k, double design_angle) {
  double best_err = 0.0;
  std::optional<Branch> best;
  for (Branch b : {Branch::elbow_plus, Branch::elbow_minus}) {
    const double err = std::abs(wrap_angle(solve_trig(k, b) - design_angle));
    if (!best || err < best_err) {
      best = b;
      best_err = err;
    }
  }
  if (best_err > 1e-6) throw ConfigError("design pose does not close its RSSR chain");
  const double sep = std::abs(wrap_angle(solve_trig(k, Branch::elbow_plus) -
                                         solve_trig(k, Branch::elbow_minus)));
  if (sep < 1e-6) throw ConfigError("design pose sits on an RSSR singularity");
  return *best;
}

inline Eigen::Matrix3d triad(const Vec3& s1, const Vec3& s2, const Vec3& s3) {
  const Vec3 e1 = (s1 - s3).normalized();
  Vec3 v = s2 - s3;
  v -= v.dot(e1) * e1;
  const Vec3 e2 = v.normalized();
  Eigen::Matrix3d f;
  f.col(0) = e1;
  f.col(1) = e2;
  f.col(2) = e1.cross(e2);
  return f;
}

inline Line lca_axis(const HardPoints& hp) { return {hp.l1, hp.l2 - hp.l1}; }
inline Line uca_axis(const HardPoints& hp) { return {hp.u1, hp.u2 - hp.u1}; }

/// Input axis of the damper chain: through p2, perpendicular both to the
/// lower-arm axis and to the perpendicular dropped from p2 onto it, so that
/// p2 is the foot of the common perpendicular.
inline Line damper_input_axis(const HardPoints& hp) {
  const Line la = lca_axis(hp);
  const Vec3 d = la.direction.normalized();
  const Vec3 foot = la.point + d.dot(hp.p2 - la.point) * d;
  const Vec3 n = hp.p2 - foot;
  if (n.norm() < 1e-9) throw ConfigError("damper chassis joint p2 lies on the lower-arm axis");
  return {hp.p2, d.cross(n)};
}

inline RssrFrame steer_frame(const Vec3& t_design, const Vec3& rack_axis, const Vec3& s3,
                             const Vec3& s1) {
  return make_rssr_frame({t_design, rack_axis}, {s3, s1 - s3});
}

}  // namespace detail

/// Validates the hard points and derives the three chain models.
inline SuspensionGeometry make_suspension_geometry(const std::string& name, const HardPoints& hp,
                                                   const Vec3& rack_axis,
                                                   const TravelLimits& limits,
                                                   const Vec3& wheel_center,
                                                   const Vec3& contact_point) {
  auto finite = [](const Vec3& v) { return v.allFinite(); };
  for (const Vec3* v : {&hp.u1, &hp.u2, &hp.l1, &hp.l2, &hp.p1, &hp.p2, &hp.t, &hp.s1, &hp.s2,
                        &hp.s3, &rack_axis, &wheel_center, &contact_point})
    if (!finite(*v)) throw ConfigError("geometry contains non-finite coordinates");
  if ((hp.u1 - hp.u2).norm() <= 1e-9) throw ConfigError("u1 and u2 coincide");
  if ((hp.l1 - hp.l2).norm() <= 1e-9) throw ConfigError("l1 and l2 coincide");
  if (rack_axis.norm() <= 1e-12) throw ConfigError("rack axis is zero");
  if (!(limits.rack_min <= 0.0 && limits.rack_max >= 0.0 && limits.damper_min <= 0.0 &&
        limits.damper_max >= 0.0))
    throw ConfigError("travel limits must bracket the design pose");
  const double knuckle_area = (hp.s1 - hp.s3).cross(hp.s2 - hp.s3).norm();
  if (knuckle_area <= 1e-9) throw ConfigError("knuckle points s1, s2, s3 are collinear");

  SuspensionGeometry g;
  g.name = name;
  g.nominal = hp;
  g.rack_axis = rack_axis.normalized();
  g.limits = limits;
  g.wheel_center = wheel_center;
  g.contact_point = contact_point;
  g.tire_radius = (wheel_center - contact_point).norm();
  g.damper_length = (hp.p1 - hp.p2).norm();
  g.tie_rod_length = (hp.s2 - hp.t).norm();
  g.kingpin_length = (hp.s1 - hp.s3).norm();
  if (g.damper_length <= 1e-9) throw ConfigError("damper joints p1 and p2 coincide");
  if (g.tie_rod_length <= 1e-9) throw ConfigError("tie-rod joints t and s2 coincide");

  // Damper chain: fixed p2 (zero-length input link), coupler = damper.
  {
    ChainModel& c = g.lca;
    c.frame = make_rssr_frame(detail::damper_input_axis(hp), detail::lca_axis(hp));
    const LinkPoint p1 = c.frame.output_params(hp.p1);
    const LinkPoint in = c.frame.input_params(hp.p2);
    c.rssr = {c.frame.h0, 0.0, p1.radius, g.damper_length, in.offset, p1.offset, c.frame.alpha};
    validate(c.rssr, true);
    c.design_angle = p1.angle;
    c.branch = detail::branch_matching(rssr_prismatic_coefficients(c.rssr, 0.0), p1.angle);
    g.lca_s3 = c.frame.output_params(hp.s3);
    if (g.lca_s3.radius <= 1e-9) throw ConfigError("lower ball joint s3 lies on the lower-arm axis");
  }
  // Upper arm chain: s3 on the lower arm drives s1 on the upper arm.
  {
    ChainModel& c = g.uca;
    c.frame = make_rssr_frame(detail::lca_axis(hp), detail::uca_axis(hp));
    const LinkPoint in = c.frame.input_params(hp.s3);
    const LinkPoint out = c.frame.output_params(hp.s1);
    c.rssr = {c.frame.h0, in.radius, out.radius, g.kingpin_length, in.offset, out.offset,
              c.frame.alpha};
    validate(c.rssr);
    c.design_angle = out.angle;
    c.branch = detail::branch_matching(rssr_coefficients(c.rssr, in.angle), out.angle);
  }
  // Steering chain: rack slider drives s2 about the kingpin.
  {
    ChainModel& c = g.steer;
    c.frame = detail::steer_frame(hp.t, g.rack_axis, hp.s3, hp.s1);
    const LinkPoint in = c.frame.input_params(hp.t);
    const LinkPoint out = c.frame.output_params(hp.s2);
    c.rssr = {c.frame.h0, 0.0, out.radius, g.tie_rod_length, in.offset, out.offset,
              c.frame.alpha};
    validate(c.rssr, true);
    c.design_angle = out.angle;
    c.branch = detail::branch_matching(rssr_prismatic_coefficients(c.rssr, 0.0), out.angle);
    const Vec3 kp = (hp.s1 - hp.s3).normalized();
    g.tie_rod_axial = (hp.s2 - hp.s3).dot(kp);
    g.tie_rod_radius = ((hp.s2 - hp.s3) - g.tie_rod_axial * kp).norm();
  }
  return g;
}

/// Positions every hard point at rack travel x_a and damper compression x_d.
inline HardPointState hard_points(const SuspensionGeometry& g, double x_a, double x_d) {
  if (!std::isfinite(x_a) || !std::isfinite(x_d) || x_a < g.limits.rack_min ||
      x_a > g.limits.rack_max || x_d < g.limits.damper_min || x_d > g.limits.damper_max)
    throw TravelOutOfRange("pose (x_a=" + std::to_string(x_a) + ", x_d=" + std::to_string(x_d) +
                           ") outside travel limits");

  HardPointState st;
  st.x_a = x_a;
  st.x_d = x_d;
  st.points = g.nominal;
  st.wheel_center = g.wheel_center;
  st.contact_point = g.contact_point;
  if (x_a == 0.0 && x_d == 0.0) return st;

  HardPoints& p = st.points;
  try {
    // Lower arm from the damper length.
    RssrGeometry lg = g.lca.rssr;
    lg.l = g.damper_length - x_d;
    const double lca_angle = rssr_prismatic_solve(lg, 0.0, g.lca.branch);
    const RssrFrame& lf = g.lca.frame;
    const LinkPoint p1_design = lf.output_params(g.nominal.p1);
    p.p1 = lf.output_point(p1_design.radius, p1_design.offset, lca_angle);
    const double swing = lca_angle - g.lca.design_angle;
    p.s3 = lf.output_point(g.lca_s3.radius, g.lca_s3.offset, g.lca_s3.angle + swing);

    // Upper arm from the lower ball joint.
    const RssrFrame& uf = g.uca.frame;
    const double uca_in = uf.input_params(p.s3).angle;
    const double uca_angle = rssr_solve(g.uca.rssr, uca_in, g.uca.branch);
    p.s1 = uf.output_point(g.uca.rssr.h3, g.uca.rssr.s3, uca_angle);

    // Knuckle rotation about the kingpin from the rack.
    const RssrFrame sf = detail::steer_frame(g.nominal.t, g.rack_axis, p.s3, p.s1);
    const Vec3 kp = (p.s1 - p.s3).normalized();
    const Vec3 s2_center = p.s3 + g.tie_rod_axial * kp;
    RssrGeometry sg;
    sg.h0 = sf.h0;
    sg.h1 = 0.0;
    sg.h3 = g.tie_rod_radius;
    sg.l = g.tie_rod_length;
    sg.s0 = sf.input_params(g.nominal.t).offset;
    sg.s3 = (s2_center - sf.foot3).dot(sf.d3);
    sg.alpha30 = sf.alpha;
    const double steer_angle = rssr_prismatic_solve(sg, x_a * g.rack_axis.dot(sf.ez),
                                                    g.steer.branch);
    p.s2 = sf.output_point(sg.h3, sg.s3, steer_angle);
  } catch (const NoSolution& e) {
    throw KinematicLockup("pose (x_a=" + std::to_string(x_a) + ", x_d=" + std::to_string(x_d) +
                          "): " + e.what());
  }
  p.t = g.nominal.t + x_a * g.rack_axis;

  const Eigen::Matrix3d f0 = detail::triad(g.nominal.s1, g.nominal.s2, g.nominal.s3);
  const Eigen::Matrix3d f1 = detail::triad(p.s1, p.s2, p.s3);
  st.knuckle_rotation = f1 * f0.transpose();
  st.knuckle_translation = p.s3 - st.knuckle_rotation * g.nominal.s3;
  st.wheel_center = st.knuckle_point(g.wheel_center);
  st.contact_point = st.knuckle_point(g.contact_point);
  return st;
}

/// Largest violation of any length or rigidity constraint at a solved pose [m].
inline double constraint_residual(const SuspensionGeometry& g, const HardPointState& st) {
  const HardPoints& n = g.nominal;
  const HardPoints& p = st.points;
  auto dist = [](const Vec3& a, const Vec3& b) { return (a - b).norm(); };
  double r = 0.0;
  auto keep = [&](double now, double design) { r = std::max(r, std::abs(now - design)); };
  keep(dist(p.u1, p.s1), dist(n.u1, n.s1));
  keep(dist(p.u2, p.s1), dist(n.u2, n.s1));
  keep(dist(p.l1, p.s3), dist(n.l1, n.s3));
  keep(dist(p.l2, p.s3), dist(n.l2, n.s3));
  keep(dist(p.t, p.s2), dist(n.t, n.s2));
  keep(dist(p.s1, p.s3), dist(n.s1, n.s3));
  keep(dist(p.s1, p.s2), dist(n.s1, n.s2));
  keep(dist(p.s2, p.s3), dist(n.s2, n.s3));
  // p1 rides on the lower arm.
  keep(dist(p.p1, p.l1), dist(n.p1, n.l1));
  keep(dist(p.p1, p.l2), dist(n.p1, n.l2));
  keep(dist(p.p1, p.s3), dist(n.p1, n.s3));
  keep(dist(p.p1, p.p2), g.damper_length - st.x_d);
  // chassis-side points
  keep(dist(p.u1, n.u1), 0.0);
  keep(dist(p.u2, n.u2), 0.0);
  keep(dist(p.l1, n.l1), 0.0);
  keep(dist(p.l2, n.l2), 0.0);
  keep(dist(p.p2, n.p2), 0.0);
  keep(dist(p.t, n.t + st.x_a * g.rack_axis), 0.0);
  // knuckle-attached extras follow the same rigid motion
  keep(dist(st.contact_point, st.wheel_center), dist(g.contact_point, g.wheel_center));
  keep(dist(st.contact_point, p.s3), dist(g.contact_point, n.s3));
  return r;
}

}  // namespace dbpnet::kin
