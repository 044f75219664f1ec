#pragma once

// Quasi-static force and moment balance of the unsprung body (knuckle plus
// wheel) and the quarter-car force model used as the physics prior.
//
// Sign conventions: link magnitudes are positive in compression, i.e. the
// link pushes the knuckle along the chassis-to-knuckle direction. Gravity acts
// along -z. The balance solved is
//   sum F_links + F_tire + m g = m a_u
//   sum r x F_links + r_c x F_tire + M_align = I beta_u
// with moments taken about the current unsprung centre of gravity.

#include <Eigen/Dense>

#include <array>
#include <cmath>

#include "dbpnet/errors.hpp"
#include "dbpnet/kinematics.hpp"
#include "dbpnet/types.hpp"

namespace dbpnet::dyn {

using kin::Vec3;

inline constexpr double gravity = 9.81;

enum Link : int { p = 0, u1 = 1, u2 = 2, t = 3, l1 = 4, l2 = 5 };
inline constexpr int link_count = 6;

struct UnsprungBody {
  double m_u = 9.0;
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Identity();  ///< about CG, design pose
  Vec3 cg = Vec3::Zero();                                 ///< design pose
};

struct KinematicInputs {
  double x_a = 0.0;
  double x_d = 0.0;
  double xd_dot = 0.0;
  Vec3 a_u = Vec3::Zero();
  Vec3 beta_u = Vec3::Zero();
  double f_p = 0.0;
};

struct Slip {
  double c_x = 0.0;
  double c_y = 0.0;
  double aligning = 0.0;  ///< M_z per unit F_z, m
};

using LinkVectors = std::array<Vec3, link_count>;

struct LinkForceSolution {
  std::array<double, link_count> magnitude{};
  LinkVectors force;
  LinkVectors moment;
  double condition = 0.0;
};

struct TireForces {
  double f_x = 0.0, f_y = 0.0, f_z = 0.0;
  double m_x = 0.0, m_y = 0.0, m_z = 0.0;  ///< about the CG
  Vec3 contact_point = Vec3::Zero();
};

struct EquilibriumResult {
  LinkForceSolution links;
  TireForces tire;
};

/// Chassis-side point of each link, where the moment arm is taken.
inline LinkVectors link_anchors(const kin::HardPointState& hp) {
  const auto& q = hp.points;
  return {q.p2, q.u1, q.u2, q.t, q.l1, q.l2};
}

/// Unit vectors p2->p1, u1->s1, u2->s1, t->s2, l1->s3, l2->s3.
inline LinkVectors link_directions(const kin::HardPointState& hp) {
  const auto& q = hp.points;
  const std::array<std::pair<Vec3, Vec3>, link_count> ends{
      {{q.p2, q.p1}, {q.u1, q.s1}, {q.u2, q.s1}, {q.t, q.s2}, {q.l1, q.s3}, {q.l2, q.s3}}};
  static constexpr const char* names[] = {"p2-p1", "u1-s1", "u2-s1", "t-s2", "l1-s3", "l2-s3"};
  LinkVectors d;
  for (int i = 0; i < link_count; ++i) {
    const Vec3 v = ends[i].second - ends[i].first;
    const double n = v.norm();
    if (!(n > 1e-9)) throw DegenerateLink(std::string("link ") + names[i] + " has coincident ends");
    d[i] = v / n;
  }
  return d;
}

/// M_i = r_i x F_i, r_i from the CG to the link's chassis-side anchor.
inline LinkVectors link_moments(const kin::HardPointState& hp, const Vec3& cg,
                                const LinkVectors& forces) {
  const LinkVectors anchors = link_anchors(hp);
  LinkVectors m;
  for (int i = 0; i < link_count; ++i) m[i] = (anchors[i] - cg).cross(forces[i]);
  return m;
}

/// Unsprung CG and inertia carried to the current knuckle pose.
inline UnsprungBody posed_body(const kin::HardPointState& hp, const UnsprungBody& body) {
  UnsprungBody b = body;
  b.cg = hp.knuckle_point(body.cg);
  b.inertia = hp.knuckle_rotation * body.inertia * hp.knuckle_rotation.transpose();
  return b;
}

/// Assembles A x = rhs for x = [F_u1, F_u2, F_t, F_l1, F_l2, F_z].
struct EquilibriumSystem {
  Eigen::Matrix<double, 6, 6> a;
  Eigen::Matrix<double, 6, 1> rhs;
  LinkVectors dir;
  Vec3 tire_dir;
  UnsprungBody body;  ///< posed
};

inline EquilibriumSystem assemble_equilibrium(const kin::HardPointState& hp,
                                              const UnsprungBody& body,
                                              const KinematicInputs& kin_in, const Slip& slip,
                                              double g = gravity) {
  EquilibriumSystem s;
  s.dir = link_directions(hp);
  s.body = posed_body(hp, body);
  const LinkVectors anchors = link_anchors(hp);
  const Vec3 cg = s.body.cg;
  s.tire_dir = Vec3(slip.c_x, slip.c_y, 1.0);
  const Vec3 rc = hp.contact_point - cg;

  for (int j = 0; j < 5; ++j) {
    const int i = j + 1;
    s.a.block<3, 1>(0, j) = s.dir[i];
    s.a.block<3, 1>(3, j) = (anchors[i] - cg).cross(s.dir[i]);
  }
  s.a.block<3, 1>(0, 5) = s.tire_dir;
  s.a.block<3, 1>(3, 5) = rc.cross(s.tire_dir) + Vec3(0.0, 0.0, slip.aligning);

  const Vec3 fp = kin_in.f_p * s.dir[p];
  const Vec3 weight(0.0, 0.0, -s.body.m_u * g);
  s.rhs.head<3>() = s.body.m_u * kin_in.a_u - weight - fp;
  s.rhs.tail<3>() = s.body.inertia * kin_in.beta_u - (anchors[p] - cg).cross(fp);
  return s;
}

inline double condition_number(const Eigen::Matrix<double, 6, 6>& a) {
  Eigen::JacobiSVD<Eigen::Matrix<double, 6, 6>> svd(a);
  const auto& sv = svd.singularValues();
  return sv(5) > 0.0 ? sv(0) / sv(5) : std::numeric_limits<double>::infinity();
}

inline EquilibriumResult solve_equilibrium(const kin::HardPointState& hp, const UnsprungBody& body,
                                           const KinematicInputs& kin_in, const Slip& slip,
                                           double g = gravity) {
  const EquilibriumSystem s = assemble_equilibrium(hp, body, kin_in, slip, g);
  const double cond = condition_number(s.a);
  if (!(cond <= 1e12))
    throw SingularConfiguration("link direction matrix condition number " + std::to_string(cond));
  const Eigen::Matrix<double, 6, 1> x = s.a.fullPivLu().solve(s.rhs);

  EquilibriumResult r;
  r.links.condition = cond;
  r.links.magnitude[p] = kin_in.f_p;
  for (int j = 0; j < 5; ++j) r.links.magnitude[j + 1] = x(j);
  for (int i = 0; i < link_count; ++i) r.links.force[i] = r.links.magnitude[i] * s.dir[i];
  r.links.moment = link_moments(hp, s.body.cg, r.links.force);

  const double fz = x(5);
  const Vec3 ft = fz * s.tire_dir;
  const Vec3 mt = (hp.contact_point - s.body.cg).cross(ft) + Vec3(0.0, 0.0, slip.aligning * fz);
  r.tire = {ft.x(), ft.y(), ft.z(), mt.x(), mt.y(), mt.z(), hp.contact_point};
  return r;
}

/// Force and moment imbalance of a solution, in N and N*m.
struct BalanceResidual {
  double force = 0.0;
  double moment = 0.0;
};

inline BalanceResidual equilibrium_residual(const kin::HardPointState& hp,
                                            const UnsprungBody& body,
                                            const KinematicInputs& kin_in,
                                            const EquilibriumResult& r, double g = gravity) {
  const UnsprungBody b = posed_body(hp, body);
  Vec3 f = Vec3(r.tire.f_x, r.tire.f_y, r.tire.f_z) + Vec3(0.0, 0.0, -b.m_u * g) -
           b.m_u * kin_in.a_u;
  Vec3 m = Vec3(r.tire.m_x, r.tire.m_y, r.tire.m_z) - b.inertia * kin_in.beta_u;
  for (int i = 0; i < link_count; ++i) {
    f += r.links.force[i];
    m += r.links.moment[i];
  }
  return {f.norm(), m.norm()};
}

/// Vertical tire load from measured linkage state: kinematics then balance.
inline double wheel_load_oracle(const kin::SuspensionGeometry& geom, const UnsprungBody& body,
                                const KinematicInputs& kin_in, const Slip& slip,
                                double g = gravity) {
  const kin::HardPointState hp = kin::hard_points(geom, kin_in.x_a, kin_in.x_d);
  return solve_equilibrium(hp, body, kin_in, slip, g).tire.f_z;
}

// ---------------------------------------------------------------------------
// Quarter-car prior
// ---------------------------------------------------------------------------

/// Stiffness and damping are per unit damper compression (d_sus), so the
/// model reads the damper channels directly.
struct QuarterCarParams {
  double m_spr = 248.0;
  double m_unspr = 9.0;
  double k_f = 0.0, k_r = 0.0;  ///< N/m
  double c_f = 0.0, c_r = 0.0;  ///< N*s/m
  double f0_f = 0.0, f0_r = 0.0;  ///< static corner load, N

  void validate() const {
    if (!(m_spr > 0 && m_unspr > 0 && k_f > 0 && k_r > 0 && c_f > 0 && c_r > 0))
      throw ConfigError("quarter-car masses, stiffnesses and dampings must be > 0");
    if (!std::isfinite(f0_f) || !std::isfinite(f0_r))
      throw ConfigError("quarter-car static loads must be finite");
  }
  double k(Corner c) const { return is_front(c) ? k_f : k_r; }
  double c(Corner c) const { return is_front(c) ? c_f : c_r; }
  double f0(Corner c) const { return is_front(c) ? f0_f : f0_r; }
};

/// F0 + k d_sus + c d_sus_dot + m_u a_unspr for one corner.
inline double quarter_car_force(const SensorSample& s, const QuarterCarParams& q, Corner c) {
  const int i = idx(c);
  return q.f0(c) + q.k(c) * s.d_sus[i] + q.c(c) * s.d_sus_dot[i] + q.m_unspr * s.a_unspr[i];
}

inline double quarter_car_residual(const SensorSample& s, const WheelLoads& pred,
                                   const QuarterCarParams& q, Corner c) {
  return pred[idx(c)] - quarter_car_force(s, q, c);
}

}  // namespace dbpnet::dyn
