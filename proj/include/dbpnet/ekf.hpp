#pragma once

// Quarter-car Kalman baseline: one filter per corner over
// [z_s, z_s', z_u, z_u', z_r], all deviations from static equilibrium, with the
// road height z_r as a random walk. The measurement model is linear in the
// state so the extended filter's Jacobians are exact constants.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <string>
#include <vector>

#include "dbpnet/dynamics.hpp"
#include "dbpnet/errors.hpp"
#include "dbpnet/types.hpp"

namespace dbpnet::ekf {

using Mat5 = Eigen::Matrix<double, 5, 5>;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;
using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat45 = Eigen::Matrix<double, 4, 5>;

struct EkfConfig {
  double dt = 0.05;              ///< sample period, s
  double k_tire = 120000.0;      ///< N/m
  double motion_ratio = 1.0;     ///< damper compression per unit wheel travel
  // continuous white-noise densities
  double q_sprung = 4.0;         ///< sprung acceleration, (m/s^2)^2 s
  double q_unsprung = 400.0;     ///< unsprung acceleration
  double q_road = 0.01;          ///< road height rate, (m/s)^2 s
  // measurement standard deviations: a_spr, a_unspr, d_sus, d_sus_dot
  std::array<double, 4> r_std{0.5, 2.0, 0.0005, 0.01};
  std::array<double, 5> p0_std{0.01, 0.1, 0.01, 0.1, 0.01};

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("EKF sample period must be > 0");
    if (!(k_tire > 0.0 && motion_ratio > 0.0)) throw ConfigError("EKF tire rate and motion ratio must be > 0");
    if (!(q_sprung >= 0.0 && q_unsprung >= 0.0 && q_road >= 0.0))
      throw ConfigError("EKF process noise densities must be >= 0");
    for (double r : r_std)
      if (!(r >= 0.0)) throw ConfigError("EKF measurement deviations must be >= 0");
    for (double p : p0_std)
      if (!(p >= 0.0)) throw ConfigError("EKF initial deviations must be >= 0");
  }
};

/// Corner model in wheel coordinates.
struct CornerModel {
  double m_s = 0.0, m_u = 0.0, k_w = 0.0, c_w = 0.0, k_t = 0.0, mr = 1.0;
  double f0 = 0.0, k_qc = 0.0, c_qc = 0.0;
};

inline CornerModel corner_model(const dyn::QuarterCarParams& q, const EkfConfig& cfg, Corner c) {
  CornerModel m;
  m.m_u = q.m_unspr;
  m.f0 = q.f0(c);
  m.m_s = (m.f0 - q.m_unspr * dyn::gravity) / dyn::gravity;
  if (!(m.m_s > 0.0)) throw ConfigError("static corner load does not exceed the unsprung weight");
  m.mr = cfg.motion_ratio;
  m.k_qc = q.k(c);
  m.c_qc = q.c(c);
  m.k_w = m.k_qc * m.mr;
  m.c_w = m.c_qc * m.mr;
  m.k_t = cfg.k_tire;
  return m;
}

inline Mat5 system_matrix(const CornerModel& m) {
  Mat5 a = Mat5::Zero();
  a(0, 1) = 1.0;
  a(1, 0) = -m.k_w / m.m_s;
  a(1, 1) = -m.c_w / m.m_s;
  a(1, 2) = m.k_w / m.m_s;
  a(1, 3) = m.c_w / m.m_s;
  a(2, 3) = 1.0;
  a(3, 0) = m.k_w / m.m_u;
  a(3, 1) = m.c_w / m.m_u;
  a(3, 2) = -(m.k_w + m.k_t) / m.m_u;
  a(3, 3) = -m.c_w / m.m_u;
  a(3, 4) = m.k_t / m.m_u;
  return a;
}

/// Rows: a_spr, a_unspr, d_sus, d_sus_dot.
inline Mat45 measurement_matrix(const CornerModel& m) {
  const Mat5 a = system_matrix(m);
  Mat45 h = Mat45::Zero();
  h.row(0) = a.row(1);
  h.row(1) = a.row(3);
  h(2, 0) = -m.mr;
  h(2, 2) = m.mr;
  h(3, 1) = -m.mr;
  h(3, 3) = m.mr;
  return h;
}

/// F0 + k d + c d' + m_u a_u evaluated on a state.
inline double load_from_state(const CornerModel& m, const Vec5& x) {
  const Vec4 y = measurement_matrix(m) * x;
  return m.f0 + m.k_qc * y[2] + m.c_qc * y[3] + m.m_u * y[1];
}

struct Discrete {
  Mat5 phi;
  Mat5 q;
};

/// Van Loan discretization of x' = A x + w, E[w w^T] = Qc delta(t).
inline Discrete discretize(const Mat5& a, const Mat5& qc, double dt) {
  Eigen::Matrix<double, 10, 10> m = Eigen::Matrix<double, 10, 10>::Zero();
  m.topLeftCorner<5, 5>() = -a * dt;
  m.topRightCorner<5, 5>() = qc * dt;
  m.bottomRightCorner<5, 5>() = a.transpose() * dt;
  const Eigen::Matrix<double, 10, 10> e = m.exp();
  Discrete d;
  d.phi = e.bottomRightCorner<5, 5>().transpose();
  d.q = d.phi * e.topRightCorner<5, 5>();
  d.q = (0.5 * (d.q + d.q.transpose())).eval();
  return d;
}

inline double min_eigenvalue(const Mat5& p) {
  Eigen::SelfAdjointEigenSolver<Mat5> es(p, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Symmetric pseudo-inverse; R = 0 with a rank-deficient prior stays defined.
inline Mat4 pseudo_inverse(const Mat4& s) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(s);
  const Vec4 ev = es.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  Vec4 inv;
  for (int i = 0; i < 4; ++i) inv[i] = ev[i] > tol ? 1.0 / ev[i] : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

class CornerFilter {
 public:
  CornerFilter(const CornerModel& m, const EkfConfig& cfg) : m_(m) {
    Mat5 qc = Mat5::Zero();
    qc(1, 1) = cfg.q_sprung;
    qc(3, 3) = cfg.q_unsprung;
    qc(4, 4) = cfg.q_road;
    d_ = discretize(system_matrix(m), qc, cfg.dt);
    h_ = measurement_matrix(m);
    r_ = Mat4::Zero();
    for (int i = 0; i < 4; ++i) r_(i, i) = cfg.r_std[i] * cfg.r_std[i];
    x_.setZero();
    p_.setZero();
    for (int i = 0; i < 5; ++i) p_(i, i) = cfg.p0_std[i] * cfg.p0_std[i];
  }

  /// Predict then update with z = [a_spr, a_unspr, d_sus, d_sus_dot].
  /// The first call updates only.
  double step(const Vec4& z) {
    if (started_) {
      x_ = d_.phi * x_;
      p_ = d_.phi * p_ * d_.phi.transpose() + d_.q;
      p_ = (0.5 * (p_ + p_.transpose())).eval();
    }
    started_ = true;
    const Mat4 s = h_ * p_ * h_.transpose() + r_;
    const Eigen::Matrix<double, 5, 4> k = p_ * h_.transpose() * pseudo_inverse(0.5 * (s + s.transpose()));
    x_ += k * (z - h_ * x_);
    const Mat5 ikh = Mat5::Identity() - k * h_;
    p_ = ikh * p_ * ikh.transpose() + k * r_ * k.transpose();
    p_ = (0.5 * (p_ + p_.transpose())).eval();
    const double lam = min_eigenvalue(p_);
    if (!(lam >= -1e-10))
      throw CovarianceNotPSD("EKF covariance lost positive semidefiniteness (min eigenvalue " +
                             std::to_string(lam) + ") at step " + std::to_string(steps_));
    ++steps_;
    return load_from_state(m_, x_);
  }

  const Vec5& state() const { return x_; }
  const Mat5& covariance() const { return p_; }

 private:
  CornerModel m_;
  Discrete d_;
  Mat45 h_;
  Mat4 r_;
  Vec5 x_;
  Mat5 p_;
  bool started_ = false;
  long steps_ = 0;
};

/// Four decoupled corner filters over a sensor series.
inline std::vector<WheelLoads> ekf_estimate(const std::vector<SensorSample>& in,
                                           const dyn::QuarterCarParams& q, const EkfConfig& cfg) {
  cfg.validate();
  q.validate();
  std::vector<CornerFilter> filters;
  for (Corner c : all_corners) filters.emplace_back(corner_model(q, cfg, c), cfg);
  std::vector<WheelLoads> out(in.size());
  for (std::size_t t = 0; t < in.size(); ++t)
    for (int c = 0; c < 4; ++c) {
      const Vec4 z(in[t].a_spr[c], in[t].a_unspr[c], in[t].d_sus[c], in[t].d_sus_dot[c]);
      out[t][c] = filters[static_cast<std::size_t>(c)].step(z);
    }
  return out;
}

}  // namespace dbpnet::ekf
