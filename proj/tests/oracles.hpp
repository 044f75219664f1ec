#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls into the code under test beyond the
// plain data types.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "dbpnet/dynamics.hpp"
#include "dbpnet/ekf.hpp"
#include "dbpnet/kinematics.hpp"
#include "dbpnet/types.hpp"

namespace oracle {

using dbpnet::kin::RssrGeometry;
using dbpnet::kin::Vec3;

inline Eigen::Matrix3d rz(double t) {
  Eigen::Matrix3d m;
  m << std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0, 0, 0, 1;
  return m;
}

inline Eigen::Matrix3d rx(double a) {
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}

/// Closure residual written from the joint coordinates: |B - C|^2 - l^2,
/// scaled the same way as the trigonometric form.
inline double closure(const RssrGeometry& g, double theta1, double theta0) {
  const Vec3 b(g.h1 * std::cos(theta1), g.h1 * std::sin(theta1), g.s0);
  const double ca = std::cos(g.alpha30), sa = std::sin(g.alpha30);
  const Vec3 c(-g.h0 + g.h3 * std::cos(theta0), -g.h3 * ca * std::sin(theta0) + g.s3 * sa,
               g.h3 * sa * std::sin(theta0) + g.s3 * ca);
  return (b - c).squaredNorm() - g.l * g.l;
}

/// Simple roots of theta0 -> closure(theta1, theta0) on [-pi, pi): a uniform
/// scan of n points (angles advanced by a rotation recurrence) with every sign
/// change refined by bisection.
inline std::vector<double> scan_roots(const RssrGeometry& g, double theta1, int n = 1000000) {
  const double pi = std::numbers::pi;
  const Vec3 b(g.h1 * std::cos(theta1), g.h1 * std::sin(theta1), g.s0);
  const double ca = std::cos(g.alpha30), sa = std::sin(g.alpha30);
  // |B - C|^2 = p + q cos + r sin
  const Vec3 c0(-g.h0, g.s3 * sa, g.s3 * ca);
  const Vec3 ec(g.h3, 0.0, 0.0);
  const Vec3 es(0.0, -g.h3 * ca, g.h3 * sa);
  const Vec3 d = b - c0;
  const double p = d.squaredNorm() + g.h3 * g.h3 - g.l * g.l;
  const double q = -2.0 * d.dot(ec);
  const double r = -2.0 * d.dot(es);
  auto f = [&](double t) { return p + q * std::cos(t) + r * std::sin(t); };

  const double step = 2.0 * pi / n;
  const double cs = std::cos(step), ss = std::sin(step);
  double c = std::cos(-pi), s = std::sin(-pi);
  double prev = p + q * c + r * s;
  std::vector<double> roots;
  auto bisect = [&](double lo, double hi) {
    double flo = f(lo);
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
      const double mid = 0.5 * (lo + hi);
      const double fm = f(mid);
      if ((fm < 0) == (flo < 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };
  for (int i = 1; i <= n; ++i) {
    const double cn = c * cs - s * ss;
    const double sn = s * cs + c * ss;
    c = cn;
    s = sn;
    if (i % 4096 == 0) {  // keep the recurrence on the unit circle
      const double t = -pi + i * step;
      c = std::cos(t);
      s = std::sin(t);
    }
    const double cur = p + q * c + r * s;
    const double t_prev = -pi + (i - 1) * step;
    if ((prev < 0) != (cur < 0) || cur == 0.0) roots.push_back(bisect(t_prev, t_prev + step));
    prev = cur;
  }
  return roots;
}

inline double angle_distance(double a, double b) {
  return std::abs(std::remainder(a - b, 2.0 * std::numbers::pi));
}

/// Random geometry that closes at the returned theta1 by construction: pick
/// theta0 and derive l from the joint positions.
struct RandomRssr {
  RssrGeometry g;
  double theta1;
};

inline RandomRssr random_feasible(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> len(0.2, 2.0), off(-1.0, 1.0), ang(-3.1, 3.1),
      skew(0.05, 3.09);
  for (;;) {
    RandomRssr out;
    RssrGeometry& g = out.g;
    g.h0 = len(rng);
    g.h1 = len(rng);
    g.h3 = len(rng);
    g.s0 = off(rng);
    g.s3 = off(rng);
    g.alpha30 = skew(rng);
    out.theta1 = ang(rng);
    const double theta0 = ang(rng);
    g.l = std::sqrt(closure({g.h0, g.h1, g.h3, 0.0, g.s0, g.s3, g.alpha30}, out.theta1, theta0));
    if (g.l > 1e-3) return out;
  }
}

/// Two-mass corner, wheel coordinates, integrated independently of the filter.
struct CornerSim {
  double ms, mu, k, c, kt, f0;
  double zr(double t) const {
    const double w = 2.0 * std::numbers::pi;
    return 0.01 * std::sin(w * 1.3 * t) + 0.006 * std::sin(w * 0.4 * t + 1.0);
  }
  std::array<double, 4> rate(const std::array<double, 4>& s, double t) const {
    const double fs = k * (s[2] - s[0]) + c * (s[3] - s[1]);
    return {s[1], fs / ms, s[3], (-fs + kt * (zr(t) - s[2])) / mu};
  }
};

struct CornerRun {
  std::vector<dbpnet::SensorSample> in;
  std::vector<double> load;
};

inline CornerRun run_corner(const CornerSim& p, double dt_out, int n_out) {
  CornerRun r;
  std::array<double, 4> s{0, 0, 0, 0};
  const int sub = 200;
  const double h = dt_out / sub;
  auto add = [&](const std::array<double, 4>& y, double t) {
    const auto d = p.rate(y, t);
    dbpnet::SensorSample o;
    o.t = t;
    for (int c = 0; c < 4; ++c) {
      o.a_spr[c] = d[1];
      o.a_unspr[c] = d[3];
      o.d_sus[c] = y[2] - y[0];
      o.d_sus_dot[c] = y[3] - y[1];
    }
    r.in.push_back(o);
    r.load.push_back(p.f0 + p.kt * (p.zr(t) - y[2]));
  };
  add(s, 0.0);
  for (int k = 1; k < n_out; ++k) {
    for (int j = 0; j < sub; ++j) {
      const double t = (k - 1) * dt_out + j * h;
      auto axpy = [](const std::array<double, 4>& a, double w, const std::array<double, 4>& b) {
        return std::array<double, 4>{a[0] + w * b[0], a[1] + w * b[1], a[2] + w * b[2], a[3] + w * b[3]};
      };
      const auto k1 = p.rate(s, t);
      const auto k2 = p.rate(axpy(s, h / 2, k1), t + h / 2);
      const auto k3 = p.rate(axpy(s, h / 2, k2), t + h / 2);
      const auto k4 = p.rate(axpy(s, h, k3), t + h);
      for (int i = 0; i < 4; ++i) s[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    add(s, k * dt_out);
  }
  return r;
}

inline CornerSim sim() {
  const double f0 = 2000.0, mu = 20.0;
  return {f0 / dbpnet::dyn::gravity - mu, mu, 30000.0, 2000.0, 200000.0, f0};
}

inline dbpnet::dyn::QuarterCarParams sim_qc() {
  const CornerSim p = sim();
  dbpnet::dyn::QuarterCarParams q;
  q.m_spr = 4 * p.ms;
  q.m_unspr = p.mu;
  q.k_f = q.k_r = p.k;
  q.c_f = q.c_r = p.c;
  q.f0_f = q.f0_r = p.f0;
  return q;
}

inline dbpnet::ekf::EkfConfig sim_ekf() {
  dbpnet::ekf::EkfConfig c;
  c.dt = 0.01;
  c.k_tire = sim().kt;
  return c;
}


}  // namespace oracle
