#pragma once

// Sensor sample and wheel-load records shared by the plant, the estimators
// and the file formats. Corner order everywhere is fl, fr, rl, rr.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace dbpnet {

enum class Corner : int { fl = 0, fr = 1, rl = 2, rr = 3 };

inline constexpr std::array<Corner, 4> all_corners{Corner::fl, Corner::fr, Corner::rl, Corner::rr};
inline constexpr std::array<const char*, 4> corner_names{"fl", "fr", "rl", "rr"};

inline constexpr bool is_front(Corner c) { return c == Corner::fl || c == Corner::fr; }
inline constexpr int idx(Corner c) { return static_cast<int>(c); }

using Quad = std::array<double, 4>;

/// One synchronized sensor frame.
struct SensorSample {
  double t = 0.0;      ///< s
  double delta = 0.0;  ///< steering wheel angle, rad
  Quad a_spr{};        ///< sprung vertical acceleration above each corner, m/s^2
  Quad a_unspr{};      ///< unsprung vertical acceleration, m/s^2
  Quad d_sus{};        ///< damper compression, m
  Quad d_sus_dot{};    ///< damper compression rate, m/s
  Quad f_p{};          ///< pushrod (damper) axial force, N

  /// Network input vector: every channel except time.
  static constexpr std::size_t input_dim = 1 + 5 * 4;

  std::array<double, input_dim> features() const {
    std::array<double, input_dim> x{};
    x[0] = delta;
    for (int i = 0; i < 4; ++i) {
      x[1 + i] = a_spr[i];
      x[5 + i] = a_unspr[i];
      x[9 + i] = d_sus[i];
      x[13 + i] = d_sus_dot[i];
      x[17 + i] = f_p[i];
    }
    return x;
  }
};

/// Vertical tire loads, N.
using WheelLoads = Quad;

/// Column names of the dataset CSV, in file order.
inline std::vector<std::string> dataset_columns() {
  std::vector<std::string> c{"t", "delta"};
  for (const char* group : {"a_spr", "a_unspr", "d_sus", "d_sus_dot", "F_p"})
    for (const char* n : corner_names) c.push_back(std::string(group) + "_" + n);
  for (const char* n : corner_names) c.push_back(std::string("F_") + n);
  return c;
}

}  // namespace dbpnet
