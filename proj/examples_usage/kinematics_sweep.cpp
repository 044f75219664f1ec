// Sweeps damper compression at straight-ahead steering and prints the wheel
// centre, the contact point and the linkage residual.
//
//   kinematics_sweep [geometry.json]

#include <cmath>
#include <cstdio>

#include "dbpnet/geometry_io.hpp"
#include "dbpnet/kinematics.hpp"

using namespace dbpnet;

int main(int argc, char** argv) {
  const GeometryFile geo = argc > 1 ? load_geometry(argv[1]) : default_geometry();
  const auto& g = geo.geometry;
  std::printf("%10s %10s %10s %10s %12s\n", "x_d [m]", "wc_z [m]", "cp_y [m]", "cp_z [m]", "residual");
  for (int i = 0; i <= 10; ++i) {
    const double xd = std::lerp(g.limits.damper_min, g.limits.damper_max, i / 10.0);
    const auto st = kin::hard_points(g, 0.0, xd);
    std::printf("%10.4f %10.4f %10.4f %10.4f %12.3e\n", xd, st.wheel_center.z(), st.contact_point.y(),
                st.contact_point.z(), kin::constraint_residual(g, st));
  }
}
