#include "nvmag/crystal.hpp"

#include <cmath>
#include <limits>

namespace nvmag {

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w <= -180.0) w += 360.0;
  if (w > 180.0) w -= 360.0;
  return w;
}

Vec3 spherical_to_cartesian(const SphericalField& s) {
  const double th = deg2rad(s.theta_deg);
  const double ph = deg2rad(s.phi_deg);
  const double c = std::cos(th);
  return {s.b_m * std::sin(th), s.b_m * c * std::cos(ph), s.b_m * c * std::sin(ph)};
}

SphericalField cartesian_to_spherical(const Vec3& v) {
  SphericalField s;
  s.b_m = v.norm();
  if (s.b_m == 0.0) {
    s.degenerate = true;
    return s;
  }
  const double rho = std::hypot(v.y(), v.z());
  s.theta_deg = rad2deg(std::atan2(v.x(), rho));
  // On the poles the longitude is undefined; atan2(0, 0) gives 0 there.
  s.phi_deg = wrap_degrees(rad2deg(std::atan2(v.z(), v.y())));
  return s;
}

const NVAxisSet& nv_axes() {
  static const NVAxisSet set = [] {
    const double k = 1.0 / std::sqrt(3.0);
    NVAxisSet a;
    a.axes[0] = Vec3(1, 1, 1) * k;
    a.axes[1] = Vec3(1, -1, -1) * k;
    a.axes[2] = Vec3(-1, 1, -1) * k;
    a.axes[3] = Vec3(-1, -1, 1) * k;
    return a;
  }();
  return set;
}

AxisComponents project_field(const Vec3& axis, const Vec3& b) {
  AxisComponents c;
  c.b_parallel = b.dot(axis);
  c.b_perp = (b - c.b_parallel * axis).norm();
  // Rounding leaves ~1e-16 |b| of transverse field on an exactly aligned axis.
  if (c.b_perp <= 64.0 * std::numeric_limits<double>::epsilon() * b.norm()) c.b_perp = 0.0;
  return c;
}

Eigen::Matrix3d rotation_zyx(double a_deg, double b_deg, double c_deg) {
  using Eigen::AngleAxisd;
  return (AngleAxisd(deg2rad(a_deg), Vec3::UnitZ()) *
          AngleAxisd(deg2rad(b_deg), Vec3::UnitY()) *
          AngleAxisd(deg2rad(c_deg), Vec3::UnitX()))
      .toRotationMatrix();
}

}  // namespace nvmag
