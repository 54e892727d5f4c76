#ifndef NVMAG_CRYSTAL_HPP
#define NVMAG_CRYSTAL_HPP

#include <array>

#include <Eigen/Dense>

namespace nvmag {

// Cartesian vector in the cubic crystal frame (x, y, z along <100>).
// Components carry whatever unit the caller uses; the pipeline works in mT.
using Vec3 = Eigen::Vector3d;

// Field in spherical form. theta is the latitude measured from the yz-plane
// (so theta = +90 points along +x), phi is the longitude of the yz-plane
// projection measured from +y towards +z. Angles are in degrees.
struct SphericalField {
  double b_m = 0.0;
  double theta_deg = 0.0;
  double phi_deg = 0.0;
  // Set when the input vector was zero and the angles are a convention.
  bool degenerate = false;
};

constexpr double kPi = 3.14159265358979323846;
constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

// Wraps an angle into (-180, 180].
double wrap_degrees(double deg);

Vec3 spherical_to_cartesian(const SphericalField& s);
SphericalField cartesian_to_spherical(const Vec3& v);

// The four NV symmetry axes, indexed 0..3 for labels 1..4.
struct NVAxisSet {
  std::array<Vec3, 4> axes;
  const Vec3& operator[](std::size_t i) const { return axes[i]; }
  static constexpr std::size_t size() { return 4; }
};

// (1,1,1), (1,-1,-1), (-1,1,-1), (-1,-1,1), normalized.
const NVAxisSet& nv_axes();

struct AxisComponents {
  double b_parallel = 0.0;  // signed, along the axis
  double b_perp = 0.0;      // >= 0
};

// Splits b into its components along and perpendicular to a unit axis.
AxisComponents project_field(const Vec3& axis, const Vec3& b);

// Rotation from Z-Y-X Euler angles (degrees): R = Rz(a) * Ry(b) * Rx(c).
Eigen::Matrix3d rotation_zyx(double a_deg, double b_deg, double c_deg);

}  // namespace nvmag

#endif  // NVMAG_CRYSTAL_HPP
