#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "viewssl/error.hpp"

/// Plane geometry in the patient reference coordinate system (RCS).
///
/// All lengths are millimetres. Pixel coordinates follow the DICOM
/// convention: `col` indexes along `row_dir`, `row` indexes along `col_dir`,
/// and pixel (0, 0) is the centre of the upper-left pixel (the IPP).
namespace viewssl::geometry {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  friend constexpr bool operator==(Vec3, Vec3) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return a / norm(a); }
inline bool is_finite(Vec3 a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// An oriented, positioned pixel grid in patient space (IPP + IOP + spacing).
struct ImagePlane {
  Vec3 origin;                ///< IPP: centre of the first transmitted pixel.
  Vec3 row_dir{1, 0, 0};      ///< direction of increasing column index
  Vec3 col_dir{0, 1, 0};      ///< direction of increasing row index
  double col_spacing = 1.0;   ///< mm between adjacent columns
  double row_spacing = 1.0;   ///< mm between adjacent rows
  int cols = 1;
  int rows = 1;

  friend bool operator==(const ImagePlane&, const ImagePlane&) = default;
};

struct Line3D {
  Vec3 point;
  Vec3 direction;
};

/// Line a*x + b*y + c = 0 in a plane's pixel grid, kept in canonical form:
/// a^2 + b^2 = 1 and a > 0 (or a == 0 and b > 0).
struct LineABC {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;

  /// Normalises arbitrary coefficients. Throws GeometryError when a and b
  /// are both zero.
  static LineABC canonical(double a, double b, double c);

  double signed_distance(double x, double y) const { return a * x + b * y + c; }

  friend bool operator==(const LineABC&, const LineABC&) = default;
};

struct SliceStack {
  std::vector<ImagePlane> slices;
  Vec3 normal;
  std::vector<double> positions;  ///< signed distance of each slice along `normal`
};

enum class LocationMapping { Linear, Sine };

std::string to_string(LocationMapping m);
LocationMapping parse_location_mapping(const std::string& s);

class GeometryError : public Error {
 public:
  enum class Kind { InvalidPlane, ParallelPlanes, NonParallelStack, DuplicatePosition, DegenerateLine };
  GeometryError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr double kUnitTolerance = 1e-6;
inline constexpr double kParallelTolerance = 1e-6;
inline constexpr double kStackAngleTolerance = 1e-3;
inline constexpr double kDuplicatePositionTolerance = 1e-6;

/// Throws GeometryError::InvalidPlane if the plane violates its invariants.
void validate(const ImagePlane& plane);
bool is_valid(const ImagePlane& plane);

Vec3 pixel_to_patient(const ImagePlane& plane, double col, double row);

/// Unit normal row_dir x col_dir.
Vec3 plane_normal(const ImagePlane& plane);

/// Signed distance of `p` from the infinite plane through `plane`.
double distance_to_plane(const ImagePlane& plane, Vec3 p);

/// Intersection of the two infinite planes. The returned point is the one
/// closest to `a.origin`; direction is normalize(n_a x n_b).
Line3D intersect_planes(const ImagePlane& a, const ImagePlane& b);

/// Intersection of `other` with `target`, expressed in `target`'s pixel grid.
LineABC intersection_line_in_pixels(const ImagePlane& target, const ImagePlane& other);

/// Sorts parallel planes along the normal of the first input plane.
SliceStack build_stack(std::vector<ImagePlane> planes);

/// Same slices listed from the other end (normal and positions negated).
SliceStack reversed(const SliceStack& stack);

std::vector<double> relative_locations(const SliceStack& stack, LocationMapping mapping);

/// Maps the raw distance ratio r in [0, 1] to a label.
double map_location(double ratio, LocationMapping mapping);

}  // namespace viewssl::geometry
