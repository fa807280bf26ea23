#include "viewssl/geometry.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>
#include <sstream>

namespace viewssl::geometry {

std::string to_string(LocationMapping m) { return m == LocationMapping::Linear ? "linear" : "sine"; }

LocationMapping parse_location_mapping(const std::string& s) {
  if (s == "linear") return LocationMapping::Linear;
  if (s == "sine") return LocationMapping::Sine;
  throw std::invalid_argument("unknown location mapping '" + s + "' (expected linear|sine)");
}

LineABC LineABC::canonical(double a, double b, double c) {
  const double n = std::hypot(a, b);
  if (!(n > 0.0) || !std::isfinite(n) || !std::isfinite(c)) {
    throw GeometryError(GeometryError::Kind::DegenerateLine, "line has no direction (a = b = 0)");
  }
  a /= n;
  b /= n;
  c /= n;
  if (a < 0.0 || (a == 0.0 && b < 0.0)) {
    a = -a;
    b = -b;
    c = -c;
  }
  // keep -0.0 out of canonical coefficients so equality is exact
  return {a + 0.0, b + 0.0, c + 0.0};
}

bool is_valid(const ImagePlane& p) {
  if (!is_finite(p.origin) || !is_finite(p.row_dir) || !is_finite(p.col_dir)) return false;
  if (std::abs(norm(p.row_dir) - 1.0) > kUnitTolerance) return false;
  if (std::abs(norm(p.col_dir) - 1.0) > kUnitTolerance) return false;
  if (std::abs(dot(p.row_dir, p.col_dir)) > kUnitTolerance) return false;
  if (!(p.col_spacing > 0.0) || !(p.row_spacing > 0.0)) return false;
  if (!std::isfinite(p.col_spacing) || !std::isfinite(p.row_spacing)) return false;
  return p.cols > 0 && p.rows > 0;
}

void validate(const ImagePlane& p) {
  if (is_valid(p)) return;
  std::ostringstream os;
  os.precision(17);
  os << "invalid image plane: |row_dir|=" << norm(p.row_dir) << " |col_dir|=" << norm(p.col_dir)
     << " row.col=" << dot(p.row_dir, p.col_dir) << " spacing=(" << p.col_spacing << ", "
     << p.row_spacing << ") size=" << p.cols << "x" << p.rows;
  throw GeometryError(GeometryError::Kind::InvalidPlane, os.str());
}

Vec3 pixel_to_patient(const ImagePlane& p, double col, double row) {
  return p.origin + (col * p.col_spacing) * p.row_dir + (row * p.row_spacing) * p.col_dir;
}

Vec3 plane_normal(const ImagePlane& p) {
  const Vec3 n = cross(p.row_dir, p.col_dir);
  const double len = norm(n);
  if (!(len > 1.0 - kUnitTolerance * 10.0) || !std::isfinite(len)) {
    throw GeometryError(GeometryError::Kind::InvalidPlane,
                        "row and column directions are not orthonormal (|row x col| = " +
                            std::to_string(len) + ")");
  }
  return n / len;
}

double distance_to_plane(const ImagePlane& plane, Vec3 p) {
  return dot(plane_normal(plane), p - plane.origin);
}

Line3D intersect_planes(const ImagePlane& a, const ImagePlane& b) {
  const Vec3 na = plane_normal(a);
  const Vec3 nb = plane_normal(b);
  const Vec3 d = cross(na, nb);
  const double d2 = dot(d, d);
  if (std::sqrt(d2) < kParallelTolerance) {
    throw GeometryError(GeometryError::Kind::ParallelPlanes, "planes are parallel; no intersection line");
  }
  // Closest point to a.origin: q = h (nb - (na.nb) na) / |d|^2 with h = nb.(ob - oa).
  const double h = dot(nb, b.origin - a.origin);
  const double c = dot(na, nb);
  const Vec3 q = (h / d2) * (nb - c * na);
  return {a.origin + q, d / std::sqrt(d2)};
}

LineABC intersection_line_in_pixels(const ImagePlane& target, const ImagePlane& other) {
  const Vec3 nt = plane_normal(target);
  const Vec3 no = plane_normal(other);
  if (norm(cross(nt, no)) < kParallelTolerance) {
    throw GeometryError(GeometryError::Kind::ParallelPlanes, "planes are parallel; no intersection line");
  }
  // no . (pixel_to_patient(x, y) - o_other) = 0, expanded in x and y.
  const double a = dot(no, target.row_dir) * target.col_spacing;
  const double b = dot(no, target.col_dir) * target.row_spacing;
  const double c = dot(no, target.origin - other.origin);
  return LineABC::canonical(a, b, c);
}

SliceStack build_stack(std::vector<ImagePlane> planes) {
  if (planes.size() < 2) {
    throw GeometryError(GeometryError::Kind::NonParallelStack, "a stack needs at least two slices");
  }
  for (const auto& p : planes) validate(p);
  const Vec3 normal = plane_normal(planes.front());
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const Vec3 ni = plane_normal(planes[i]);
    // angle between the planes (normals may point either way)
    const double angle = std::atan2(norm(cross(normal, ni)), std::abs(dot(normal, ni)));
    if (angle > kStackAngleTolerance) {
      throw GeometryError(GeometryError::Kind::NonParallelStack,
                          "slice " + std::to_string(i) + " deviates " + std::to_string(angle) +
                              " rad from the stack normal");
    }
  }
  std::vector<double> proj(planes.size());
  for (std::size_t i = 0; i < planes.size(); ++i) proj[i] = dot(normal, planes[i].origin);
  std::vector<std::size_t> order(planes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return proj[l] < proj[r]; });

  SliceStack stack;
  stack.normal = normal;
  for (auto i : order) {
    stack.slices.push_back(planes[i]);
    stack.positions.push_back(proj[i]);
  }
  for (std::size_t i = 1; i < stack.positions.size(); ++i) {
    if (stack.positions[i] - stack.positions[i - 1] < kDuplicatePositionTolerance) {
      throw GeometryError(GeometryError::Kind::DuplicatePosition,
                          "two slices share position " + std::to_string(stack.positions[i]) + " mm");
    }
  }
  return stack;
}

SliceStack reversed(const SliceStack& stack) {
  SliceStack out;
  out.normal = -stack.normal;
  out.slices.assign(stack.slices.rbegin(), stack.slices.rend());
  for (auto it = stack.positions.rbegin(); it != stack.positions.rend(); ++it) out.positions.push_back(-*it);
  return out;
}

double map_location(double ratio, LocationMapping mapping) {
  switch (mapping) {
    case LocationMapping::Linear:
      return ratio;
    case LocationMapping::Sine:
      return std::sin(std::numbers::pi * ratio);
  }
  return ratio;
}

std::vector<double> relative_locations(const SliceStack& stack, LocationMapping mapping) {
  const std::size_t n = stack.positions.size();
  if (n < 2 || stack.slices.size() != n) {
    throw GeometryError(GeometryError::Kind::NonParallelStack, "relative locations need a stack of >= 2 slices");
  }
  const double span = stack.positions.back() - stack.positions.front();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = (stack.positions[i] - stack.positions.front()) / span;
    out[i] = map_location(ratio, mapping);
  }
  // endpoints are exact by definition
  out.front() = map_location(0.0, mapping);
  out.back() = mapping == LocationMapping::Linear ? 1.0 : 0.0;
  return out;
}

}  // namespace viewssl::geometry
