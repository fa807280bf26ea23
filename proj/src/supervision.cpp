#include "viewssl/supervision.hpp"

#include <cmath>
#include <stdexcept>

namespace viewssl::supervision {

GaussianSigma::GaussianSigma(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive and finite");
}

PixelTransform PixelTransform::after(const PixelTransform& first) const {
  return {scale_x * first.scale_x, scale_y * first.scale_y, scale_x * first.offset_x + offset_x,
          scale_y * first.offset_y + offset_y};
}

Affine2D Affine2D::from(const PixelTransform& t) { return {t.scale_x, 0.0, 0.0, t.scale_y, t.offset_x, t.offset_y}; }

Affine2D Affine2D::rotation(double radians, double cx, double cy) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  Affine2D r{c, -s, s, c, 0.0, 0.0};
  r.tx = cx - (c * cx - s * cy);
  r.ty = cy - (s * cx + c * cy);
  return r;
}

Affine2D Affine2D::horizontal_flip(int width) { return {-1.0, 0.0, 0.0, 1.0, static_cast<double>(width - 1), 0.0}; }

Affine2D Affine2D::after(const Affine2D& f) const {
  Affine2D r;
  r.m00 = m00 * f.m00 + m01 * f.m10;
  r.m01 = m00 * f.m01 + m01 * f.m11;
  r.m10 = m10 * f.m00 + m11 * f.m10;
  r.m11 = m10 * f.m01 + m11 * f.m11;
  r.tx = m00 * f.tx + m01 * f.ty + tx;
  r.ty = m10 * f.tx + m11 * f.ty + ty;
  return r;
}

Affine2D Affine2D::inverse() const {
  const double det = m00 * m11 - m01 * m10;
  if (det == 0.0 || !std::isfinite(det)) throw std::invalid_argument("affine transform is singular");
  Affine2D r{m11 / det, -m01 / det, -m10 / det, m00 / det, 0.0, 0.0};
  r.tx = -(r.m00 * tx + r.m01 * ty);
  r.ty = -(r.m10 * tx + r.m11 * ty);
  return r;
}

void fill_line_heatmap(const LineABC& line, int width, int height, GaussianSigma sigma, std::span<double> out,
                       const HeatmapOptions& options) {
  const double s = sigma.value();
  const double denom = 2.0 * s * s * (line.a * line.a + line.b * line.b);
  const double cutoff = options.truncate_sigmas ? *options.truncate_sigmas * s : 0.0;
  const double norm_ab = std::hypot(line.a, line.b);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double d = line.a * x + line.b * y + line.c;
      double v = std::exp(-(d * d) / denom);
      if (options.truncate_sigmas && std::abs(d) / norm_ab > cutoff) v = 0.0;
      out[static_cast<std::size_t>(y) * width + x] = v;
    }
  }
}

Heatmap line_heatmap(const LineABC& line, int width, int height, GaussianSigma sigma, const HeatmapOptions& options) {
  return lines_heatmap(std::span<const LineABC>(&line, 1), width, height, sigma, options);
}

Heatmap lines_heatmap(std::span<const LineABC> lines, int width, int height, GaussianSigma sigma,
                      const HeatmapOptions& options) {
  if (width < 1 || height < 1) throw std::invalid_argument("heatmap size must be positive");
  Heatmap h;
  h.width = width;
  h.height = height;
  h.channels = static_cast<int>(lines.size());
  const auto plane = static_cast<std::size_t>(width) * height;
  h.values.resize(plane * lines.size());
  for (std::size_t k = 0; k < lines.size(); ++k) {
    fill_line_heatmap(lines[k], width, height, sigma, std::span<double>(h.values).subspan(k * plane, plane), options);
  }
  return h;
}

bool misses_grid(const LineABC& line, int width, int height) {
  // The line meets the closed box [-0.5, w-0.5] x [-0.5, h-0.5] iff the
  // signed distance changes sign (or vanishes) over the box corners.
  const double xs[2] = {-0.5, width - 0.5};
  const double ys[2] = {-0.5, height - 0.5};
  bool pos = false, neg = false;
  for (double x : xs) {
    for (double y : ys) {
      const double d = line.signed_distance(x, y);
      if (d >= 0.0) pos = true;
      if (d <= 0.0) neg = true;
    }
  }
  return !(pos && neg);
}

StudyTargets study_targets(const ImagePlane& target_plane, std::span<const ImagePlane> intersecting,
                           GaussianSigma sigma) {
  if (intersecting.empty()) throw std::invalid_argument("study_targets needs at least one intersecting plane");
  geometry::validate(target_plane);
  StudyTargets t;
  for (std::size_t k = 0; k < intersecting.size(); ++k) {
    try {
      t.lines.push_back(geometry::intersection_line_in_pixels(target_plane, intersecting[k]));
    } catch (const geometry::GeometryError& e) {
      throw geometry::GeometryError(e.kind(), "intersecting plane " + std::to_string(k) + ": " + e.what());
    }
    t.out_of_field.push_back(misses_grid(t.lines.back(), target_plane.cols, target_plane.rows));
  }
  t.heatmap = lines_heatmap(t.lines, target_plane.cols, target_plane.rows, sigma);
  return t;
}

LineABC transform_line(const LineABC& line, const PixelTransform& t) {
  if (!(t.scale_x > 0.0) || !(t.scale_y > 0.0) || !std::isfinite(t.scale_x) || !std::isfinite(t.scale_y)) {
    throw std::invalid_argument("pixel transform scales must be positive and finite");
  }
  const double a = line.a / t.scale_x;
  const double b = line.b / t.scale_y;
  return LineABC::canonical(a, b, line.c - a * t.offset_x - b * t.offset_y);
}

LineABC transform_line(const LineABC& line, const Affine2D& t) {
  // n' = M^-T n, c' = c - n'.t
  const Affine2D inv = t.inverse();
  const double a = inv.m00 * line.a + inv.m10 * line.b;
  const double b = inv.m01 * line.a + inv.m11 * line.b;
  return LineABC::canonical(a, b, line.c - a * t.tx - b * t.ty);
}

}  // namespace viewssl::supervision
