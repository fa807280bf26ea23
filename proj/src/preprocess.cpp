#include "viewssl/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace viewssl::formats {

namespace {

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

double clamped(const GrayImage& img, int x, int y) {
  x = std::clamp(x, 0, img.width - 1);
  y = std::clamp(y, 0, img.height - 1);
  return img.at(x, y);
}

/// Floor division for the crop/pad offset so odd differences are deterministic.
int centre_offset(int target, int have) {
  const int diff = target - have;
  return diff >= 0 ? diff / 2 : -((-diff + 1) / 2);
}

void check_inputs(double target_spacing, int target_size) {
  if (!(target_spacing > 0.0) || !std::isfinite(target_spacing)) throw std::invalid_argument("target spacing must be > 0");
  if (target_size <= 0) throw std::invalid_argument("target size must be > 0");
}

}  // namespace

int resampled_size(int n, double scale) { return std::max(1, static_cast<int>(std::lround(n * scale))); }

double sample_cubic(const GrayImage& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  double wx[4], wy[4];
  for (int i = 0; i < 4; ++i) {
    wx[i] = cubic_weight(fx - (i - 1));
    wy[i] = cubic_weight(fy - (i - 1));
  }
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    double row = 0.0;
    for (int i = 0; i < 4; ++i) row += wx[i] * clamped(img, x0 + i - 1, y0 + j - 1);
    acc += wy[j] * row;
  }
  return acc;
}

double sample_bilinear(const GrayImage& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1 - fx) * clamped(img, x0, y0) + fx * clamped(img, x0 + 1, y0);
  const double bottom = (1 - fx) * clamped(img, x0, y0 + 1) + fx * clamped(img, x0 + 1, y0 + 1);
  return (1 - fy) * top + fy * bottom;
}

PreprocessResult preprocess_image(const GrayImage& img, double target_spacing, int target_size, Interpolation interp) {
  check_inputs(target_spacing, target_size);
  if (img.width <= 0 || img.height <= 0 || img.values.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw std::invalid_argument("image dimensions do not match its pixel buffer");
  }
  if (!(img.spacing_x > 0.0) || !(img.spacing_y > 0.0)) throw std::invalid_argument("image spacing must be > 0");

  const double sx = img.spacing_x / target_spacing;
  const double sy = img.spacing_y / target_spacing;
  const int rw = resampled_size(img.width, sx);
  const int rh = resampled_size(img.height, sy);
  const int ox = centre_offset(target_size, rw);
  const int oy = centre_offset(target_size, rh);

  PreprocessResult r;
  r.transform = {sx, sy, static_cast<double>(ox), static_cast<double>(oy)};
  r.image.width = r.image.height = target_size;
  r.image.spacing_x = r.image.spacing_y = target_spacing;
  r.image.values.assign(static_cast<std::size_t>(target_size) * target_size, 0.0);

  // Only the resampled pixels that land inside the output window are computed.
  const int x_begin = std::max(0, ox), x_end = std::min(target_size, ox + rw);
  const int y_begin = std::max(0, oy), y_end = std::min(target_size, oy + rh);
  const bool identity = sx == 1.0 && sy == 1.0;
  for (int y = y_begin; y < y_end; ++y) {
    const double src_y = (y - oy) / sy;
    for (int x = x_begin; x < x_end; ++x) {
      const double src_x = (x - ox) / sx;
      double v;
      if (identity) {
        v = img.at(x - ox, y - oy);
      } else {
        v = interp == Interpolation::CatmullRom ? sample_cubic(img, src_x, src_y) : sample_bilinear(img, src_x, src_y);
      }
      r.image.values[static_cast<std::size_t>(y) * target_size + x] = v;
    }
  }

  const std::size_t n = static_cast<std::size_t>(x_end - x_begin) * (y_end - y_begin);
  double mean = 0.0;
  for (int y = y_begin; y < y_end; ++y) {
    for (int x = x_begin; x < x_end; ++x) mean += r.image.values[static_cast<std::size_t>(y) * target_size + x];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (int y = y_begin; y < y_end; ++y) {
    for (int x = x_begin; x < x_end; ++x) {
      const double d = r.image.values[static_cast<std::size_t>(y) * target_size + x] - mean;
      var += d * d;
    }
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd < 1e-8 || !std::isfinite(sd)) {
    r.degenerate = true;
    std::fill(r.image.values.begin(), r.image.values.end(), 0.0);
    return r;
  }
  for (int y = y_begin; y < y_end; ++y) {
    for (int x = x_begin; x < x_end; ++x) {
      auto& v = r.image.values[static_cast<std::size_t>(y) * target_size + x];
      v = (v - mean) / sd;
    }
  }
  return r;
}

LabelImage preprocess_labels(const LabelImage& labels, double spacing_x, double spacing_y, double target_spacing,
                             int target_size) {
  check_inputs(target_spacing, target_size);
  const double sx = spacing_x / target_spacing;
  const double sy = spacing_y / target_spacing;
  const int rw = resampled_size(labels.width, sx);
  const int rh = resampled_size(labels.height, sy);
  const int ox = centre_offset(target_size, rw);
  const int oy = centre_offset(target_size, rh);
  LabelImage out{target_size, target_size, std::vector<std::uint8_t>(static_cast<std::size_t>(target_size) * target_size, 0)};
  for (int y = std::max(0, oy); y < std::min(target_size, oy + rh); ++y) {
    const int src_y = std::clamp(static_cast<int>(std::lround((y - oy) / sy)), 0, labels.height - 1);
    for (int x = std::max(0, ox); x < std::min(target_size, ox + rw); ++x) {
      const int src_x = std::clamp(static_cast<int>(std::lround((x - ox) / sx)), 0, labels.width - 1);
      out.labels[static_cast<std::size_t>(y) * target_size + x] =
          labels.labels[static_cast<std::size_t>(src_y) * labels.width + src_x];
    }
  }
  return out;
}

geometry::ImagePlane transform_plane(const geometry::ImagePlane& plane, const supervision::PixelTransform& t,
                                     int new_cols, int new_rows) {
  geometry::ImagePlane out = plane;
  out.origin = geometry::pixel_to_patient(plane, -t.offset_x / t.scale_x, -t.offset_y / t.scale_y);
  out.col_spacing = plane.col_spacing / t.scale_x;
  out.row_spacing = plane.row_spacing / t.scale_y;
  out.cols = new_cols;
  out.rows = new_rows;
  return out;
}

}  // namespace viewssl::formats
