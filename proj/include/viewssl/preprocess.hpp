#pragma once

#include <cstdint>
#include <vector>

#include "viewssl/geometry.hpp"
#include "viewssl/supervision.hpp"

namespace viewssl::formats {

/// Single-channel image with physical pixel size; values row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  double spacing_x = 1.0;  ///< mm between columns
  double spacing_y = 1.0;  ///< mm between rows
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Label image on the same grid conventions as GrayImage.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;
};

enum class Interpolation { CatmullRom, Bilinear };

struct PreprocessResult {
  GrayImage image;
  supervision::PixelTransform transform;  ///< input pixel coords -> output pixel coords
  bool degenerate = false;                ///< blank slice: output left all-zero
};

/// Resample to `target_spacing`, centre-crop / zero-pad to a square of
/// `target_size`, then z-score the non-padded pixels.
PreprocessResult preprocess_image(const GrayImage& img, double target_spacing, int target_size,
                                  Interpolation interp = Interpolation::CatmullRom);

/// Same geometry as preprocess_image, nearest-neighbour for labels; padding is 0.
LabelImage preprocess_labels(const LabelImage& labels, double spacing_x, double spacing_y, double target_spacing,
                             int target_size);

/// Plane describing the preprocessed grid: pixel_to_patient(updated, t(p)) == pixel_to_patient(plane, p).
geometry::ImagePlane transform_plane(const geometry::ImagePlane& plane, const supervision::PixelTransform& t,
                                     int new_cols, int new_rows);

/// Resampled extent of `n` pixels at `scale`.
int resampled_size(int n, double scale);

/// Catmull-Rom (a = -0.5) interpolation at a fractional position, edges clamped.
double sample_cubic(const GrayImage& img, double x, double y);
double sample_bilinear(const GrayImage& img, double x, double y);

}  // namespace viewssl::formats
