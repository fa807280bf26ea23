#pragma once

#include <optional>
#include <span>
#include <vector>

#include "viewssl/geometry.hpp"

/// Pretext-task targets: Gaussian ridge heatmaps around intersection lines
/// and the pixel-coordinate bookkeeping that keeps those lines aligned with
/// preprocessed / augmented images.
namespace viewssl::supervision {

using geometry::ImagePlane;
using geometry::LineABC;

inline constexpr double kDefaultSigma = 6.0;

/// Gaussian width in pixels.
class GaussianSigma {
 public:
  GaussianSigma() = default;
  explicit GaussianSigma(double sigma);
  double value() const { return sigma_; }

 private:
  double sigma_ = kDefaultSigma;
};

/// K-channel target, row-major per channel: values[(k * height + y) * width + x].
struct Heatmap {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> values;

  double at(int k, int y, int x) const {
    return values[(static_cast<std::size_t>(k) * height + y) * width + x];
  }
  std::span<const double> channel(int k) const {
    const auto plane = static_cast<std::size_t>(width) * height;
    return {values.data() + k * plane, plane};
  }
};

struct HeatmapOptions {
  /// Opt-in truncation: values beyond this many sigmas are written as 0.
  std::optional<double> truncate_sigmas;
};

/// x' = scale_x * x + offset_x, y' = scale_y * y + offset_y.
struct PixelTransform {
  double scale_x = 1.0;
  double scale_y = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  /// Applies `this` after `first`.
  PixelTransform after(const PixelTransform& first) const;
};

/// General 2D affine map p' = M p + t, used by the augmentation path.
struct Affine2D {
  double m00 = 1.0, m01 = 0.0, m10 = 0.0, m11 = 1.0;
  double tx = 0.0, ty = 0.0;

  static Affine2D from(const PixelTransform& t);
  /// Rotation by `radians` about (cx, cy).
  static Affine2D rotation(double radians, double cx, double cy);
  /// Mirror x -> (width - 1) - x.
  static Affine2D horizontal_flip(int width);

  Affine2D after(const Affine2D& first) const;
  Affine2D inverse() const;
  void apply(double x, double y, double& ox, double& oy) const {
    ox = m00 * x + m01 * y + tx;
    oy = m10 * x + m11 * y + ty;
  }
};

void fill_line_heatmap(const LineABC& line, int width, int height, GaussianSigma sigma,
                       std::span<double> out, const HeatmapOptions& options = {});

Heatmap line_heatmap(const LineABC& line, int width, int height, GaussianSigma sigma = {},
                     const HeatmapOptions& options = {});

/// Heatmap with one channel per line, in input order.
Heatmap lines_heatmap(std::span<const LineABC> lines, int width, int height, GaussianSigma sigma = {},
                      const HeatmapOptions& options = {});

/// True if the line passes through no pixel cell of the width x height grid.
bool misses_grid(const LineABC& line, int width, int height);

struct StudyTargets {
  Heatmap heatmap;
  std::vector<LineABC> lines;
  std::vector<bool> out_of_field;  ///< lines missing the grid (near-zero channel)
};

/// Channel k is the heatmap of the intersection of `intersecting[k]` with
/// `target_plane`, rasterised on the target's own grid.
StudyTargets study_targets(const ImagePlane& target_plane, std::span<const ImagePlane> intersecting,
                           GaussianSigma sigma = {});

LineABC transform_line(const LineABC& line, const PixelTransform& t);
LineABC transform_line(const LineABC& line, const Affine2D& t);

}  // namespace viewssl::supervision
