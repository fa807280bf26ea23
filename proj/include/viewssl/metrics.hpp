#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viewssl/error.hpp"
#include "viewssl/geometry.hpp"

namespace viewssl::metrics {

class MetricsError : public Error {
 public:
  enum class Kind { ShapeError, LengthMismatch, EmptyMask, SingleClass, NotBinary, TooFewSamples };
  MetricsError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Regression quality of predictions against ground truth. Correlation-type
/// fields are empty when undefined (constant truth, or constant predictions
/// for pearson_r).
struct RegressionReport {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> pearson_r;
  std::optional<double> r_squared;
  std::optional<double> explained_variance;
  std::optional<double> fit_slope;      ///< least squares pred = slope * truth + intercept
  std::optional<double> fit_intercept;
  std::size_t n = 0;

  bool truth_constant() const { return !r_squared.has_value(); }
  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

RegressionReport regression_report(std::span<const double> pred, std::span<const double> truth);

/// Binary mask: nonzero = foreground.
struct Mask2D {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  bool at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

/// Foreground where labels == label.
Mask2D label_mask(std::span<const std::uint8_t> labels, int width, int height, std::uint8_t label);

/// 2|A n B| / (|A| + |B|); 1.0 when both are empty.
double dice(const Mask2D& a, const Mask2D& b);
double dice(std::span<const Mask2D> a, std::span<const Mask2D> b);

/// Boundary pixels: foreground with a 4-neighbour outside the mask (grid
/// exterior counts as outside). Returned as (x, y) pairs.
std::vector<std::pair<int, int>> boundary_pixels(const Mask2D& m);

/// Average symmetric surface distance in mm. Throws EmptyMask.
double assd(const Mask2D& a, const Mask2D& b, double spacing_x, double spacing_y);

struct VolumeAssd {
  double assd = 0.0;
  int skipped_slices = 0;  ///< slices where exactly one mask is empty
};

/// Pools in-slice boundary distances over all slices where both masks are
/// non-empty. Throws EmptyMask when no slice qualifies.
VolumeAssd assd_volume(std::span<const Mask2D> a, std::span<const Mask2D> b, double spacing_x, double spacing_y);

/// Mann-Whitney AUC with ties counted 0.5. Throws SingleClass.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Fits a line to the ridge of a predicted heatmap channel (argmax per
/// row/column across the dominant direction, weighted total least squares).
std::optional<geometry::LineABC> fit_ridge_line(std::span<const double> heatmap, int width, int height);

/// Mean distance (px) from the ground-truth line of points sampled along the
/// part of `fitted` that lies inside the grid.
double line_localization_error(const geometry::LineABC& fitted, const geometry::LineABC& truth, int width, int height);

}  // namespace viewssl::metrics
