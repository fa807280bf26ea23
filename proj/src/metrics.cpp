#include "viewssl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace viewssl::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_shape(const Mask2D& a, const Mask2D& b) {
  if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size() ||
      a.values.size() != static_cast<std::size_t>(a.width) * a.height) {
    throw MetricsError(MetricsError::Kind::ShapeError, "masks differ in shape");
  }
}

/// Squared 1-D distance transform (Felzenszwalb & Huttenlocher) with grid step `step`.
void edt_1d(const double* f, double* d, int n, double step, std::vector<int>& v, std::vector<double>& z) {
  const double w = step * step;
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  int first = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] < kInf) {
      first = q;
      break;
    }
  }
  if (first < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  v[0] = first;
  auto meet = [&](int q, int p) { return ((f[q] + w * q * q) - (f[p] + w * p * p)) / (2.0 * w * (q - p)); };
  for (int q = first + 1; q < n; ++q) {
    if (!(f[q] < kInf)) continue;
    double s = meet(q, v[k]);
    while (s <= z[k]) {  // z[0] = -inf stops the loop
      --k;
      s = meet(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = w * dq * dq + f[v[k]];
  }
}

/// Squared Euclidean distance (mm^2) from every pixel to the nearest seed.
std::vector<double> squared_distance_map(const std::vector<std::pair<int, int>>& seeds, int width, int height,
                                         double sx, double sy) {
  std::vector<double> g(static_cast<std::size_t>(width) * height, kInf);
  for (auto [x, y] : seeds) g[static_cast<std::size_t>(y) * width + x] = 0.0;
  const int n = std::max(width, height);
  std::vector<int> v(n + 1);
  std::vector<double> z(n + 2), f(n), d(n);
  for (int y = 0; y < height; ++y) {
    double* row = g.data() + static_cast<std::size_t>(y) * width;
    std::copy(row, row + width, f.begin());
    edt_1d(f.data(), d.data(), width, sx, v, z);
    std::copy(d.begin(), d.begin() + width, row);
  }
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) f[y] = g[static_cast<std::size_t>(y) * width + x];
    edt_1d(f.data(), d.data(), height, sy, v, z);
    for (int y = 0; y < height; ++y) g[static_cast<std::size_t>(y) * width + x] = d[y];
  }
  return g;
}

struct DirectedSums {
  double sum = 0.0;
  std::size_t count = 0;
};

/// Sum over boundary(a) of the distance to the nearest boundary(b) pixel.
DirectedSums directed(const Mask2D& a, const Mask2D& b, double sx, double sy) {
  const auto ba = boundary_pixels(a);
  const auto dist2 = squared_distance_map(boundary_pixels(b), b.width, b.height, sx, sy);
  DirectedSums s;
  for (auto [x, y] : ba) s.sum += std::sqrt(dist2[static_cast<std::size_t>(y) * a.width + x]);
  s.count = ba.size();
  return s;
}

std::string opt_json(const std::optional<double>& v) {
  if (!v) return "null";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

std::string opt_csv(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}

}  // namespace

std::string RegressionReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"n\": " << n << ", \"mse\": " << mse << ", \"mae\": " << mae << ", \"pearson_r\": " << opt_json(pearson_r)
     << ", \"r_squared\": " << opt_json(r_squared) << ", \"explained_variance\": " << opt_json(explained_variance)
     << ", \"fit_slope\": " << opt_json(fit_slope) << ", \"fit_intercept\": " << opt_json(fit_intercept) << "}";
  return os.str();
}

std::string RegressionReport::csv_header() { return "n,mse,mae,pearson_r,r_squared,explained_variance,fit_slope,fit_intercept"; }

std::string RegressionReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << n << ',' << mse << ',' << mae << ',' << opt_csv(pearson_r) << ',' << opt_csv(r_squared) << ','
     << opt_csv(explained_variance) << ',' << opt_csv(fit_slope) << ',' << opt_csv(fit_intercept);
  return os.str();
}

RegressionReport regression_report(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw MetricsError(MetricsError::Kind::LengthMismatch, "pred/truth lengths differ");
  if (pred.size() < 2) throw MetricsError(MetricsError::Kind::TooFewSamples, "regression report needs >= 2 samples");
  const auto n = static_cast<double>(pred.size());
  RegressionReport r;
  r.n = pred.size();
  double mt = 0, mp = 0, mr = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = truth[i] - pred[i];
    r.mse += e * e;
    r.mae += std::abs(e);
    mt += truth[i];
    mp += pred[i];
    mr += e;
  }
  r.mse /= n;
  r.mae /= n;
  mt /= n;
  mp /= n;
  mr /= n;
  double ss_t = 0, ss_p = 0, cov = 0, ss_resid_centred = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dt = truth[i] - mt, dp = pred[i] - mp;
    ss_t += dt * dt;
    ss_p += dp * dp;
    cov += dt * dp;
    const double de = (truth[i] - pred[i]) - mr;
    ss_resid_centred += de * de;
  }
  if (ss_t == 0.0) return r;
  r.r_squared = 1.0 - (r.mse * n) / ss_t;
  r.explained_variance = 1.0 - ss_resid_centred / ss_t;
  r.fit_slope = cov / ss_t;
  r.fit_intercept = mp - *r.fit_slope * mt;
  if (ss_p > 0.0) r.pearson_r = std::clamp(cov / std::sqrt(ss_t * ss_p), -1.0, 1.0);
  return r;
}

std::size_t Mask2D::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
}

Mask2D label_mask(std::span<const std::uint8_t> labels, int width, int height, std::uint8_t label) {
  if (labels.size() != static_cast<std::size_t>(width) * height) {
    throw MetricsError(MetricsError::Kind::ShapeError, "label buffer does not match its shape");
  }
  Mask2D m{width, height, std::vector<std::uint8_t>(labels.size())};
  for (std::size_t i = 0; i < labels.size(); ++i) m.values[i] = labels[i] == label ? 1 : 0;
  return m;
}

double dice(const Mask2D& a, const Mask2D& b) { return dice(std::span(&a, 1), std::span(&b, 1)); }

double dice(std::span<const Mask2D> a, std::span<const Mask2D> b) {
  if (a.size() != b.size()) throw MetricsError(MetricsError::Kind::ShapeError, "volumes differ in slice count");
  std::size_t inter = 0, total = 0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    check_same_shape(a[s], b[s]);
    for (std::size_t i = 0; i < a[s].values.size(); ++i) {
      const bool x = a[s].values[i] != 0, y = b[s].values[i] != 0;
      inter += (x && y);
      total += x + y;
    }
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

std::vector<std::pair<int, int>> boundary_pixels(const Mask2D& m) {
  std::vector<std::pair<int, int>> out;
  auto fg = [&](int x, int y) { return x >= 0 && y >= 0 && x < m.width && y < m.height && m.at(x, y); };
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      if (!fg(x - 1, y) || !fg(x + 1, y) || !fg(x, y - 1) || !fg(x, y + 1)) out.emplace_back(x, y);
    }
  }
  return out;
}

double assd(const Mask2D& a, const Mask2D& b, double spacing_x, double spacing_y) {
  check_same_shape(a, b);
  if (a.count() == 0 || b.count() == 0) {
    throw MetricsError(MetricsError::Kind::EmptyMask, "ASSD is undefined for an empty mask");
  }
  const auto ab = directed(a, b, spacing_x, spacing_y);
  const auto ba = directed(b, a, spacing_x, spacing_y);
  return (ab.sum + ba.sum) / static_cast<double>(ab.count + ba.count);
}

VolumeAssd assd_volume(std::span<const Mask2D> a, std::span<const Mask2D> b, double spacing_x, double spacing_y) {
  if (a.size() != b.size()) throw MetricsError(MetricsError::Kind::ShapeError, "volumes differ in slice count");
  VolumeAssd out;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    check_same_shape(a[s], b[s]);
    const bool ea = a[s].count() == 0, eb = b[s].count() == 0;
    if (ea && eb) continue;
    if (ea != eb) {
      ++out.skipped_slices;
      continue;
    }
    const auto ab = directed(a[s], b[s], spacing_x, spacing_y);
    const auto ba = directed(b[s], a[s], spacing_x, spacing_y);
    sum += ab.sum + ba.sum;
    count += ab.count + ba.count;
  }
  if (count == 0) throw MetricsError(MetricsError::Kind::EmptyMask, "no slice has both masks non-empty");
  out.assd = sum / static_cast<double>(count);
  return out;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw MetricsError(MetricsError::Kind::LengthMismatch, "scores/labels lengths differ");
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw MetricsError(MetricsError::Kind::NotBinary, "labels must be 0 or 1");
    n_pos += (l == 1);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricsError(MetricsError::Kind::SingleClass, "AUC needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return scores[i] < scores[j]; });
  // midranks (1-based) summed over positives
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

struct WeightedPoint {
  double x, y, w;
};

std::optional<geometry::LineABC> tls_fit(const std::vector<WeightedPoint>& pts) {
  double sw = 0, mx = 0, my = 0;
  for (const auto& p : pts) {
    sw += p.w;
    mx += p.w * p.x;
    my += p.w * p.y;
  }
  if (pts.size() < 2 || !(sw > 0)) return std::nullopt;
  mx /= sw;
  my /= sw;
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : pts) {
    sxx += p.w * (p.x - mx) * (p.x - mx);
    syy += p.w * (p.y - my) * (p.y - my);
    sxy += p.w * (p.x - mx) * (p.y - my);
  }
  // direction of largest spread; the line normal is perpendicular to it
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  const double nx = -std::sin(theta), ny = std::cos(theta);
  return geometry::LineABC::canonical(nx, ny, -(nx * mx + ny * my));
}

}  // namespace

std::optional<geometry::LineABC> fit_ridge_line(std::span<const double> h, int width, int height) {
  if (h.size() != static_cast<std::size_t>(width) * height || h.empty()) {
    throw MetricsError(MetricsError::Kind::ShapeError, "heatmap buffer does not match its shape");
  }
  const double peak = *std::max_element(h.begin(), h.end());
  const double floor_v = *std::min_element(h.begin(), h.end());
  if (!(peak > floor_v)) return std::nullopt;
  const double thr = floor_v + 0.5 * (peak - floor_v);

  std::vector<WeightedPoint> bright;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = h[static_cast<std::size_t>(y) * width + x];
      if (v >= thr) bright.push_back({double(x), double(y), v - thr});
    }
  }
  const auto coarse = tls_fit(bright);
  if (!coarse) return std::nullopt;

  // Ridge: argmax across the line, scanning along its dominant direction.
  std::vector<WeightedPoint> ridge;
  const bool scan_columns = std::abs(coarse->b) >= std::abs(coarse->a);  // line runs mostly along x
  const int outer = scan_columns ? width : height;
  const int inner = scan_columns ? height : width;
  for (int i = 0; i < outer; ++i) {
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < inner; ++j) {
      const double v = scan_columns ? h[static_cast<std::size_t>(j) * width + i] : h[static_cast<std::size_t>(i) * width + j];
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    // A maximum on the border is where the line left the grid, not a ridge sample.
    if (best_v < thr || best == 0 || best == inner - 1) continue;
    auto at = [&](int j) {
      return scan_columns ? h[static_cast<std::size_t>(j) * width + i] : h[static_cast<std::size_t>(i) * width + j];
    };
    // parabolic sub-pixel refinement of the maximum
    const double lm = at(best - 1), rm = at(best + 1);
    const double curv = lm - 2.0 * best_v + rm;
    const double offset = curv < 0.0 ? std::clamp(0.5 * (lm - rm) / curv, -0.5, 0.5) : 0.0;
    const double pos = best + offset;
    ridge.push_back(scan_columns ? WeightedPoint{double(i), pos, best_v - floor_v}
                                 : WeightedPoint{pos, double(i), best_v - floor_v});
  }
  if (ridge.size() < 2) return coarse;
  return tls_fit(ridge);
}

double line_localization_error(const geometry::LineABC& fitted, const geometry::LineABC& truth, int width, int height) {
  // parametrise the fitted line: p(s) = p0 + s * dir
  const double dx = -fitted.b, dy = fitted.a;
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  const double dist = fitted.signed_distance(cx, cy);
  const double px = cx - dist * fitted.a, py = cy - dist * fitted.b;
  double lo = -kInf, hi = kInf;
  auto slab = [&](double p, double d, double min_v, double max_v) {
    if (std::abs(d) < 1e-15) {
      if (p < min_v || p > max_v) {
        lo = 1;
        hi = 0;
      }
      return;
    }
    double t0 = (min_v - p) / d, t1 = (max_v - p) / d;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  };
  slab(px, dx, 0.0, width - 1.0);
  slab(py, dy, 0.0, height - 1.0);
  if (!(hi >= lo)) return std::abs(truth.signed_distance(px, py));
  const int steps = std::max(1, static_cast<int>(std::ceil((hi - lo) / 0.5)));
  double sum = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double s = lo + (hi - lo) * i / steps;
    sum += std::abs(truth.signed_distance(px + s * dx, py + s * dy));
  }
  return sum / (steps + 1);
}

}  // namespace viewssl::metrics
