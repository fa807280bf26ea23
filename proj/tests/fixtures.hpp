#pragma once

// Shared test fixtures: hand-assembled DICOM byte streams and brute-force
// reference implementations of the evaluation metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "viewssl/dicom.hpp"
#include "viewssl/metrics.hpp"
#include "viewssl/nn/train.hpp"
#include "viewssl/random.hpp"

namespace fixture {

using viewssl::Rng;
using viewssl::formats::DicomImage;
using viewssl::metrics::Mask2D;

using Bytes = std::vector<std::uint8_t>;

inline void put16(Bytes& b, std::uint16_t v) {
  b.push_back(v & 0xFF);
  b.push_back(v >> 8);
}
inline void put32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF);
}
inline void short_el(Bytes& b, std::uint16_t g, std::uint16_t e, const char* vr, const std::string& value) {
  put16(b, g);
  put16(b, e);
  b.push_back(vr[0]);
  b.push_back(vr[1]);
  put16(b, static_cast<std::uint16_t>(value.size()));
  b.insert(b.end(), value.begin(), value.end());
}
inline void long_el(Bytes& b, std::uint16_t g, std::uint16_t e, const char* vr, const Bytes& value) {
  put16(b, g);
  put16(b, e);
  b.push_back(vr[0]);
  b.push_back(vr[1]);
  put16(b, 0);
  put32(b, static_cast<std::uint32_t>(value.size()));
  b.insert(b.end(), value.begin(), value.end());
}

inline Bytes header() {
  Bytes b(128, 0);
  for (char c : std::string("DICM")) b.push_back(c);
  return b;
}

// Hand-assembled file; documented values:
//   IPP (-12.5, 30, 4.25), IOP row (1,0,0) col (0,0,-1), spacing row 0.75 col 1.5,
//   Rows 2, Columns 3, series "1.2.3", pixels 0..5 * 1000, one unknown tag skipped.
inline Bytes golden(bool with_pixels = true) {
  Bytes b = header();
  short_el(b, 0x0002, 0x0010, "UI", std::string("1.2.840.10008.1.2.1") + '\0');
  short_el(b, 0x0008, 0x0060, "CS", "MR");
  short_el(b, 0x0020, 0x000E, "UI", std::string("1.2.3") + '\0');
  short_el(b, 0x0020, 0x0032, "DS", "-12.5\\30\\4.25 ");
  short_el(b, 0x0020, 0x0037, "DS", "1\\0\\0\\0\\0\\-1");
  const Bytes rows{0x02, 0x00}, cols{0x03, 0x00};
  put16(b, 0x0028), put16(b, 0x0010), b.push_back('U'), b.push_back('S'), put16(b, 2), b.insert(b.end(), rows.begin(), rows.end());
  put16(b, 0x0028), put16(b, 0x0011), b.push_back('U'), b.push_back('S'), put16(b, 2), b.insert(b.end(), cols.begin(), cols.end());
  short_el(b, 0x0028, 0x0030, "DS", ".75\\1.5 ");
  long_el(b, 0x0029, 0x1010, "UN", Bytes{1, 2, 3, 4});
  if (!with_pixels) return b;
  Bytes px;
  for (int i = 0; i < 6; ++i) put16(px, static_cast<std::uint16_t>(1000 * i));
  long_el(b, 0x7FE0, 0x0010, "OW", px);
  return b;
}

inline DicomImage random_dicom(Rng& rng) {
  DicomImage d;
  d.plane = oracle::random_plane(rng);
  d.rows = d.plane.rows = 1 + static_cast<int>(rng.below(64));
  d.cols = d.plane.cols = 1 + static_cast<int>(rng.below(64));
  d.series_uid = "1.2.826.0.1." + std::to_string(rng.below(1000000));
  if (rng.uniform() < 0.7) {
    std::vector<std::uint16_t> px(static_cast<std::size_t>(d.rows) * d.cols);
    for (auto& v : px) v = static_cast<std::uint16_t>(rng.below(65536));
    d.pixel_data = px;
  }
  return d;
}

struct NaiveRegression {
  double mse, mae, r, r2, ev, slope, intercept;
};

// Textbook definitions, evaluated with plain loops.
inline NaiveRegression naive_regression(const std::vector<double>& p, const std::vector<double>& t) {
  const double n = static_cast<double>(p.size());
  double mse = 0, mae = 0, mp = 0, mt = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mse += (p[i] - t[i]) * (p[i] - t[i]);
    mae += std::abs(p[i] - t[i]);
    mp += p[i];
    mt += t[i];
  }
  mse /= n, mae /= n, mp /= n, mt /= n;
  double spp = 0, stt = 0, spt = 0, ss_res = 0, me = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    spp += (p[i] - mp) * (p[i] - mp);
    stt += (t[i] - mt) * (t[i] - mt);
    spt += (p[i] - mp) * (t[i] - mt);
    ss_res += (t[i] - p[i]) * (t[i] - p[i]);
    me += t[i] - p[i];
  }
  me /= n;
  double var_e = 0;
  for (std::size_t i = 0; i < p.size(); ++i) var_e += (t[i] - p[i] - me) * (t[i] - p[i] - me);
  NaiveRegression r{};
  r.mse = mse;
  r.mae = mae;
  r.r = spt / std::sqrt(spp * stt);
  r.r2 = 1 - ss_res / stt;
  r.ev = 1 - (var_e / n) / (stt / n);
  r.slope = spt / stt;
  r.intercept = mp - r.slope * mt;
  return r;
}

inline Mask2D random_blob_mask(Rng& rng, int w, int h, double density) {
  Mask2D m{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  const int blobs = 1 + static_cast<int>(rng.below(3));
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(0, w), cy = rng.uniform(0, h), r = rng.uniform(1, std::max(2.0, w * density));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.values[static_cast<std::size_t>(y) * w + x] = 1;
      }
    }
  }
  // speckle
  for (auto& v : m.values) {
    if (rng.uniform() < 0.03) v = 1;
  }
  return m;
}

inline std::vector<std::pair<int, int>> naive_boundary(const Mask2D& m) {
  std::vector<std::pair<int, int>> out;
  auto fg = [&](int x, int y) { return x >= 0 && y >= 0 && x < m.width && y < m.height && m.at(x, y); };
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (fg(x, y) && (!fg(x - 1, y) || !fg(x + 1, y) || !fg(x, y - 1) || !fg(x, y + 1))) out.emplace_back(x, y);
    }
  }
  return out;
}

// O(n^2) over all boundary-pixel pairs.
inline double naive_assd(const Mask2D& a, const Mask2D& b, double sx, double sy) {
  const auto ba = naive_boundary(a), bb = naive_boundary(b);
  auto directed = [&](const auto& from, const auto& to) {
    double s = 0;
    for (auto [x, y] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (auto [u, v] : to) best = std::min(best, std::hypot((x - u) * sx, (y - v) * sy));
      s += best;
    }
    return s;
  };
  return (directed(ba, bb) + directed(bb, ba)) / static_cast<double>(ba.size() + bb.size());
}

inline double naive_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[i] == 1 && l[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return num / den;
}

// network fixtures

using namespace viewssl::nn;

inline std::vector<float> random_image(Rng& rng, int h, int w) {
  std::vector<float> img(static_cast<std::size_t>(h) * w);
  for (auto& v : img) v = static_cast<float>(rng.normal());
  return img;
}

inline viewssl::nn::Sample synthetic_sample(Rng& rng, int h, int w) {
  viewssl::nn::Sample s;
  s.image = random_image(rng, h, w);
  for (int k = 0; k < 2; ++k) {
    const double t = rng.uniform(0, std::numbers::pi);
    s.lines.push_back(viewssl::geometry::LineABC::canonical(std::cos(t), std::sin(t),
                                                   -(std::cos(t) * rng.uniform(4, w - 4) + std::sin(t) * rng.uniform(4, h - 4))));
  }
  s.location = rng.uniform();
  s.mask.resize(s.image.size());
  for (auto& m : s.mask) m = static_cast<std::uint8_t>(rng.below(viewssl::nn::kSegClasses));
  s.label = static_cast<int>(rng.below(2));
  return s;
}

struct GradCheck {
  int failures = 0;
  double worst = 0.0;
  std::string first_failure;
};

// Central differences on `count` parameters; every tensor is sampled first,
// then random tensors. The check is of the MTL objective with an L1 term.
inline GradCheck check_pretext_gradients(std::uint64_t seed, int size, int batch_size, double h, int count) {
  Rng rng(seed);
  auto p = init_params<double>(seed + 10, 2);
  // nonzero biases so that every bias path is exercised
  for (int id = 0; id < kNumParams; ++id) {
    if (is_bias(id)) {
      for (auto& v : p[id].data) v = 0.05 * rng.normal();
    }
  }
  TrainConfig cfg;
  std::vector<Prepared<double>> batch;
  for (int i = 0; i < batch_size; ++i) {
    batch.push_back(prepare<double>(synthetic_sample(rng, size, size), size, size, cfg, false, 0));
  }
  const double l1 = 1e-4;
  auto g = p.zeros_like();
  batch_objective<double>(p, batch, size, size, LossMode::MTL, {}, l1, &g);

  GradCheck out;
  for (int trial = 0; trial < count; ++trial) {
    const int id = trial < kNumParams ? trial : static_cast<int>(rng.below(kNumParams));
    const std::size_t i = rng.below(p[id].size());
    const double orig = p[id].data[i];
    p[id].data[i] = orig + h;
    const double up = batch_objective<double>(p, batch, size, size, LossMode::MTL, {}, l1, nullptr);
    p[id].data[i] = orig - h;
    const double down = batch_objective<double>(p, batch, size, size, LossMode::MTL, {}, l1, nullptr);
    p[id].data[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double analytic = g[id].data[i];
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    out.worst = std::max(out.worst, rel);
    if (rel >= 1e-4) {
      ++out.failures;
      out.first_failure = std::string(param_name(id)) + "[" + std::to_string(i) + "] analytic " +
                          std::to_string(analytic) + " numeric " + std::to_string(numeric);
    }
  }
  return out;
}

}  // namespace fixture
