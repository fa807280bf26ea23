#include "viewssl/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "viewssl/random.hpp"
#include "viewssl/tensor_file.hpp"

namespace viewssl::phantom {

namespace {

using geometry::cross;
using geometry::dot;
using geometry::norm;
using geometry::normalized;

/// Rotates v about the unit axis k by `angle` (Rodrigues).
Vec3 rotate(Vec3 v, Vec3 k, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return c * v + s * cross(k, v) + ((1.0 - c) * dot(k, v)) * k;
}

/// Any unit vector perpendicular to `u`.
Vec3 perpendicular(Vec3 u) {
  const Vec3 ref = std::abs(u.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return normalized(ref - dot(ref, u) * u);
}

constexpr std::uint64_t kLayoutStream = 0x5A7;

ImagePlane centred_plane(Vec3 centre, Vec3 row_dir, Vec3 col_dir, const StudyLayout& layout) {
  ImagePlane p;
  p.row_dir = row_dir;
  p.col_dir = col_dir;
  p.col_spacing = p.row_spacing = layout.spacing;
  p.cols = p.rows = layout.fov;
  const double half = 0.5 * (layout.fov - 1) * layout.spacing;
  p.origin = centre - half * row_dir - half * col_dir;
  return p;
}

formats::TensorData image_tensor(const formats::GrayImage& img) {
  std::vector<float> v(img.values.begin(), img.values.end());
  return formats::TensorData::f32({static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width)},
                                  std::move(v));
}

formats::TensorData mask_tensor(const formats::LabelImage& m) {
  return formats::TensorData::u8({static_cast<std::uint32_t>(m.height), static_cast<std::uint32_t>(m.width)}, m.labels);
}

}  // namespace

void validate(const PhantomSpec& s) {
  auto fail = [](const std::string& why) { throw std::invalid_argument("invalid phantom spec: " + why); };
  if (!(s.r_long > 0) || !(s.r_short > 0) || !(s.myo_thickness > 0) || !(s.rv_scale > 0)) fail("sizes must be > 0");
  if (std::abs(norm(s.long_axis) - 1.0) > 1e-6) fail("long_axis must be unit length");
  if (std::abs(norm(s.rv_offset_dir) - 1.0) > 1e-6) fail("rv_offset_dir must be unit length");
  if (std::abs(dot(s.rv_offset_dir, s.long_axis)) > 1e-6) fail("rv_offset_dir must be perpendicular to long_axis");
  if (!(s.noise_std >= 0)) fail("noise_std must be >= 0");
}

Label classify(const PhantomSpec& s, Vec3 p) {
  const Vec3 rel = p - s.lv_center;
  double t = dot(rel, s.long_axis);
  if (s.mirrored) t = std::abs(t);
  // the base plane itself belongs to the solids; absorb rounding just above it
  if (t < -1e-6) return Background;
  t = std::max(t, 0.0);
  const Vec3 radial = rel - dot(rel, s.long_axis) * s.long_axis;
  const double rho2 = dot(radial, radial);

  auto inside = [](double t, double a, double r2, double b) { return (t * t) / (a * a) + r2 / (b * b) <= 1.0; };
  if (inside(t, s.r_long, rho2, s.r_short)) return LV;
  const double th = s.effective_thickness();
  if (inside(t, s.r_long + th, rho2, s.r_short + th)) return Myocardium;

  // RV ellipsoid, semi-axes along (long_axis, rv_offset_dir, long_axis x rv_offset_dir)
  const Vec3 off = radial - s.rv_scale * s.rv_offset_dir;
  const double a = dot(off, s.rv_offset_dir);
  const double b = dot(off, cross(s.long_axis, s.rv_offset_dir));
  const double rv_a = 0.6 * s.rv_scale;
  const double rv_b = 1.2 * (s.r_short + s.myo_thickness);
  const double rl = s.rv_long();
  if ((t * t) / (rl * rl) + (a * a) / (rv_a * rv_a) + (b * b) / (rv_b * rv_b) <= 1.0) return RV;
  return Background;
}

LabeledSlice render_slice(const PhantomSpec& spec, const ImagePlane& plane, std::uint64_t noise_stream) {
  validate(spec);
  geometry::validate(plane);
  LabeledSlice out;
  out.plane = plane;
  out.image.width = out.mask.width = plane.cols;
  out.image.height = out.mask.height = plane.rows;
  out.image.spacing_x = plane.col_spacing;
  out.image.spacing_y = plane.row_spacing;
  const std::size_t n = static_cast<std::size_t>(plane.cols) * plane.rows;
  out.image.values.resize(n);
  out.mask.labels.resize(n);
  Rng rng(mix_seed(spec.seed, noise_stream));
  for (int y = 0; y < plane.rows; ++y) {
    for (int x = 0; x < plane.cols; ++x) {
      const Label l = classify(spec, geometry::pixel_to_patient(plane, x, y));
      double v = kIntensityBackground;
      switch (l) {
        case LV: v = kIntensityLV; break;
        case Myocardium: v = kIntensityMyocardium; break;
        case RV: v = kIntensityRV; break;
        case Background: break;
      }
      const std::size_t i = static_cast<std::size_t>(y) * plane.cols + x;
      out.mask.labels[i] = l;
      out.image.values[i] = v + spec.noise_std * rng.normal();
    }
  }
  return out;
}

std::vector<ImagePlane> sax_planes(const PhantomSpec& spec, const StudyLayout& layout) {
  if (layout.n_sax < 4) throw std::invalid_argument("n_sax must be >= 4");
  if (layout.fov <= 0 || !(layout.spacing > 0)) throw std::invalid_argument("fov and spacing must be > 0");
  validate(spec);
  Rng rng(mix_seed(spec.seed, kLayoutStream));
  // RV towards the image left, rotated in-plane by up to 45 degrees
  const double psi = rng.uniform(-std::numbers::pi / 4, std::numbers::pi / 4);
  const Vec3 row_dir = normalized(rotate(-spec.rv_offset_dir, spec.long_axis, psi));
  const Vec3 col_dir = normalized(cross(spec.long_axis, row_dir));
  const double shift_x = rng.uniform(-8.0, 8.0);
  const double shift_y = rng.uniform(-8.0, 8.0);

  const double t0 = spec.mirrored ? -spec.r_long : 0.0;
  const double t1 = spec.r_long;
  std::vector<ImagePlane> planes;
  for (int i = 0; i < layout.n_sax; ++i) {
    const double t = t0 + (t1 - t0) * i / (layout.n_sax - 1);
    const Vec3 centre = spec.lv_center + t * spec.long_axis + shift_x * row_dir + shift_y * col_dir;
    planes.push_back(centred_plane(centre, row_dir, col_dir, layout));
  }
  return planes;
}

ImagePlane two_chamber_plane(const PhantomSpec& spec, const StudyLayout& layout) {
  // contains the long axis; normal is the RV direction
  const Vec3 row_dir = cross(spec.long_axis, spec.rv_offset_dir);
  const double mid = spec.mirrored ? 0.0 : 0.45 * spec.r_long;
  return centred_plane(spec.lv_center + mid * spec.long_axis, row_dir, spec.long_axis, layout);
}

ImagePlane four_chamber_plane(const PhantomSpec& spec, const StudyLayout& layout) {
  // spanned by the long axis and the direction towards the RV apex
  const double mid = spec.mirrored ? 0.0 : 0.45 * spec.r_long;
  return centred_plane(spec.lv_center + mid * spec.long_axis, -spec.rv_offset_dir, spec.long_axis, layout);
}

Study generate_study(const PhantomSpec& spec, const StudyLayout& layout, const std::string& study_id) {
  Study st;
  st.spec = spec;
  st.study_id = study_id;
  const auto planes = sax_planes(spec, layout);
  for (std::size_t i = 0; i < planes.size(); ++i) st.sax.push_back(render_slice(spec, planes[i], i + 1));
  st.lax_2c = render_slice(spec, two_chamber_plane(spec, layout), 1001);
  st.lax_4c = render_slice(spec, four_chamber_plane(spec, layout), 1002);

  auto& m = st.manifest;
  m.study_id = study_id;
  m.abnormal = spec.abnormal;
  formats::ManifestSeries sax{"sax", formats::SeriesRole::Stack, {}};
  for (std::size_t i = 0; i < st.sax.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sax_%02zu", i);
    sax.images.push_back({std::string(name) + ".pft", std::string(name) + "_mask.pft", st.sax[i].plane});
  }
  m.series.push_back(std::move(sax));
  m.series.push_back({"lax_2c", formats::SeriesRole::Intersecting, {{"lax_2c.pft", "lax_2c_mask.pft", st.lax_2c.plane}}});
  m.series.push_back({"lax_4c", formats::SeriesRole::Intersecting, {{"lax_4c.pft", "lax_4c_mask.pft", st.lax_4c.plane}}});
  return st;
}

void write_study(const Study& study, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& stack = study.manifest.stack_series();
  for (std::size_t i = 0; i < study.sax.size(); ++i) {
    formats::write_tensor(dir / stack.images[i].pixel_file, image_tensor(study.sax[i].image));
    formats::write_tensor(dir / *stack.images[i].mask_file, mask_tensor(study.sax[i].mask));
  }
  for (const auto* lax : {&study.lax_2c, &study.lax_4c}) {
    const std::string base = lax == &study.lax_2c ? "lax_2c" : "lax_4c";
    formats::write_tensor(dir / (base + ".pft"), image_tensor(lax->image));
    formats::write_tensor(dir / (base + "_mask.pft"), mask_tensor(lax->mask));
  }
  formats::save_manifest(dir / "manifest.json", study.manifest);
}

std::vector<PhantomSpec> dataset_specs(int n_studies, double abnormal_fraction, std::uint64_t seed,
                                       const DatasetOptions& options) {
  if (n_studies < 0) throw std::invalid_argument("n_studies must be >= 0");
  if (!(abnormal_fraction >= 0.0 && abnormal_fraction <= 1.0)) {
    throw std::invalid_argument("abnormal_fraction must lie in [0, 1]");
  }
  std::vector<PhantomSpec> specs;
  for (int i = 0; i < n_studies; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    PhantomSpec s;
    s.lv_center = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const double tilt = rng.uniform(0.0, std::numbers::pi / 6);
    const double azimuth = rng.uniform(0.0, 2 * std::numbers::pi);
    s.long_axis = normalized({std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth), std::cos(tilt)});
    s.r_long = 70.0 * rng.uniform(0.75, 1.25);
    s.r_short = 22.0 * rng.uniform(0.75, 1.25);
    s.myo_thickness = 8.0 * rng.uniform(0.9, 1.1);
    s.rv_scale = s.r_short + s.myo_thickness;
    const double rv_angle = rng.uniform(0.0, 2 * std::numbers::pi);
    s.rv_offset_dir = normalized(rotate(perpendicular(s.long_axis), s.long_axis, rv_angle));
    // re-orthogonalise against rounding
    s.rv_offset_dir = normalized(s.rv_offset_dir - dot(s.rv_offset_dir, s.long_axis) * s.long_axis);
    s.noise_std = options.noise_std;
    s.mirrored = options.mirrored;
    s.seed = mix_seed(seed ^ 0xC0FFEEull, static_cast<std::uint64_t>(i));
    specs.push_back(s);
  }
  const auto n_abnormal = static_cast<int>(std::lround(n_studies * abnormal_fraction));
  std::vector<int> order(static_cast<std::size_t>(n_studies));
  for (int i = 0; i < n_studies; ++i) order[i] = i;
  Rng pick(mix_seed(seed, 0xAB40));
  pick.shuffle(order.begin(), order.end());
  for (int k = 0; k < n_abnormal; ++k) specs[order[k]].abnormal = true;
  return specs;
}

std::vector<Study> generate_dataset(int n_studies, double abnormal_fraction, std::uint64_t seed,
                                    const DatasetOptions& options) {
  std::vector<Study> out;
  const auto specs = dataset_specs(n_studies, abnormal_fraction, seed, options);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%04zu", i);
    out.push_back(generate_study(specs[i], options.layout, id));
  }
  return out;
}

}  // namespace viewssl::phantom
