#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <set>

#include "viewssl/geometry.hpp"
#include "viewssl/phantom.hpp"
#include "viewssl/pipeline.hpp"

using namespace viewssl;
using namespace viewssl::phantom;
using geometry::dot;

TEST_CASE("classify: canonical phantom regions") {
  const PhantomSpec s;
  CHECK(classify(s, {0, 0, 10}) == LV);
  CHECK(classify(s, {s.r_short + 0.5 * s.myo_thickness, 0, 10}) == Myocardium);
  CHECK(classify(s, {0, 100, 10}) == Background);
  CHECK(classify(s, {0, 0, -5}) == Background);  // below the base plane
  CHECK(classify(s, s.lv_apex() + Vec3{0, 0, 1}) != LV);
}

TEST_CASE("abnormal studies differ only in the myocardium") {
  PhantomSpec normal;
  normal.noise_std = 0;
  PhantomSpec abnormal = normal;
  abnormal.abnormal = true;
  const auto planes = sax_planes(normal, {});
  for (const auto& plane : planes) {
    const auto a = render_slice(normal, plane), b = render_slice(abnormal, plane);
    for (std::size_t i = 0; i < a.mask.labels.size(); ++i) {
      if (a.mask.labels[i] != b.mask.labels[i]) {
        // only the myocardial shell grows outward
        CHECK(b.mask.labels[i] == Myocardium);
        CHECK(a.mask.labels[i] != LV);
      }
    }
  }
}

TEST_CASE("study structure and geometry") {
  const auto specs = dataset_specs(6, 0.5, 11);
  for (const auto& spec : specs) {
    const StudyLayout layout;
    const auto study = generate_study(spec, layout, "s");
    REQUIRE(study.sax.size() == static_cast<std::size_t>(layout.n_sax));
    CHECK(study.manifest.series.size() == 3);
    CHECK(study.manifest.stack_series().images.size() == study.sax.size());
    CHECK(study.manifest.intersecting_series().size() == 2);
    CHECK(study.manifest.abnormal == spec.abnormal);

    // every SAX plane is perpendicular to the long axis, base to apex
    double prev = -1e300;
    for (const auto& slice : study.sax) {
      CHECK(std::abs(std::abs(dot(geometry::plane_normal(slice.plane), spec.long_axis)) - 1.0) < 1e-9);
      const double along = dot(slice.plane.origin - spec.lv_center, spec.long_axis);
      CHECK(along > prev);
      prev = along;
    }
    // both long-axis planes contain the LV axis
    for (const auto* lax : {&study.lax_2c, &study.lax_4c}) {
      CHECK(std::abs(geometry::distance_to_plane(lax->plane, spec.lv_center)) < 1e-9);
      CHECK(std::abs(dot(geometry::plane_normal(lax->plane), spec.long_axis)) < 1e-9);
    }
    // the 2C/4C intersection line on a SAX slice passes through the LV axis
    const auto& mid = study.sax[study.sax.size() / 2];
    const auto line = geometry::intersection_line_in_pixels(mid.plane, study.lax_2c.plane);
    const double t = dot(mid.plane.origin - spec.lv_center, spec.long_axis);
    const Vec3 axis_point = spec.lv_center + t * spec.long_axis;
    const Vec3 rel = axis_point - mid.plane.origin;
    const double col = dot(rel, mid.plane.row_dir) / mid.plane.col_spacing;
    const double row = dot(rel, mid.plane.col_dir) / mid.plane.row_spacing;
    CHECK(std::abs(line.signed_distance(col, row)) < 1.0);
    // which is also inside the cavity on the rendered mask
    const int ic = static_cast<int>(std::lround(col)), ir = static_cast<int>(std::lround(row));
    REQUIRE(ic >= 0);
    REQUIRE(ir >= 0);
    REQUIRE(ic < mid.mask.width);
    REQUIRE(ir < mid.mask.height);
    CHECK(mid.mask.labels[static_cast<std::size_t>(ir) * mid.mask.width + ic] == LV);
  }
}

TEST_CASE("masks use known labels and the image follows them") {
  PhantomSpec s;
  s.noise_std = 0;
  const auto study = generate_study(s, {}, "s");
  std::set<int> seen;
  for (const auto& slice : study.sax) {
    REQUIRE(slice.mask.labels.size() == slice.image.values.size());
    for (std::size_t i = 0; i < slice.mask.labels.size(); ++i) {
      const int label = slice.mask.labels[i];
      REQUIRE(label < kNumLabels);
      seen.insert(label);
      const double expected[] = {kIntensityBackground, kIntensityLV, kIntensityMyocardium, kIntensityRV};
      CHECK(slice.image.values[i] == doctest::Approx(expected[label]));
    }
  }
  CHECK(seen.size() == static_cast<std::size_t>(kNumLabels));
}

TEST_CASE("dataset: exact abnormal count and determinism") {
  for (int n : {0, 1, 7, 40}) {
    for (double f : {0.0, 0.3, 0.5, 1.0}) {
      const auto specs = dataset_specs(n, f, 5);
      int abnormal = 0;
      for (const auto& s : specs) abnormal += s.abnormal;
      CHECK(abnormal == std::lround(n * f));
    }
  }
  const auto a = generate_dataset(3, 0.5, 9), b = generate_dataset(3, 0.5, 9), c = generate_dataset(3, 0.5, 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].manifest == b[i].manifest);
    for (std::size_t k = 0; k < a[i].sax.size(); ++k) CHECK(a[i].sax[k].image.values == b[i].sax[k].image.values);
  }
  CHECK(a[0].sax[0].image.values != c[0].sax[0].image.values);
  // study geometry depends on (seed, index), not on the dataset size
  const auto small = dataset_specs(2, 0.0, 9), large = dataset_specs(5, 0.0, 9);
  CHECK(small[1].lv_center == large[1].lv_center);
  CHECK(small[1].long_axis == large[1].long_axis);
  CHECK_THROWS_AS(dataset_specs(3, 1.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(dataset_specs(-1, 0.5, 1), std::invalid_argument);
}

TEST_CASE("written studies load back and produce samples") {
  const auto dir = std::filesystem::temp_directory_path() / "viewssl_phantom_test";
  std::filesystem::remove_all(dir);
  const auto study = generate_dataset(1, 0.0, 3).front();
  write_study(study, dir);
  const auto manifest = formats::load_manifest(dir / "manifest.json");
  CHECK(manifest == study.manifest);
  const auto from_disk = pipeline::make_samples(pipeline::study_input(dir / "manifest.json"), {});
  const auto in_memory = pipeline::make_samples(pipeline::study_input(study), {});
  REQUIRE(from_disk.size() == in_memory.size());
  const int n = static_cast<int>(in_memory.size());
  for (int i = 0; i < n; ++i) {
    CHECK(from_disk[i].lines.size() == 2);
    // linear mapping over a sorted stack: (i - 1) / (n - 1) in 1-based terms
    CHECK(std::abs(in_memory[i].location - static_cast<double>(i) / (n - 1)) < 1e-9);
    CHECK(std::abs(from_disk[i].location - in_memory[i].location) < 1e-12);
    for (std::size_t k = 0; k < from_disk[i].image.size(); ++k) {
      CHECK(std::abs(from_disk[i].image[k] - in_memory[i].image[k]) < 1e-5f);
    }
    CHECK(from_disk[i].mask == in_memory[i].mask);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("larger dataset smoke") {
  DatasetOptions options;
  options.layout.n_sax = 6;
  options.layout.fov = 48;
  const auto specs = dataset_specs(256, 0.5, 21, options);
  int generated = 0;
  for (std::size_t i = 0; i < specs.size(); i += 8) {
    const auto study = generate_study(specs[i], options.layout, "s");
    const auto samples = pipeline::make_samples(pipeline::study_input(study), {});
    CHECK(samples.size() == 6);
    for (const auto& s : samples) {
      CHECK(s.location >= 0.0);
      CHECK(s.location <= 1.0);
      for (const float v : s.image) REQUIRE(std::isfinite(v));
    }
    ++generated;
  }
  CHECK(generated == 32);
}

TEST_CASE("render_slice: analytic cross-sections and determinism") {
  PhantomSpec s;
  s.long_axis = geometry::normalized({0.2, -0.1, 1.0});
  s.rv_offset_dir = geometry::normalized(geometry::cross(s.long_axis, {0, 0, 1}));
  s.lv_center = {3, -4, 5};
  s.seed = 77;
  const StudyLayout layout{8, 64, 1.5};
  // base plane: SAX slice 0 passes through lv_center
  const auto base = sax_planes(s, layout).front();
  REQUIRE(std::abs(geometry::distance_to_plane(base, s.lv_center)) < 1e-9);
  const auto slice = render_slice(s, base);
  for (int y = 0; y < base.rows; ++y) {
    for (int x = 0; x < base.cols; ++x) {
      const double r = geometry::norm(geometry::pixel_to_patient(base, x, y) - s.lv_center);
      const bool lv = slice.mask.labels[static_cast<std::size_t>(y) * base.cols + x] == LV;
      if (r < s.r_short - layout.spacing) CHECK(lv);
      if (r > s.r_short + layout.spacing) CHECK_FALSE(lv);
    }
  }
  CHECK(render_slice(s, base).image.values == slice.image.values);
  CHECK(render_slice(s, base, 1).image.values != slice.image.values);

  // a plane 2 r_long beyond the apex sees only background
  ImagePlane far = base;
  far.origin = far.origin + 2 * s.r_long * s.long_axis;
  for (auto l : render_slice(s, far).mask.labels) CHECK(l == Background);

  // abnormal twin: identical blood pool
  PhantomSpec thick = s;
  thick.abnormal = true;
  for (const auto& plane : sax_planes(s, layout)) {
    const auto a = render_slice(s, plane).mask, b = render_slice(thick, plane).mask;
    for (std::size_t i = 0; i < a.labels.size(); ++i) CHECK((a.labels[i] == LV) == (b.labels[i] == LV));
  }
}
