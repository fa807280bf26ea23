#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "viewssl/geometry.hpp"
#include "viewssl/manifest.hpp"
#include "viewssl/preprocess.hpp"

/// Synthetic cardiac-like studies with analytically known geometry.
///
/// The left ventricle (LV) is a half-ellipsoid whose base lies in the plane
/// through `lv_center` perpendicular to `long_axis`; the apex sits at
/// lv_center + r_long * long_axis. The myocardium is the shell between the
/// cavity and an ellipsoid inflated by the wall thickness. The right
/// ventricle (RV) is an offset half-ellipsoid minus the LV shell, which
/// leaves a crescent hugging the septum.
namespace viewssl::phantom {

using geometry::ImagePlane;
using geometry::Vec3;

enum Label : std::uint8_t { Background = 0, LV = 1, Myocardium = 2, RV = 3 };
inline constexpr int kNumLabels = 4;

inline constexpr double kIntensityBackground = 0.1;
inline constexpr double kIntensityLV = 0.9;
inline constexpr double kIntensityMyocardium = 0.5;
inline constexpr double kIntensityRV = 0.8;
inline constexpr double kAbnormalThicknessFactor = 1.8;

struct PhantomSpec {
  Vec3 lv_center{0, 0, 0};
  Vec3 long_axis{0, 0, 1};
  double r_long = 70.0;
  double r_short = 22.0;
  double myo_thickness = 8.0;
  Vec3 rv_offset_dir{1, 0, 0};
  double rv_scale = 30.0;
  bool abnormal = false;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  /// Mirror-symmetric variant: the solids are reflected through the base
  /// plane, producing a stack that looks alike on both sides of its centre.
  bool mirrored = false;

  double effective_thickness() const { return abnormal ? myo_thickness * kAbnormalThicknessFactor : myo_thickness; }
  double rv_long() const { return 0.75 * r_long; }
  Vec3 rv_center() const { return lv_center + rv_scale * rv_offset_dir; }
  Vec3 rv_apex() const { return rv_center() + rv_long() * long_axis; }
  Vec3 lv_apex() const { return lv_center + r_long * long_axis; }
};

void validate(const PhantomSpec& spec);

struct LabeledSlice {
  formats::GrayImage image;
  formats::LabelImage mask;
  ImagePlane plane;
};

/// Noiseless label of a patient-space point.
Label classify(const PhantomSpec& spec, Vec3 p);

/// `noise_stream` selects an independent noise sequence for the same seed.
LabeledSlice render_slice(const PhantomSpec& spec, const ImagePlane& plane, std::uint64_t noise_stream = 0);

struct StudyLayout {
  int n_sax = 8;
  int fov = 64;
  double spacing = 2.0;
};

struct Study {
  PhantomSpec spec;
  std::string study_id;
  std::vector<LabeledSlice> sax;      ///< base to apex
  LabeledSlice lax_2c;
  LabeledSlice lax_4c;
  formats::StudyManifest manifest;    ///< file names relative to the study directory
};

/// SAX planes evenly spanning base to apex (slice 0 at the base).
std::vector<ImagePlane> sax_planes(const PhantomSpec& spec, const StudyLayout& layout);
ImagePlane two_chamber_plane(const PhantomSpec& spec, const StudyLayout& layout);
ImagePlane four_chamber_plane(const PhantomSpec& spec, const StudyLayout& layout);

Study generate_study(const PhantomSpec& spec, const StudyLayout& layout, const std::string& study_id = "study");

/// Writes images/masks as tensor files plus manifest.json into `dir`.
void write_study(const Study& study, const std::filesystem::path& dir);

struct DatasetOptions {
  StudyLayout layout;
  double noise_std = 0.05;
  bool mirrored = false;
};

/// Randomised specs; exactly round(n * abnormal_fraction) abnormal; every
/// study is a function of (seed, index) only.
std::vector<PhantomSpec> dataset_specs(int n_studies, double abnormal_fraction, std::uint64_t seed,
                                       const DatasetOptions& options = {});

std::vector<Study> generate_dataset(int n_studies, double abnormal_fraction, std::uint64_t seed,
                                    const DatasetOptions& options = {});

}  // namespace viewssl::phantom
