#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "viewssl/geometry.hpp"

/// Study manifest: the canonical ingestion format.
///
/// JSON schema (see docs/formats.md):
/// {
///   "study_id": string,
///   "abnormal": bool                      (optional, phantom ground truth)
///   "series": [{
///     "series_id": string,
///     "role": "Stack" | "Intersecting",
///     "images": [{
///       "pixel_file": string,             (relative to the manifest)
///       "mask_file": string,              (optional)
///       "plane": {"origin": [x,y,z], "row_dir": [x,y,z], "col_dir": [x,y,z],
///                 "col_spacing": mm, "row_spacing": mm, "cols": int, "rows": int}
///     }]
///   }]
/// }
namespace viewssl::formats {

enum class SeriesRole { Stack, Intersecting };

struct ManifestImage {
  std::string pixel_file;
  std::optional<std::string> mask_file;
  geometry::ImagePlane plane;
  friend bool operator==(const ManifestImage&, const ManifestImage&) = default;
};

struct ManifestSeries {
  std::string series_id;
  SeriesRole role = SeriesRole::Stack;
  std::vector<ManifestImage> images;
  friend bool operator==(const ManifestSeries&, const ManifestSeries&) = default;
};

struct StudyManifest {
  std::string study_id;
  std::optional<bool> abnormal;
  std::vector<ManifestSeries> series;

  const ManifestSeries& stack_series() const;
  std::vector<const ManifestSeries*> intersecting_series() const;

  friend bool operator==(const StudyManifest&, const StudyManifest&) = default;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string pointer, const std::string& what)
      : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  /// JSON pointer of the offending node, e.g. "/series/0/role".
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// Throws SchemaError, or geometry::GeometryError for invalid planes.
StudyManifest parse_manifest(const std::string& text);
std::string write_manifest(const StudyManifest& m);

/// Reads a manifest file and checks that every referenced file exists
/// (relative paths resolve against the manifest's directory).
StudyManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const StudyManifest& m);

std::string to_string(SeriesRole r);

}  // namespace viewssl::formats
