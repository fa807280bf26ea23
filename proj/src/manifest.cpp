#include "viewssl/manifest.hpp"

#include <fstream>
#include "json.hpp"
#include <sstream>

namespace viewssl::formats {

using nlohmann::json;

namespace {

const json& member(const json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "/" + key, "missing required field");
  return *it;
}

std::string string_at(const json& obj, const std::string& path, const char* key) {
  const auto& v = member(obj, path, key);
  if (!v.is_string()) throw SchemaError(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

double number_at(const json& obj, const std::string& path, const char* key) {
  const auto& v = member(obj, path, key);
  if (!v.is_number()) throw SchemaError(path + "/" + key, "expected a number");
  return v.get<double>();
}

int int_at(const json& obj, const std::string& path, const char* key) {
  const auto& v = member(obj, path, key);
  if (!v.is_number_integer()) throw SchemaError(path + "/" + key, "expected an integer");
  const auto i = v.get<long long>();
  if (i <= 0 || i > 1 << 20) throw SchemaError(path + "/" + key, "must be a positive pixel count");
  return static_cast<int>(i);
}

geometry::Vec3 vec_at(const json& obj, const std::string& path, const char* key) {
  const auto& v = member(obj, path, key);
  const std::string p = path + "/" + key;
  if (!v.is_array() || v.size() != 3) throw SchemaError(p, "expected an array of 3 numbers");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw SchemaError(p + "/" + std::to_string(i), "expected a number");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

json vec_json(geometry::Vec3 v) { return json::array({v.x, v.y, v.z}); }

}  // namespace

std::string to_string(SeriesRole r) { return r == SeriesRole::Stack ? "Stack" : "Intersecting"; }

const ManifestSeries& StudyManifest::stack_series() const {
  for (const auto& s : series) {
    if (s.role == SeriesRole::Stack) return s;
  }
  throw SchemaError("/series", "study " + study_id + " has no Stack series");
}

std::vector<const ManifestSeries*> StudyManifest::intersecting_series() const {
  std::vector<const ManifestSeries*> out;
  for (const auto& s : series) {
    if (s.role == SeriesRole::Intersecting) out.push_back(&s);
  }
  return out;
}

StudyManifest parse_manifest(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("invalid JSON: ") + e.what());
  }
  StudyManifest m;
  m.study_id = string_at(doc, "", "study_id");
  if (auto it = doc.find("abnormal"); it != doc.end()) {
    if (!it->is_boolean()) throw SchemaError("/abnormal", "expected a boolean");
    m.abnormal = it->get<bool>();
  }
  const auto& series = member(doc, "", "series");
  if (!series.is_array()) throw SchemaError("/series", "expected an array");
  int stacks = 0;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const std::string sp = "/series/" + std::to_string(si);
    const auto& sj = series[si];
    ManifestSeries s;
    s.series_id = string_at(sj, sp, "series_id");
    const std::string role = string_at(sj, sp, "role");
    if (role == "Stack") {
      s.role = SeriesRole::Stack;
      ++stacks;
    } else if (role == "Intersecting") {
      s.role = SeriesRole::Intersecting;
    } else {
      throw SchemaError(sp + "/role", "expected \"Stack\" or \"Intersecting\", got \"" + role + "\"");
    }
    const auto& images = member(sj, sp, "images");
    if (!images.is_array()) throw SchemaError(sp + "/images", "expected an array");
    for (std::size_t ii = 0; ii < images.size(); ++ii) {
      const std::string ip = sp + "/images/" + std::to_string(ii);
      const auto& ij = images[ii];
      ManifestImage img;
      img.pixel_file = string_at(ij, ip, "pixel_file");
      if (ij.is_object() && ij.contains("mask_file")) img.mask_file = string_at(ij, ip, "mask_file");
      const std::string pp = ip + "/plane";
      const auto& pj = member(ij, ip, "plane");
      auto& p = img.plane;
      p.origin = vec_at(pj, pp, "origin");
      p.row_dir = vec_at(pj, pp, "row_dir");
      p.col_dir = vec_at(pj, pp, "col_dir");
      p.col_spacing = number_at(pj, pp, "col_spacing");
      p.row_spacing = number_at(pj, pp, "row_spacing");
      p.cols = int_at(pj, pp, "cols");
      p.rows = int_at(pj, pp, "rows");
      if (!geometry::is_valid(p)) {
        try {
          geometry::validate(p);
        } catch (const geometry::GeometryError& e) {
          throw geometry::GeometryError(e.kind(), pp + ": " + e.what());
        }
      }
      s.images.push_back(std::move(img));
    }
    m.series.push_back(std::move(s));
  }
  if (stacks != 1) throw SchemaError("/series", "expected exactly one Stack series, found " + std::to_string(stacks));
  return m;
}

std::string write_manifest(const StudyManifest& m) {
  json doc;
  doc["study_id"] = m.study_id;
  if (m.abnormal) doc["abnormal"] = *m.abnormal;
  doc["series"] = json::array();
  for (const auto& s : m.series) {
    json sj;
    sj["series_id"] = s.series_id;
    sj["role"] = to_string(s.role);
    sj["images"] = json::array();
    for (const auto& img : s.images) {
      json ij;
      ij["pixel_file"] = img.pixel_file;
      if (img.mask_file) ij["mask_file"] = *img.mask_file;
      const auto& p = img.plane;
      ij["plane"] = {{"origin", vec_json(p.origin)},   {"row_dir", vec_json(p.row_dir)},
                     {"col_dir", vec_json(p.col_dir)}, {"col_spacing", p.col_spacing},
                     {"row_spacing", p.row_spacing},   {"cols", p.cols},
                     {"rows", p.rows}};
      sj["images"].push_back(std::move(ij));
    }
    doc["series"].push_back(std::move(sj));
  }
  return doc.dump(2) + "\n";
}

StudyManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("", "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  StudyManifest m = parse_manifest(ss.str());
  const auto base = path.parent_path();
  for (std::size_t si = 0; si < m.series.size(); ++si) {
    for (std::size_t ii = 0; ii < m.series[si].images.size(); ++ii) {
      const auto& img = m.series[si].images[ii];
      const std::string ip = "/series/" + std::to_string(si) + "/images/" + std::to_string(ii);
      if (!std::filesystem::exists(base / img.pixel_file)) {
        throw SchemaError(ip + "/pixel_file", "file not found: " + (base / img.pixel_file).string());
      }
      if (img.mask_file && !std::filesystem::exists(base / *img.mask_file)) {
        throw SchemaError(ip + "/mask_file", "file not found: " + (base / *img.mask_file).string());
      }
    }
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const StudyManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw SchemaError("", "cannot write manifest " + path.string());
  out << write_manifest(m);
}

}  // namespace viewssl::formats
