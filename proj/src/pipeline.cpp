#include "viewssl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "viewssl/nn/checkpoint.hpp"
#include "viewssl/preprocess.hpp"
#include "viewssl/random.hpp"
#include "viewssl/supervision.hpp"
#include "viewssl/tensor_file.hpp"

namespace viewssl::pipeline {

using nlohmann::json;
using geometry::GeometryError;

namespace {

constexpr std::uint64_t kFinetuneDataStream = 0xF17E;

formats::GrayImage gray_from_tensor(const formats::TensorData& t, const geometry::ImagePlane& plane,
                                    const std::string& what) {
  if (t.shape.size() != 2 || t.shape[0] != static_cast<std::uint32_t>(plane.rows) ||
      t.shape[1] != static_cast<std::uint32_t>(plane.cols)) {
    throw formats::TensorFileError(formats::TensorFileError::Kind::ShapeMismatch,
                                   what + ": pixel tensor shape does not match the plane's rows x cols");
  }
  formats::GrayImage g;
  g.width = plane.cols;
  g.height = plane.rows;
  g.spacing_x = plane.col_spacing;
  g.spacing_y = plane.row_spacing;
  std::visit([&](const auto& v) { g.values.assign(v.begin(), v.end()); }, t.values);
  return g;
}

formats::LabelImage labels_from_tensor(const formats::TensorData& t, const geometry::ImagePlane& plane,
                                       const std::string& what) {
  if (t.dtype() != formats::DType::U8 || t.shape.size() != 2 ||
      t.shape[0] != static_cast<std::uint32_t>(plane.rows) || t.shape[1] != static_cast<std::uint32_t>(plane.cols)) {
    throw formats::TensorFileError(formats::TensorFileError::Kind::ShapeMismatch,
                                   what + ": mask must be a u8 tensor of rows x cols");
  }
  return {plane.cols, plane.rows, std::get<std::vector<std::uint8_t>>(t.values)};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<nn::Sample> study_samples(const phantom::Study& s, const LoadOptions& load) {
  return make_samples(study_input(s), load);
}

void append_history(std::ofstream& out, const std::string& run, const nn::TrainResult& r) {
  for (const auto& e : r.history) {
    out << run << ',' << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << ','
        << (e.epoch == r.best_epoch ? 1 : 0) << '\n';
  }
}

std::string history_json(const nn::TrainConfig& c, const nn::TrainResult& r) {
  json j;
  j["config"] = json::parse(train_config_to_json(c));
  j["best_epoch"] = r.best_epoch;
  json h = json::array();
  for (const auto& e : r.history) h.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  j["history"] = h;
  return j.dump();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

// Strict JSON field readers; every failure names the key.
template <class T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) {
      throw ConfigError(where + ": unknown key '" + k + "'");
    }
  }
}

nn::TrainConfig train_config_from(const json& j, nn::TrainConfig c, const std::string& where) {
  reject_unknown(j, {"lr", "halve_every", "epochs", "batch_size", "seed", "l1_reg", "weight_decay", "loss_mode",
                     "augment", "max_rotation_deg", "sigma", "dense_channels"},
                 where);
  read_field(j, "lr", c.lr, where);
  read_field(j, "halve_every", c.halve_every, where);
  read_field(j, "epochs", c.epochs, where);
  read_field(j, "batch_size", c.batch_size, where);
  read_field(j, "seed", c.seed, where);
  read_field(j, "l1_reg", c.l1_reg, where);
  read_field(j, "weight_decay", c.weight_decay, where);
  read_field(j, "augment", c.augment, where);
  read_field(j, "max_rotation_deg", c.max_rotation_deg, where);
  read_field(j, "sigma", c.sigma, where);
  read_field(j, "dense_channels", c.dense_channels, where);
  if (j.contains("loss_mode")) {
    std::string m;
    read_field(j, "loss_mode", m, where);
    try {
      c.loss_mode = nn::parse_loss_mode(m);
    } catch (const nn::NnError& e) {
      throw ConfigError(where + ".loss_mode: " + e.what());
    }
  }
  try {
    c.validate();
  } catch (const nn::NnError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

json train_config_json(const nn::TrainConfig& c) {
  return {{"lr", c.lr},
          {"halve_every", c.halve_every},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"l1_reg", c.l1_reg},
          {"weight_decay", c.weight_decay},
          {"loss_mode", nn::to_string(c.loss_mode)},
          {"augment", c.augment},
          {"max_rotation_deg", c.max_rotation_deg},
          {"sigma", c.sigma},
          {"dense_channels", c.dense_channels}};
}

}  // namespace

StudyInput study_input(const phantom::Study& study) {
  StudyInput in;
  in.study_id = study.study_id;
  in.abnormal = study.spec.abnormal;
  for (const auto& s : study.sax) {
    in.images.push_back(s.image);
    in.masks.emplace_back(s.mask);
    in.planes.push_back(s.plane);
  }
  in.intersecting_ids = {"lax_2c", "lax_4c"};
  in.intersecting = {study.lax_2c.plane, study.lax_4c.plane};
  return in;
}

StudyInput study_input(const fs::path& manifest_path) {
  const auto m = formats::load_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  StudyInput in;
  in.study_id = m.study_id;
  in.abnormal = m.abnormal;
  const auto& stack = m.stack_series();
  for (std::size_t i = 0; i < stack.images.size(); ++i) {
    const auto& img = stack.images[i];
    const std::string what = m.study_id + "/" + stack.series_id + "/" + std::to_string(i);
    in.images.push_back(gray_from_tensor(formats::read_tensor(dir / img.pixel_file), img.plane, what));
    if (img.mask_file) {
      in.masks.emplace_back(labels_from_tensor(formats::read_tensor(dir / *img.mask_file), img.plane, what));
    } else {
      in.masks.emplace_back(std::nullopt);
    }
    in.planes.push_back(img.plane);
  }
  for (const auto* s : m.intersecting_series()) {
    if (s->images.empty()) continue;
    in.intersecting_ids.push_back(s->series_id);
    in.intersecting.push_back(s->images.front().plane);
  }
  return in;
}

std::vector<nn::Sample> make_samples(const StudyInput& in, const LoadOptions& options) {
  const auto stack = geometry::build_stack(in.planes);
  const auto locations = geometry::relative_locations(stack, options.mapping);
  std::vector<nn::Sample> out(in.planes.size());
  std::vector<bool> used(in.planes.size(), false);
  for (std::size_t i = 0; i < in.planes.size(); ++i) {
    // stack order -> input index; duplicates are rejected by build_stack
    std::size_t pos = 0;
    while (pos < stack.slices.size() && (used[pos] || !(stack.slices[pos] == in.planes[i]))) ++pos;
    used[pos] = true;

    const auto pre = formats::preprocess_image(in.images[i], options.target_spacing, options.target_size);
    nn::Sample& s = out[pos];
    s.study_id = in.study_id;
    s.slice_index = static_cast<int>(pos);
    s.location = locations[pos];
    s.label = in.abnormal.value_or(false) ? 1 : 0;
    s.image.assign(pre.image.values.begin(), pre.image.values.end());
    for (std::size_t k = 0; k < in.intersecting.size(); ++k) {
      try {
        s.lines.push_back(supervision::transform_line(
            geometry::intersection_line_in_pixels(in.planes[i], in.intersecting[k]), pre.transform));
      } catch (const GeometryError& e) {
        throw GeometryError(e.kind(), "study " + in.study_id + ", series " + in.intersecting_ids[k] + ": " + e.what());
      }
    }
    if (in.masks[i]) {
      s.mask = formats::preprocess_labels(*in.masks[i], in.images[i].spacing_x, in.images[i].spacing_y,
                                          options.target_spacing, options.target_size)
                   .labels;
    }
  }
  return out;
}

nn::Dataset split_dataset(const std::vector<std::vector<nn::Sample>>& studies, std::size_t n_train, int size) {
  nn::Dataset d;
  d.height = d.width = size;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    auto& dst = i < n_train ? d.train : d.val;
    dst.insert(dst.end(), studies[i].begin(), studies[i].end());
  }
  return d;
}

nn::Dataset phantom_dataset(int n_train, int n_val, double abnormal_fraction, std::uint64_t seed,
                            const phantom::DatasetOptions& phantom_options, const LoadOptions& load) {
  const auto studies = phantom::generate_dataset(n_train + n_val, abnormal_fraction, seed, phantom_options);
  std::vector<std::vector<nn::Sample>> samples;
  samples.reserve(studies.size());
  for (const auto& s : studies) samples.push_back(study_samples(s, load));
  return split_dataset(samples, static_cast<std::size_t>(n_train), load.target_size);
}

PretextEval evaluate_pretext(const nn::ModelParams<float>& p, const std::vector<nn::Sample>& samples, int size,
                             bool location, bool lines) {
  PretextEval ev;
  double err_sum = 0.0;
  for (const auto& s : samples) {
    nn::Cache<float> cache;
    nn::forward<float>(p, s.image, size, size, {lines, location}, cache);
    if (location) {
      ev.predicted.push_back(cache.scalar);
      ev.truth.push_back(s.location);
    }
    if (!lines) continue;
    const std::size_t n = static_cast<std::size_t>(size) * size;
    for (std::size_t k = 0; k < s.lines.size() && static_cast<int>(k) < p.dense_channels; ++k) {
      if (supervision::misses_grid(s.lines[k], size, size)) continue;
      const std::vector<double> channel(cache.dense.begin() + k * n, cache.dense.begin() + (k + 1) * n);
      const auto fitted = metrics::fit_ridge_line(channel, size, size);
      if (!fitted) {
        ++ev.lines_unfitted;
        continue;
      }
      err_sum += metrics::line_localization_error(*fitted, s.lines[k], size, size);
      ++ev.lines_evaluated;
    }
  }
  if (location && ev.predicted.size() >= 2) ev.location = metrics::regression_report(ev.predicted, ev.truth);
  if (ev.lines_evaluated > 0) ev.line_error_px = err_sum / ev.lines_evaluated;
  return ev;
}

SegEval evaluate_segmentation(const nn::ModelParams<float>& p, const std::vector<nn::Sample>& samples, int size,
                              double spacing_mm) {
  SegEval ev;
  std::map<std::string, std::pair<std::vector<metrics::Mask2D>, std::vector<metrics::Mask2D>>> by_study;
  std::vector<std::string> order;
  for (const auto& s : samples) {
    if (s.mask.empty()) throw nn::NnError(nn::NnError::Kind::ShapeError, "sample " + s.study_id + " has no mask");
    const auto pred = nn::predict_segmentation(p, s, size, size);
    auto [it, inserted] = by_study.try_emplace(s.study_id);
    if (inserted) order.push_back(s.study_id);
    it->second.first.push_back(metrics::label_mask(pred, size, size, phantom::LV));
    it->second.second.push_back(metrics::label_mask(s.mask, size, size, phantom::LV));
  }
  if (order.empty()) throw nn::NnError(nn::NnError::Kind::EmptyDataset, "no samples to evaluate");
  double dice_sum = 0.0, assd_sum = 0.0;
  int assd_n = 0;
  for (const auto& id : order) {
    const auto& [pred, truth] = by_study.at(id);
    dice_sum += metrics::dice(std::span<const metrics::Mask2D>(pred), std::span<const metrics::Mask2D>(truth));
    try {
      assd_sum += metrics::assd_volume(pred, truth, spacing_mm, spacing_mm).assd;
      ++assd_n;
    } catch (const metrics::MetricsError&) {
      ++ev.assd_undefined;
    }
  }
  ev.lv_dice = dice_sum / static_cast<double>(order.size());
  if (assd_n > 0) ev.lv_assd_mm = assd_sum / assd_n;
  return ev;
}

double evaluate_classification(const nn::ModelParams<float>& p, const std::vector<nn::Sample>& samples, int size) {
  std::map<std::string, std::pair<double, int>> acc;
  std::map<std::string, int> labels;
  for (const auto& s : samples) {
    auto& a = acc[s.study_id];
    a.first += nn::predict_probability(p, s, size, size);
    ++a.second;
    labels[s.study_id] = s.label;
  }
  std::vector<double> scores;
  std::vector<int> y;
  for (const auto& [id, a] : acc) {
    scores.push_back(a.first / a.second);
    y.push_back(labels.at(id));
  }
  return metrics::roc_auc(scores, y);
}

void write_pgm(const fs::path& path, const std::vector<float>& values, int width, int height) {
  if (values.size() != static_cast<std::size_t>(width) * height) throw Error("write_pgm: size mismatch");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (float v : values) {
    const double t = range > 0 ? (v - lo) / range : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
  if (!out) throw Error("cannot write " + path.string());
}

void write_targets(const fs::path& manifest_path, const fs::path& out_dir, const TargetsOptions& options) {
  const supervision::GaussianSigma sigma(options.sigma);
  const auto m = formats::load_manifest(manifest_path);
  const auto& stack_series = m.stack_series();
  std::vector<geometry::ImagePlane> planes;
  for (const auto& img : stack_series.images) planes.push_back(img.plane);
  std::vector<geometry::ImagePlane> others;
  std::vector<std::string> other_ids;
  for (const auto* s : m.intersecting_series()) {
    if (s->images.empty()) continue;
    others.push_back(s->images.front().plane);
    other_ids.push_back(s->series_id);
  }

  geometry::SliceStack stack;
  try {
    stack = geometry::build_stack(planes);
  } catch (const GeometryError& e) {
    throw GeometryError(e.kind(), "study " + m.study_id + ", series " + stack_series.series_id + ": " + e.what());
  }
  const auto locations = geometry::relative_locations(stack, options.mapping);
  // validate every pair before writing anything
  for (const auto& plane : stack.slices) {
    for (std::size_t k = 0; k < others.size(); ++k) {
      try {
        (void)geometry::intersection_line_in_pixels(plane, others[k]);
      } catch (const GeometryError& e) {
        throw GeometryError(e.kind(), "study " + m.study_id + ", series " + other_ids[k] + ": " + e.what());
      }
    }
  }

  const bool dir_existed = fs::exists(out_dir);
  std::vector<fs::path> created;
  try {
    fs::create_directories(out_dir);
    std::ostringstream index;
    index << "slice_id,location,heatmap_path\n";
    for (std::size_t j = 0; j < stack.slices.size(); ++j) {
      const auto targets = supervision::study_targets(stack.slices[j], others, sigma);
      const auto& hm = targets.heatmap;
      std::vector<float> values(hm.values.begin(), hm.values.end());
      char name[64];
      std::snprintf(name, sizeof name, "slice_%03zu_heatmap.pft", j);
      const auto path = out_dir / name;
      created.push_back(path);
      formats::write_tensor(path, formats::TensorData::f32({static_cast<std::uint32_t>(hm.channels),
                                                            static_cast<std::uint32_t>(hm.height),
                                                            static_cast<std::uint32_t>(hm.width)},
                                                           std::move(values)));
      index << m.study_id << '_' << j << ',' << fmt(locations[j]) << ',' << name << '\n';
    }
    created.push_back(out_dir / "index.csv");
    write_text(out_dir / "index.csv", index.str());
    json cfg{{"command", "targets"},
             {"manifest", manifest_path.filename().string()},
             {"study_id", m.study_id},
             {"sigma", options.sigma},
             {"mapping", geometry::to_string(options.mapping)},
             {"intersecting_series", other_ids}};
    created.push_back(out_dir / "config.json");
    write_text(out_dir / "config.json", cfg.dump(2) + "\n");
  } catch (...) {
    std::error_code ec;
    for (const auto& p : created) fs::remove(p, ec);
    if (!dir_existed) fs::remove(out_dir, ec);
    throw;
  }
}

std::string train_config_to_json(const nn::TrainConfig& c) { return train_config_json(c).dump(); }

nn::TrainConfig parse_train_config(const std::string& json_text, const nn::TrainConfig& defaults) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return train_config_from(j, defaults, "config");
}

ExperimentConfig default_experiment() {
  ExperimentConfig c;
  c.pretrain.loss_mode = nn::LossMode::MTL;
  c.pretrain.epochs = 12;
  c.pretrain.halve_every = 10;
  c.pretrain.batch_size = 16;
  c.finetune.epochs = 30;
  c.finetune.halve_every = 10;
  c.finetune.batch_size = 8;
  c.finetune.l1_reg = 5e-5;
  c.finetune.augment = true;
  c.fractions = {0.125, 0.5, 1.0};
  return c;
}

ExperimentConfig parse_experiment(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = default_experiment();
  reject_unknown(j, {"data_seed", "pretrain_train", "pretrain_val", "labeled_pool", "finetune_val", "test_studies",
                     "abnormal_fraction", "fractions", "seeds", "tasks", "pgm_dumps", "load", "phantom", "pretrain",
                     "finetune"},
                 "config");
  read_field(j, "data_seed", c.data_seed, "config");
  read_field(j, "pretrain_train", c.pretrain_train, "config");
  read_field(j, "pretrain_val", c.pretrain_val, "config");
  read_field(j, "labeled_pool", c.labeled_pool, "config");
  read_field(j, "finetune_val", c.finetune_val, "config");
  read_field(j, "test_studies", c.test_studies, "config");
  read_field(j, "abnormal_fraction", c.abnormal_fraction, "config");
  read_field(j, "fractions", c.fractions, "config");
  read_field(j, "seeds", c.seeds, "config");
  read_field(j, "tasks", c.tasks, "config");
  read_field(j, "pgm_dumps", c.pgm_dumps, "config");
  if (j.contains("load")) {
    const auto& l = j["load"];
    reject_unknown(l, {"target_spacing", "target_size", "mapping"}, "config.load");
    read_field(l, "target_spacing", c.load.target_spacing, "config.load");
    read_field(l, "target_size", c.load.target_size, "config.load");
    if (l.contains("mapping")) {
      std::string mp;
      read_field(l, "mapping", mp, "config.load");
      try {
        c.load.mapping = geometry::parse_location_mapping(mp);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("config.load.mapping: ") + e.what());
      }
    }
  }
  if (j.contains("phantom")) {
    const auto& p = j["phantom"];
    reject_unknown(p, {"n_sax", "fov", "spacing", "noise_std", "mirrored"}, "config.phantom");
    read_field(p, "n_sax", c.phantom.layout.n_sax, "config.phantom");
    read_field(p, "fov", c.phantom.layout.fov, "config.phantom");
    read_field(p, "spacing", c.phantom.layout.spacing, "config.phantom");
    read_field(p, "noise_std", c.phantom.noise_std, "config.phantom");
    read_field(p, "mirrored", c.phantom.mirrored, "config.phantom");
  }
  if (j.contains("pretrain")) c.pretrain = train_config_from(j["pretrain"], c.pretrain, "config.pretrain");
  if (j.contains("finetune")) c.finetune = train_config_from(j["finetune"], c.finetune, "config.finetune");

  auto bad = [](const std::string& what) { throw ConfigError("config." + what); };
  if (c.pretrain_train < 1 || c.pretrain_val < 0) bad("pretrain_train must be >= 1 and pretrain_val >= 0");
  if (c.labeled_pool < 1 || c.finetune_val < 0 || c.test_studies < 2) bad("labeled_pool >= 1, finetune_val >= 0, test_studies >= 2 required");
  if (!(c.abnormal_fraction >= 0 && c.abnormal_fraction <= 1)) bad("abnormal_fraction must lie in [0, 1]");
  if (c.fractions.empty() || c.seeds.empty()) bad("fractions and seeds must be non-empty");
  for (double f : c.fractions) {
    if (!(f > 0 && f <= 1)) bad("fractions must lie in (0, 1]");
  }
  for (const auto& t : c.tasks) {
    if (t != "seg" && t != "cls") bad("tasks entries must be 'seg' or 'cls'");
  }
  if (c.phantom.layout.n_sax < 2 || c.phantom.layout.fov < 4 || !(c.phantom.layout.spacing > 0)) bad("phantom layout is invalid");
  if (!(c.phantom.noise_std >= 0)) bad("phantom.noise_std must be >= 0");
  if (c.load.target_size < 4 || c.load.target_size % 4 != 0) bad("load.target_size must be a positive multiple of 4");
  if (!(c.load.target_spacing > 0)) bad("load.target_spacing must be > 0");
  if (c.pretrain.loss_mode == nn::LossMode::Seg || c.pretrain.loss_mode == nn::LossMode::Cls) {
    bad("pretrain.loss_mode must be ori, loc or mtl");
  }
  return c;
}

std::string experiment_to_json(const ExperimentConfig& c) {
  json j{{"data_seed", c.data_seed},
         {"pretrain_train", c.pretrain_train},
         {"pretrain_val", c.pretrain_val},
         {"labeled_pool", c.labeled_pool},
         {"finetune_val", c.finetune_val},
         {"test_studies", c.test_studies},
         {"abnormal_fraction", c.abnormal_fraction},
         {"fractions", c.fractions},
         {"seeds", c.seeds},
         {"tasks", c.tasks},
         {"pgm_dumps", c.pgm_dumps},
         {"load",
          {{"target_spacing", c.load.target_spacing},
           {"target_size", c.load.target_size},
           {"mapping", geometry::to_string(c.load.mapping)}}},
         {"phantom",
          {{"n_sax", c.phantom.layout.n_sax},
           {"fov", c.phantom.layout.fov},
           {"spacing", c.phantom.layout.spacing},
           {"noise_std", c.phantom.noise_std},
           {"mirrored", c.phantom.mirrored}}},
         {"pretrain", train_config_json(c.pretrain)},
         {"finetune", train_config_json(c.finetune)}};
  return j.dump(2);
}

void run_experiment(const ExperimentConfig& c, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "config.json", experiment_to_json(c) + "\n");
  const int size = c.load.target_size;

  const auto pre_data =
      phantom_dataset(c.pretrain_train, c.pretrain_val, c.abnormal_fraction, c.data_seed, c.phantom, c.load);

  const int n_ft = c.labeled_pool + c.finetune_val + c.test_studies;
  const auto ft_studies =
      phantom::generate_dataset(n_ft, c.abnormal_fraction, mix_seed(c.data_seed, kFinetuneDataStream), c.phantom);
  std::vector<std::vector<nn::Sample>> ft_samples;
  for (const auto& s : ft_studies) ft_samples.push_back(study_samples(s, c.load));
  std::vector<nn::Sample> ft_val, ft_test;
  for (int i = c.labeled_pool; i < n_ft; ++i) {
    auto& dst = i < c.labeled_pool + c.finetune_val ? ft_val : ft_test;
    dst.insert(dst.end(), ft_samples[i].begin(), ft_samples[i].end());
  }

  std::ofstream history(out_dir / "history.csv");
  history << "run,epoch,lr,train_loss,val_loss,selected\n";
  std::ofstream scatter(out_dir / "location_scatter.csv");
  scatter << "seed,study_id,slice_index,truth,predicted\n";
  std::ofstream pretext(out_dir / "pretext.csv");
  pretext << "seed,loss_mode," << metrics::RegressionReport::csv_header() << ",line_error_px,lines_evaluated,lines_unfitted\n";
  std::ofstream metrics_csv(out_dir / "metrics.csv");
  metrics_csv << "fraction,init,seed,n_labeled,seg_lv_dice,seg_lv_assd_mm,seg_assd_undefined,cls_auc\n";
  fs::create_directories(out_dir / "heatmaps");

  const bool want_seg = std::find(c.tasks.begin(), c.tasks.end(), "seg") != c.tasks.end();
  const bool want_cls = std::find(c.tasks.begin(), c.tasks.end(), "cls") != c.tasks.end();
  const bool has_heatmaps = c.pretrain.loss_mode != nn::LossMode::Loc;
  const bool has_location = c.pretrain.loss_mode != nn::LossMode::Ori;

  for (const auto seed : c.seeds) {
    nn::TrainConfig pc = c.pretrain;
    pc.seed = seed;
    pc.dense_channels = static_cast<int>(pre_data.train.front().lines.size());
    const auto pre = nn::train_pretext(pc, pre_data);
    const std::string tag = "s" + std::to_string(seed);
    append_history(history, "pretrain_" + tag, pre);
    nn::save_checkpoint(out_dir / "checkpoints" / ("pretrain_" + tag), pre.params, history_json(pc, pre));

    const auto ev = evaluate_pretext(pre.params, pre_data.val, size, has_location, has_heatmaps);
    for (std::size_t i = 0; i < ev.predicted.size(); ++i) {
      const auto& s = pre_data.val[i];
      scatter << seed << ',' << s.study_id << ',' << s.slice_index << ',' << fmt(ev.truth[i]) << ','
              << fmt(ev.predicted[i]) << '\n';
    }
    pretext << seed << ',' << nn::to_string(pc.loss_mode) << ','
            << (ev.location ? ev.location->csv_row() : std::string(",,,,,,,")) << ','
            << (ev.line_error_px ? fmt(*ev.line_error_px) : "") << ',' << ev.lines_evaluated << ','
            << ev.lines_unfitted << '\n';
    if (has_heatmaps) {
      const int dumps = std::min<int>(c.pgm_dumps, static_cast<int>(pre_data.val.size()));
      for (int i = 0; i < dumps; ++i) {
        const auto& s = pre_data.val[static_cast<std::size_t>(i) * pre_data.val.size() / std::max(dumps, 1)];
        const auto pred = nn::predict_dense(pre.params, s, size, size);
        const auto target = supervision::lines_heatmap(s.lines, size, size, supervision::GaussianSigma(pc.sigma));
        const std::size_t n = static_cast<std::size_t>(size) * size;
        for (int k = 0; k < pre.params.dense_channels; ++k) {
          const std::string base = tag + "_" + s.study_id + "_slice" + std::to_string(s.slice_index) + "_ch" + std::to_string(k);
          write_pgm(out_dir / "heatmaps" / (base + "_pred.pgm"),
                    std::vector<float>(pred.begin() + k * n, pred.begin() + (k + 1) * n), size, size);
          write_pgm(out_dir / "heatmaps" / (base + "_target.pgm"),
                    std::vector<float>(target.values.begin() + k * n, target.values.begin() + (k + 1) * n), size, size);
          write_pgm(out_dir / "heatmaps" / (base + "_image.pgm"), s.image, size, size);
        }
      }
    }

    for (const double fraction : c.fractions) {
      const auto n_labeled =
          std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * c.labeled_pool)));
      nn::Dataset ft;
      ft.height = ft.width = size;
      for (std::size_t i = 0; i < n_labeled; ++i) ft.train.insert(ft.train.end(), ft_samples[i].begin(), ft_samples[i].end());
      ft.val = ft_val;

      for (const char* init : {"pretrained", "scratch"}) {
        const bool pretrained = std::string(init) == "pretrained";
        nn::TrainConfig fc = c.finetune;
        fc.seed = seed;
        const auto start = pretrained ? pre.params : nn::init_params<float>(seed, pc.dense_channels);
        std::string seg_dice, seg_assd, seg_undef, cls_auc;
        const std::string run = std::string(init) + "_f" + fmt(fraction) + "_" + tag;
        if (want_seg) {
          const auto r = nn::finetune(fc, start, ft, nn::FinetuneHead::Seg);
          append_history(history, "seg_" + run, r);
          const auto se = evaluate_segmentation(r.params, ft_test, size, c.load.target_spacing);
          seg_dice = fmt(se.lv_dice);
          seg_assd = se.lv_assd_mm ? fmt(*se.lv_assd_mm) : "";
          seg_undef = std::to_string(se.assd_undefined);
        }
        if (want_cls) {
          const auto r = nn::finetune(fc, start, ft, nn::FinetuneHead::Cls);
          append_history(history, "cls_" + run, r);
          cls_auc = fmt(evaluate_classification(r.params, ft_test, size));
        }
        metrics_csv << fmt(fraction) << ',' << init << ',' << seed << ',' << n_labeled << ',' << seg_dice << ','
                    << seg_assd << ',' << seg_undef << ',' << cls_auc << '\n';
        metrics_csv.flush();
      }
    }
  }
  if (!history || !scatter || !pretext || !metrics_csv) throw Error("cannot write experiment outputs to " + out_dir.string());
}

}  // namespace viewssl::pipeline
