// viewssl command-line entry point.
//
// Exit codes: 0 success, 2 data/geometry error, 3 training failure,
// 4 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "viewssl/dicom.hpp"
#include "viewssl/metrics.hpp"
#include "viewssl/nn/checkpoint.hpp"
#include "viewssl/pipeline.hpp"
#include "viewssl/tensor_file.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace viewssl;

namespace {

constexpr int kExitData = 2;
constexpr int kExitTraining = 3;
constexpr int kExitConfig = 4;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw pipeline::ConfigError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_snapshot(const fs::path& dir, const json& config) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.json");
  out << config.dump(2) << '\n';
  if (!out) throw Error("cannot write " + (dir / "config.json").string());
}

// Every */manifest.json below `root` (or `root` itself), sorted by path.
std::vector<fs::path> find_manifests(const fs::path& root) {
  std::vector<fs::path> out;
  if (fs::is_regular_file(root)) return {root};
  if (!fs::is_directory(root)) throw Error("data path " + root.string() + " does not exist");
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "manifest.json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error("no manifest.json found under " + root.string());
  return out;
}

std::vector<std::vector<nn::Sample>> load_studies(const fs::path& root, const pipeline::LoadOptions& load) {
  std::vector<std::vector<nn::Sample>> studies;
  for (const auto& m : find_manifests(root)) studies.push_back(pipeline::make_samples(pipeline::study_input(m), load));
  return studies;
}

nn::Dataset load_dataset(const fs::path& root, int val_studies, const pipeline::LoadOptions& load) {
  const auto studies = load_studies(root, load);
  if (val_studies < 0 || static_cast<std::size_t>(val_studies) >= studies.size()) {
    throw pipeline::ConfigError("--val-studies must be in [0, number of studies)");
  }
  return pipeline::split_dataset(studies, studies.size() - static_cast<std::size_t>(val_studies), load.target_size);
}

struct TrainFlags {
  std::string config_path;
  nn::TrainConfig config;
  std::string loss_mode;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--train-config", f.config_path, "JSON file with TrainConfig fields (flags override it)");
  app->add_option("--lr", f.config.lr, "learning rate")->capture_default_str();
  app->add_option("--halve-every", f.config.halve_every, "epochs between learning-rate halvings")->capture_default_str();
  app->add_option("--epochs", f.config.epochs)->capture_default_str();
  app->add_option("--batch-size", f.config.batch_size)->capture_default_str();
  app->add_option("--seed", f.config.seed)->capture_default_str();
  app->add_option("--l1", f.config.l1_reg, "L1 penalty on weights")->capture_default_str();
  app->add_option("--weight-decay", f.config.weight_decay, "decoupled weight decay")->capture_default_str();
  app->add_flag("--augment", f.config.augment, "random rotation and horizontal flip");
  app->add_option("--max-rotation", f.config.max_rotation_deg, "degrees")->capture_default_str();
  app->add_option("--sigma", f.config.sigma, "heatmap Gaussian width, pixels")->capture_default_str();
}

// Config file first, explicit flags on top.
nn::TrainConfig resolve_train(CLI::App* app, const TrainFlags& f) {
  nn::TrainConfig c = f.config;
  if (!f.config_path.empty()) {
    c = pipeline::parse_train_config(read_text(f.config_path), nn::TrainConfig{});
    const auto take = [&](const char* flag, auto member) {
      if (app->count(flag) > 0) c.*member = f.config.*member;
    };
    take("--lr", &nn::TrainConfig::lr);
    take("--halve-every", &nn::TrainConfig::halve_every);
    take("--epochs", &nn::TrainConfig::epochs);
    take("--batch-size", &nn::TrainConfig::batch_size);
    take("--seed", &nn::TrainConfig::seed);
    take("--l1", &nn::TrainConfig::l1_reg);
    take("--weight-decay", &nn::TrainConfig::weight_decay);
    take("--augment", &nn::TrainConfig::augment);
    take("--max-rotation", &nn::TrainConfig::max_rotation_deg);
    take("--sigma", &nn::TrainConfig::sigma);
  }
  if (!f.loss_mode.empty()) c.loss_mode = nn::parse_loss_mode(f.loss_mode);
  c.validate();
  return c;
}

void add_load_flags(CLI::App* app, pipeline::LoadOptions& load, std::string& mapping) {
  app->add_option("--target-spacing", load.target_spacing, "mm per pixel after resampling")->capture_default_str();
  app->add_option("--target-size", load.target_size, "square crop/pad size, multiple of 4")->capture_default_str();
  app->add_option("--mapping", mapping, "relative location mapping: linear | sine")->capture_default_str();
}

json load_json(const pipeline::LoadOptions& l) {
  return {{"target_spacing", l.target_spacing}, {"target_size", l.target_size}, {"mapping", geometry::to_string(l.mapping)}};
}

void print_history(const nn::TrainResult& r) {
  for (const auto& e : r.history) {
    std::printf("epoch %3d  lr %.3g  train %.6f  val %.6f%s\n", e.epoch, e.lr, e.train_loss, e.val_loss,
                e.epoch == r.best_epoch ? "  *" : "");
  }
}

json history_json(const nn::TrainResult& r) {
  json h = json::array();
  for (const auto& e : r.history) h.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  return h;
}

json train_json(const nn::TrainConfig& c) { return json::parse(pipeline::train_config_to_json(c)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"viewssl: geometry-derived self-supervision for multi-view imaging"};
  app.require_subcommand(1);

  // phantom
  auto* ph = app.add_subcommand("phantom", "generate synthetic studies (manifest + tensor files)");
  std::string ph_out;
  int ph_n = 1;
  double ph_abnormal = 0.5;
  std::uint64_t ph_seed = 0;
  phantom::DatasetOptions ph_opts;
  ph->add_option("--out", ph_out, "output directory")->required();
  ph->add_option("--n", ph_n, "number of studies")->capture_default_str();
  ph->add_option("--abnormal-fraction", ph_abnormal)->capture_default_str();
  ph->add_option("--seed", ph_seed)->capture_default_str();
  ph->add_option("--n-sax", ph_opts.layout.n_sax, "short-axis slices per study")->capture_default_str();
  ph->add_option("--fov", ph_opts.layout.fov, "pixels per side")->capture_default_str();
  ph->add_option("--spacing", ph_opts.layout.spacing, "mm per pixel")->capture_default_str();
  ph->add_option("--noise", ph_opts.noise_std, "Gaussian noise std")->capture_default_str();
  ph->add_flag("--mirrored", ph_opts.mirrored, "mirror-symmetric variant");

  // ingest-dicom
  auto* ing = app.add_subcommand("ingest-dicom", "convert explicit-VR little-endian DICOM files to a study manifest");
  std::string ing_out, ing_id = "study";
  std::vector<std::string> ing_stack, ing_inter;
  ing->add_option("--out", ing_out, "output study directory")->required();
  ing->add_option("--study-id", ing_id)->capture_default_str();
  ing->add_option("--stack", ing_stack, "files of the parallel stack")->required();
  ing->add_option("--intersecting", ing_inter, "one file per intersecting view");

  // targets
  auto* tg = app.add_subcommand("targets", "write heatmap targets and location labels for a study");
  std::string tg_manifest, tg_out, tg_mapping = "linear";
  pipeline::TargetsOptions tg_opts;
  tg->add_option("--manifest", tg_manifest)->required();
  tg->add_option("--out", tg_out)->required();
  tg->add_option("--sigma", tg_opts.sigma, "Gaussian width, pixels")->capture_default_str();
  tg->add_option("--mapping", tg_mapping, "linear | sine")->capture_default_str();

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "train the pretext network");
  TrainFlags pt_flags;
  pt_flags.loss_mode = "mtl";
  std::string pt_data, pt_out, pt_mapping = "linear";
  int pt_val = 0;
  pipeline::LoadOptions pt_load;
  pt->add_option("--data", pt_data, "directory of studies (searched for manifest.json)")->required();
  pt->add_option("--out", pt_out, "checkpoint directory")->required();
  pt->add_option("--val-studies", pt_val, "last N studies form the validation split")->capture_default_str();
  pt->add_option("--loss", pt_flags.loss_mode, "ori | loc | mtl")->capture_default_str();
  add_train_flags(pt, pt_flags);
  add_load_flags(pt, pt_load, pt_mapping);

  // finetune
  auto* ftc = app.add_subcommand("finetune", "fine-tune for segmentation or classification");
  TrainFlags ft_flags;
  ft_flags.config.l1_reg = 5e-5;
  std::string ft_data, ft_out, ft_ckpt, ft_head = "seg", ft_mapping = "linear";
  int ft_val = 0;
  pipeline::LoadOptions ft_load;
  ftc->add_option("--data", ft_data)->required();
  ftc->add_option("--out", ft_out, "checkpoint directory")->required();
  ftc->add_option("--checkpoint", ft_ckpt, "pretrained checkpoint (omit to train from scratch)");
  ftc->add_option("--head", ft_head, "seg | cls")->capture_default_str();
  ftc->add_option("--val-studies", ft_val)->capture_default_str();
  add_train_flags(ftc, ft_flags);
  add_load_flags(ftc, ft_load, ft_mapping);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_data, ev_ckpt, ev_task = "loc", ev_out, ev_mapping = "linear";
  pipeline::LoadOptions ev_load;
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--task", ev_task, "loc | lines | seg | cls")->capture_default_str();
  ev->add_option("--out", ev_out, "directory for metrics.json and config.json");
  add_load_flags(ev, ev_load, ev_mapping);

  // experiment
  auto* ex = app.add_subcommand("experiment", "pretrain + fine-tune sweep (pretrained vs scratch)");
  std::string ex_config, ex_out;
  ex->add_option("--config", ex_config, "experiment JSON (defaults used for missing keys)");
  ex->add_option("--out", ex_out)->required();
  bool ex_print_default = false;
  ex->add_flag("--print-default", ex_print_default, "print the default configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*ph) {
      const auto studies = phantom::generate_dataset(ph_n, ph_abnormal, ph_seed, ph_opts);
      for (const auto& s : studies) phantom::write_study(s, fs::path(ph_out) / s.study_id);
      write_snapshot(ph_out, {{"command", "phantom"},
                              {"n", ph_n},
                              {"abnormal_fraction", ph_abnormal},
                              {"seed", ph_seed},
                              {"n_sax", ph_opts.layout.n_sax},
                              {"fov", ph_opts.layout.fov},
                              {"spacing", ph_opts.layout.spacing},
                              {"noise_std", ph_opts.noise_std},
                              {"mirrored", ph_opts.mirrored}});
      std::printf("wrote %zu studies to %s\n", studies.size(), ph_out.c_str());
    } else if (*ing) {
      const fs::path out(ing_out);
      fs::create_directories(out);
      formats::StudyManifest m;
      m.study_id = ing_id;
      auto convert = [&](const std::string& file, const std::string& name) {
        const auto img = formats::parse_dicom_subset(formats::read_file_bytes(file));
        if (!img.pixel_data) throw formats::DicomError(formats::DicomError::Kind::MissingTag, file + ": no pixel data", 0);
        formats::write_tensor(out / name, formats::TensorData::u16({static_cast<std::uint32_t>(img.rows),
                                                                    static_cast<std::uint32_t>(img.cols)},
                                                                   *img.pixel_data));
        return std::pair{img, formats::ManifestImage{name, std::nullopt, img.plane}};
      };
      formats::ManifestSeries stack{"stack", formats::SeriesRole::Stack, {}};
      for (std::size_t i = 0; i < ing_stack.size(); ++i) {
        auto [img, entry] = convert(ing_stack[i], "stack_" + std::to_string(i) + ".pft");
        if (i == 0 && !img.series_uid.empty()) stack.series_id = img.series_uid;
        stack.images.push_back(entry);
      }
      m.series.push_back(stack);
      for (std::size_t i = 0; i < ing_inter.size(); ++i) {
        auto [img, entry] = convert(ing_inter[i], "view_" + std::to_string(i) + ".pft");
        const std::string id = img.series_uid.empty() || img.series_uid == stack.series_id
                                   ? "view_" + std::to_string(i)
                                   : img.series_uid;
        m.series.push_back({id, formats::SeriesRole::Intersecting, {entry}});
      }
      (void)geometry::build_stack([&] {
        std::vector<geometry::ImagePlane> p;
        for (const auto& e : m.series.front().images) p.push_back(e.plane);
        return p;
      }());
      formats::save_manifest(out / "manifest.json", m);
      write_snapshot(out, {{"command", "ingest-dicom"}, {"study_id", ing_id}, {"stack", ing_stack}, {"intersecting", ing_inter}});
      std::printf("wrote %s\n", (out / "manifest.json").c_str());
    } else if (*tg) {
      tg_opts.mapping = geometry::parse_location_mapping(tg_mapping);
      pipeline::write_targets(tg_manifest, tg_out, tg_opts);
      std::printf("wrote targets to %s\n", tg_out.c_str());
    } else if (*pt) {
      const auto config = resolve_train(pt, pt_flags);
      pt_load.mapping = geometry::parse_location_mapping(pt_mapping);
      auto data = load_dataset(pt_data, pt_val, pt_load);
      if (data.train.empty()) throw Error("no training samples");
      auto c = config;
      c.dense_channels = static_cast<int>(data.train.front().lines.size());
      if (c.dense_channels < 1 && c.loss_mode != nn::LossMode::Loc) throw Error("studies have no intersecting views");
      c.dense_channels = std::max(c.dense_channels, 1);
      const json snapshot{{"command", "pretrain"}, {"data", pt_data}, {"val_studies", pt_val}, {"load", load_json(pt_load)}, {"train", train_json(c)}};
      write_snapshot(pt_out, snapshot);
      const auto r = nn::train_pretext(c, data);
      print_history(r);
      nn::save_checkpoint(pt_out, r.params, json{{"config", snapshot}, {"best_epoch", r.best_epoch}, {"history", history_json(r)}}.dump());
    } else if (*ftc) {
      auto c = resolve_train(ftc, ft_flags);
      if (ft_head != "seg" && ft_head != "cls") throw pipeline::ConfigError("--head must be seg or cls");
      ft_load.mapping = geometry::parse_location_mapping(ft_mapping);
      const auto data = load_dataset(ft_data, ft_val, ft_load);
      auto params = ft_ckpt.empty() ? nn::init_params<float>(c.seed, static_cast<int>(std::max<std::size_t>(1, data.train.front().lines.size())))
                                    : nn::load_checkpoint(ft_ckpt);
      const json snapshot{{"command", "finetune"}, {"data", ft_data}, {"checkpoint", ft_ckpt}, {"head", ft_head},
                          {"val_studies", ft_val}, {"load", load_json(ft_load)}, {"train", train_json(c)}};
      write_snapshot(ft_out, snapshot);
      const auto r = nn::finetune(c, std::move(params), data, ft_head == "seg" ? nn::FinetuneHead::Seg : nn::FinetuneHead::Cls);
      print_history(r);
      nn::save_checkpoint(ft_out, r.params, json{{"config", snapshot}, {"best_epoch", r.best_epoch}, {"history", history_json(r)}}.dump());
    } else if (*ev) {
      ev_load.mapping = geometry::parse_location_mapping(ev_mapping);
      const auto params = nn::load_checkpoint(ev_ckpt);
      std::vector<nn::Sample> samples;
      for (auto& s : load_studies(ev_data, ev_load)) samples.insert(samples.end(), s.begin(), s.end());
      const int size = ev_load.target_size;
      json result{{"task", ev_task}, {"samples", samples.size()}};
      if (ev_task == "loc" || ev_task == "lines") {
        const auto pe = pipeline::evaluate_pretext(params, samples, size, ev_task == "loc", ev_task == "lines");
        if (pe.location) result["location"] = json::parse(pe.location->to_json());
        if (pe.line_error_px) result["line_error_px"] = *pe.line_error_px;
        if (ev_task == "lines") {
          result["lines_evaluated"] = pe.lines_evaluated;
          result["lines_unfitted"] = pe.lines_unfitted;
        }
      } else if (ev_task == "seg") {
        const auto se = pipeline::evaluate_segmentation(params, samples, size, ev_load.target_spacing);
        result["lv_dice"] = se.lv_dice;
        result["lv_assd_mm"] = se.lv_assd_mm ? json(*se.lv_assd_mm) : json(nullptr);
        result["assd_undefined"] = se.assd_undefined;
      } else if (ev_task == "cls") {
        result["auc"] = pipeline::evaluate_classification(params, samples, size);
      } else {
        throw pipeline::ConfigError("--task must be loc, lines, seg or cls");
      }
      std::printf("%s\n", result.dump(2).c_str());
      if (!ev_out.empty()) {
        write_snapshot(ev_out, {{"command", "eval"}, {"data", ev_data}, {"checkpoint", ev_ckpt}, {"task", ev_task}, {"load", load_json(ev_load)}});
        std::ofstream(fs::path(ev_out) / "metrics.json") << result.dump(2) << '\n';
      }
    } else if (*ex) {
      if (ex_print_default) {
        std::printf("%s\n", pipeline::experiment_to_json(pipeline::default_experiment()).c_str());
        return 0;
      }
      const auto config = ex_config.empty() ? pipeline::default_experiment() : pipeline::parse_experiment(read_text(ex_config));
      pipeline::run_experiment(config, ex_out);
      std::printf("wrote experiment outputs to %s\n", ex_out.c_str());
    }
  } catch (const pipeline::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const nn::NnError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    if (e.kind() == nn::NnError::Kind::BadConfig) return kExitConfig;
    if (e.kind() == nn::NnError::Kind::Divergence || e.kind() == nn::NnError::Kind::NonFinite) return kExitTraining;
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
