#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "viewssl/geometry.hpp"
#include "viewssl/manifest.hpp"
#include "viewssl/metrics.hpp"
#include "viewssl/nn/train.hpp"
#include "viewssl/phantom.hpp"

/// Glue between studies on disk / in memory and the training code, plus the
/// evaluation and batch-command logic shared by the CLI and the acceptance
/// harness.
namespace viewssl::pipeline {

namespace fs = std::filesystem;

/// Failure of a user-supplied configuration (CLI exit code 4).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct LoadOptions {
  double target_spacing = 2.0;  ///< mm
  int target_size = 64;         ///< pixels, square
  geometry::LocationMapping mapping = geometry::LocationMapping::Linear;
};

/// Stack slices of one study as network samples, ordered by stack position.
/// Lines are the intersections with the first image of every Intersecting
/// series, carried through preprocessing.
struct StudyInput {
  std::string study_id;
  std::optional<bool> abnormal;
  std::vector<formats::GrayImage> images;
  std::vector<std::optional<formats::LabelImage>> masks;
  std::vector<geometry::ImagePlane> planes;
  std::vector<std::string> intersecting_ids;
  std::vector<geometry::ImagePlane> intersecting;
};

StudyInput study_input(const phantom::Study& study);
/// Reads pixel/mask tensor files referenced by the manifest.
StudyInput study_input(const fs::path& manifest_path);

std::vector<nn::Sample> make_samples(const StudyInput& in, const LoadOptions& options);

/// Pretext split: studies [0, n_train) train, [n_train, n_train + n_val) validate.
nn::Dataset phantom_dataset(int n_train, int n_val, double abnormal_fraction, std::uint64_t seed,
                            const phantom::DatasetOptions& phantom_options, const LoadOptions& load);

nn::Dataset split_dataset(const std::vector<std::vector<nn::Sample>>& studies, std::size_t n_train, int size);

// evaluation -------------------------------------------------------------

struct PretextEval {
  std::optional<metrics::RegressionReport> location;
  std::vector<double> predicted;  ///< per sample
  std::vector<double> truth;
  std::optional<double> line_error_px;  ///< mean over in-grid channels with a fitted ridge
  int lines_evaluated = 0;
  int lines_unfitted = 0;
};

/// Location metrics need a scalar head trained for location; line metrics a
/// heatmap head. Either part is skipped when the flag is false.
PretextEval evaluate_pretext(const nn::ModelParams<float>& p, const std::vector<nn::Sample>& samples, int size,
                             bool location, bool lines);

struct SegEval {
  double lv_dice = 0.0;                  ///< mean over studies of the volume Dice
  std::optional<double> lv_assd_mm;      ///< mean over studies where it is defined
  int assd_undefined = 0;                ///< studies with no predicted LV at all
};
SegEval evaluate_segmentation(const nn::ModelParams<float>& p, const std::vector<nn::Sample>& samples, int size,
                              double spacing_mm);

/// Study-level AUC of the mean slice probability.
double evaluate_classification(const nn::ModelParams<float>& p, const std::vector<nn::Sample>& samples, int size);

// commands ---------------------------------------------------------------

struct TargetsOptions {
  double sigma = 6.0;
  geometry::LocationMapping mapping = geometry::LocationMapping::Linear;
};

/// Writes one K-channel heatmap per Stack slice on the slice's native grid
/// plus index.csv and config.json into out_dir. On failure every file this
/// call created is removed before the exception propagates.
void write_targets(const fs::path& manifest_path, const fs::path& out_dir, const TargetsOptions& options);

/// Binary 8-bit PGM, min-max scaled.
void write_pgm(const fs::path& path, const std::vector<float>& values, int width, int height);

struct ExperimentConfig {
  std::uint64_t data_seed = 7;
  int pretrain_train = 200;
  int pretrain_val = 56;
  int labeled_pool = 8;    ///< fine-tuning studies at fraction 1.0
  int finetune_val = 8;
  int test_studies = 32;
  double abnormal_fraction = 0.5;
  std::vector<double> fractions{1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> tasks{"seg", "cls"};
  int pgm_dumps = 4;
  LoadOptions load;
  phantom::DatasetOptions phantom;
  nn::TrainConfig pretrain;
  nn::TrainConfig finetune;
};

ExperimentConfig default_experiment();
/// Throws ConfigError naming the offending key.
ExperimentConfig parse_experiment(const std::string& json_text);
std::string experiment_to_json(const ExperimentConfig& c);

/// Runs pretrain, then fine-tunes from the pretrained and from a random
/// initialisation under the same budget, writing metrics.csv, history.csv,
/// location_scatter.csv, heatmap PGMs, checkpoints and config.json.
void run_experiment(const ExperimentConfig& config, const fs::path& out_dir);

std::string train_config_to_json(const nn::TrainConfig& c);
nn::TrainConfig parse_train_config(const std::string& json_text, const nn::TrainConfig& defaults);

}  // namespace viewssl::pipeline
