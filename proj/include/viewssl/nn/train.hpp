#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "viewssl/geometry.hpp"
#include "viewssl/nn/adam.hpp"
#include "viewssl/nn/losses.hpp"
#include "viewssl/nn/model.hpp"

namespace viewssl::nn {

enum class LossMode { Ori, Loc, MTL, Seg, Cls };

std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);
Outputs outputs_for(LossMode m);

struct TrainConfig {
  double lr = 1e-3;
  int halve_every = 100;  ///< epochs between learning-rate halvings
  int epochs = 10;
  int batch_size = 20;
  std::uint64_t seed = 1;
  double l1_reg = 0.0;        ///< added to the loss as l1 * sum|w| over weights
  double weight_decay = 0.0;  ///< decoupled, applied inside the Adam step
  LossMode loss_mode = LossMode::MTL;
  bool augment = false;       ///< random rotation (+-max_rotation_deg) and horizontal flip
  double max_rotation_deg = 15.0;
  double sigma = 6.0;         ///< heatmap Gaussian width, pixels
  int dense_channels = 2;     ///< K for pretext training

  void validate() const;
};

/// One preprocessed slice with everything any task may need.
struct Sample {
  std::vector<float> image;                ///< H x W, z-scored
  std::vector<geometry::LineABC> lines;    ///< intersection lines, pixel coordinates
  double location = 0.0;                   ///< relative slice location label
  std::vector<std::uint8_t> mask;          ///< H x W segmentation labels (may be empty)
  int label = 0;                           ///< study-level binary label
  std::string study_id;
  int slice_index = 0;
};

struct Dataset {
  int height = 0;
  int width = 0;
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Sample with rasterised targets, ready for the network.
template <class T>
struct Prepared {
  std::vector<T> image;
  std::vector<T> heatmaps;  ///< K x H x W (pretext only)
  double location = 0.0;
  std::vector<std::uint8_t> mask;
  int label = 0;
};

/// Rasterises targets for `s`, optionally under a random rotation/flip drawn
/// from `aug_seed` (image warped bilinearly, heatmaps regenerated from the
/// transformed lines, mask warped nearest-neighbour).
template <class T>
Prepared<T> prepare(const Sample& s, int height, int width, const TrainConfig& config, bool augment,
                    std::uint64_t aug_seed);

/// Mean batch objective for `mode`; when `grads` is non-null, accumulates
/// dL/dtheta into it (caller zeroes it first).
template <class T>
double batch_objective(const ModelParams<T>& params, std::span<const Prepared<T>> batch, int height, int width,
                       LossMode mode, const ClassWeights& weights, double l1_reg, ModelParams<T>* grads);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelParams<float> params;  ///< best-validation parameters
  std::vector<EpochRecord> history;
  int best_epoch = -1;
};

/// Generic loop: Adam, step-halving schedule, seeded shuffling, best-val
/// selection (train loss when there is no validation split).
TrainResult train(const TrainConfig& config, ModelParams<float> init, const Dataset& data);

/// Pretext training from a seeded initialisation.
TrainResult train_pretext(const TrainConfig& config, const Dataset& data);

enum class FinetuneHead { Seg, Cls };

/// Segmentation keeps encoder + decoder and swaps in a 4-class 1x1 conv head;
/// classification keeps the encoder and reinitialises the pooled FC head.
TrainResult finetune(const TrainConfig& config, ModelParams<float> params, const Dataset& data, FinetuneHead head);

// inference ---------------------------------------------------------------

double predict_location(const ModelParams<float>& p, const Sample& s, int height, int width);
std::vector<float> predict_dense(const ModelParams<float>& p, const Sample& s, int height, int width);
std::vector<std::uint8_t> predict_segmentation(const ModelParams<float>& p, const Sample& s, int height, int width);
double predict_probability(const ModelParams<float>& p, const Sample& s, int height, int width);

}  // namespace viewssl::nn
