#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "viewssl/nn/tensor.hpp"

/// Training objectives. Each loss has a value form used for reporting and
/// tests, and a gradient form (suffix `_grad`) that also writes dL/d(pred).
namespace viewssl::nn {

/// Mean squared heatmap error over N x K x H x W.
template <class T>
double loss_ori(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape != target.shape) throw NnError(NnError::Kind::ShapeError, "loss_ori: prediction/target shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(target.data[i]) - static_cast<double>(pred.data[i]);
    s += e * e;
  }
  return s / static_cast<double>(pred.size());
}

/// Mean squared relative-location error.
double loss_loc(std::span<const double> pred, std::span<const double> target);

/// Multitask objective: unit-weighted sum.
inline double loss_mtl(double l_ori, double l_loc) { return l_ori + l_loc; }

inline constexpr int kSegClasses = 4;

/// Mean per-pixel softmax cross-entropy; logits [C, H, W], labels H x W.
double loss_seg(const Tensor<double>& logits, std::span<const std::uint8_t> labels);

/// Class-weighted binary cross-entropy of sigmoid(logit).
double loss_cls(double logit, int label, double pos_weight, double neg_weight);

/// Class weight N_total / (2 N_c) for each class of a binary label set.
struct ClassWeights {
  double pos = 1.0;
  double neg = 1.0;
};
ClassWeights inverse_prevalence_weights(std::span<const int> labels);

double sigmoid(double z);

/// Softmax CE summed over pixels of one sample; writes (softmax - onehot) * scale to grad.
template <class T>
double seg_ce_grad(std::span<const T> logits, std::span<const std::uint8_t> labels, int classes, T scale,
                   std::span<T> grad) {
  const std::size_t n = labels.size();
  if (logits.size() != n * classes || grad.size() != logits.size()) {
    throw NnError(NnError::Kind::ShapeError, "segmentation logits do not match the label map");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label >= classes) throw NnError(NnError::Kind::LabelOutOfRange, "label " + std::to_string(label) + " out of range");
    double m = -INFINITY;
    for (int c = 0; c < classes; ++c) m = std::max(m, static_cast<double>(logits[c * n + i]));
    double z = 0.0;
    for (int c = 0; c < classes; ++c) z += std::exp(static_cast<double>(logits[c * n + i]) - m);
    const double lse = m + std::log(z);
    total += lse - static_cast<double>(logits[label * n + i]);
    for (int c = 0; c < classes; ++c) {
      const double prob = std::exp(static_cast<double>(logits[c * n + i]) - lse);
      grad[c * n + i] = static_cast<T>((prob - (c == label ? 1.0 : 0.0)) * static_cast<double>(scale));
    }
  }
  return total;
}

}  // namespace viewssl::nn
