#include "viewssl/nn/losses.hpp"

#include <algorithm>

namespace viewssl::nn {

double loss_loc(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw NnError(NnError::Kind::LengthMismatch, "loss_loc: prediction/target lengths differ or are empty");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = target[i] - pred[i];
    s += e * e;
  }
  return s / static_cast<double>(pred.size());
}

double loss_seg(const Tensor<double>& logits, std::span<const std::uint8_t> labels) {
  if (logits.shape.size() != 3 || static_cast<std::size_t>(logits.shape[1]) * logits.shape[2] != labels.size()) {
    throw NnError(NnError::Kind::ShapeError, "loss_seg: logits must be [C, H, W] matching the label map");
  }
  std::vector<double> grad(logits.size());
  const double total = seg_ce_grad<double>(logits.data, labels, logits.shape[0], 1.0, grad);
  return total / static_cast<double>(labels.size());
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double loss_cls(double logit, int label, double pos_weight, double neg_weight) {
  if (label != 0 && label != 1) throw NnError(NnError::Kind::LabelOutOfRange, "classification label must be 0 or 1");
  if (!(pos_weight > 0) || !(neg_weight > 0)) throw NnError(NnError::Kind::BadConfig, "class weights must be > 0");
  // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
  auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  return label == 1 ? pos_weight * softplus(-logit) : neg_weight * softplus(logit);
}

ClassWeights inverse_prevalence_weights(std::span<const int> labels) {
  const auto n = static_cast<double>(labels.size());
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = n - pos;
  ClassWeights w;
  if (pos > 0) w.pos = n / (2.0 * pos);
  if (neg > 0) w.neg = n / (2.0 * neg);
  return w;
}

}  // namespace viewssl::nn
