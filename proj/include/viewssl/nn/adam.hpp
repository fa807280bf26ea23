#pragma once

#include <cstdint>

#include "viewssl/nn/model.hpp"

namespace viewssl::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled weight decay (applied as theta -= lr * wd * theta); 0 = off.
  double weight_decay = 0.0;
};

template <class T>
struct AdamState {
  ModelParams<T> m;
  ModelParams<T> v;
  std::int64_t step = 0;

  static AdamState for_params(const ModelParams<T>& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

/// One bias-corrected Adam update of every parameter.
template <class T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
               const AdamConfig& config = {});

/// Scalar reference form, exposed for tests and tools.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  std::int64_t step = 0;
  double update(double theta, double grad, double lr, const AdamConfig& config = {});
};

}  // namespace viewssl::nn
