#include "viewssl/nn/adam.hpp"

#include <cmath>

namespace viewssl::nn {

template <class T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
               const AdamConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (int id = 0; id < kNumParams; ++id) {
    auto& theta = params[id].data;
    const auto& g = grads[id].data;
    auto& m = state.m[id].data;
    auto& v = state.v[id].data;
    if (g.size() != theta.size() || m.size() != theta.size()) {
      throw NnError(NnError::Kind::ShapeError, std::string("adam: shape mismatch for ") + param_name(id));
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double t = static_cast<double>(theta[i]);
      if (cfg.weight_decay > 0.0) t -= lr * cfg.weight_decay * t;
      t -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      theta[i] = static_cast<T>(t);
    }
  }
}

double ScalarAdam::update(double theta, double grad, double lr, const AdamConfig& cfg) {
  ++step;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
  const double mhat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
  const double vhat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
  if (cfg.weight_decay > 0.0) theta -= lr * cfg.weight_decay * theta;
  return theta - lr * mhat / (std::sqrt(vhat) + cfg.eps);
}

template void adam_step<float>(ModelParams<float>&, const ModelParams<float>&, AdamState<float>&, double,
                               const AdamConfig&);
template void adam_step<double>(ModelParams<double>&, const ModelParams<double>&, AdamState<double>&, double,
                                const AdamConfig&);

}  // namespace viewssl::nn
