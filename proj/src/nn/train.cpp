#include "viewssl/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "viewssl/random.hpp"
#include "viewssl/supervision.hpp"

namespace viewssl::nn {

namespace {

using supervision::Affine2D;

constexpr std::uint64_t kShuffleStream = 0x5F1E;
constexpr std::uint64_t kAugmentStream = 0xA06;

std::size_t pixels(int height, int width) { return static_cast<std::size_t>(height) * width; }

bool uses_heatmaps(LossMode m) { return m == LossMode::Ori || m == LossMode::MTL; }

// Border-clamped bilinear sample.
float bilinear(const std::vector<float>& img, int H, int W, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(W - 1));
  y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  const int x0 = std::min(static_cast<int>(x), W - 2 < 0 ? 0 : W - 2);
  const int y0 = std::min(static_cast<int>(y), H - 2 < 0 ? 0 : H - 2);
  const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
  const double fx = x - x0, fy = y - y0;
  const auto at = [&](int yy, int xx) { return static_cast<double>(img[static_cast<std::size_t>(yy) * W + xx]); };
  const double top = at(y0, x0) * (1 - fx) + at(y0, x1) * fx;
  const double bot = at(y1, x0) * (1 - fx) + at(y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

Affine2D random_augmentation(const TrainConfig& config, int H, int W, std::uint64_t seed) {
  Rng rng(seed);
  const bool flip = rng.uniform() < 0.5;
  const double angle = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg) * std::numbers::pi / 180.0;
  Affine2D a = Affine2D::rotation(angle, 0.5 * (W - 1), 0.5 * (H - 1));
  if (flip) a = a.after(Affine2D::horizontal_flip(W));
  return a;
}

template <class T>
double l1_penalty(const ModelParams<T>& p, double l1, ModelParams<T>* grads) {
  if (l1 == 0.0) return 0.0;
  double s = 0.0;
  for (int id = 0; id < kNumParams; ++id) {
    if (is_bias(id)) continue;
    const auto& w = p[id].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double v = static_cast<double>(w[i]);
      s += std::abs(v);
      if (grads) (*grads)[id].data[i] += static_cast<T>(l1 * ((v > 0) - (v < 0)));
    }
  }
  return l1 * s;
}

std::vector<Prepared<float>> prepare_all(const std::vector<Sample>& samples, int H, int W, const TrainConfig& config) {
  std::vector<Prepared<float>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare<float>(s, H, W, config, false, 0));
  return out;
}

void check_sample(const Sample& s, int H, int W, const TrainConfig& config, int dense_channels) {
  if (s.image.size() != pixels(H, W)) {
    throw NnError(NnError::Kind::ShapeError, "sample " + s.study_id + "/" + std::to_string(s.slice_index) +
                                                 " image is not " + std::to_string(H) + "x" + std::to_string(W));
  }
  if (uses_heatmaps(config.loss_mode) && static_cast<int>(s.lines.size()) != dense_channels) {
    throw NnError(NnError::Kind::ShapeError, "sample " + s.study_id + " has " + std::to_string(s.lines.size()) +
                                                 " intersection lines, model expects " + std::to_string(dense_channels));
  }
  if (config.loss_mode == LossMode::Seg && s.mask.size() != pixels(H, W)) {
    throw NnError(NnError::Kind::ShapeError, "sample " + s.study_id + " has no segmentation mask of matching size");
  }
  if (config.loss_mode == LossMode::Cls && s.label != 0 && s.label != 1) {
    throw NnError(NnError::Kind::LabelOutOfRange, "sample " + s.study_id + " label must be 0 or 1");
  }
}

}  // namespace

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::Ori: return "ori";
    case LossMode::Loc: return "loc";
    case LossMode::MTL: return "mtl";
    case LossMode::Seg: return "seg";
    case LossMode::Cls: return "cls";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (l == "ori") return LossMode::Ori;
  if (l == "loc") return LossMode::Loc;
  if (l == "mtl") return LossMode::MTL;
  if (l == "seg") return LossMode::Seg;
  if (l == "cls") return LossMode::Cls;
  throw NnError(NnError::Kind::BadConfig, "unknown loss mode '" + s + "' (expected ori, loc, mtl, seg or cls)");
}

Outputs outputs_for(LossMode m) {
  switch (m) {
    case LossMode::Ori: return {true, false};
    case LossMode::Loc: return {false, true};
    case LossMode::MTL: return {true, true};
    case LossMode::Seg: return {true, false};
    case LossMode::Cls: return {false, true};
  }
  return {};
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw NnError(NnError::Kind::BadConfig, what); };
  if (!(lr > 0) || !std::isfinite(lr)) bad("lr must be a positive finite number");
  if (halve_every < 1) bad("halve_every must be >= 1");
  if (epochs < 0) bad("epochs must be >= 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(l1_reg >= 0) || !std::isfinite(l1_reg)) bad("l1_reg must be >= 0");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) bad("weight_decay must be >= 0");
  if (!(max_rotation_deg >= 0) || max_rotation_deg > 180) bad("max_rotation_deg must lie in [0, 180]");
  if (!(sigma > 0) || !std::isfinite(sigma)) bad("sigma must be > 0");
  if (dense_channels < 1) bad("dense_channels must be >= 1");
}

template <class T>
Prepared<T> prepare(const Sample& s, int H, int W, const TrainConfig& config, bool augment, std::uint64_t aug_seed) {
  Prepared<T> out;
  out.location = s.location;
  out.label = s.label;
  const std::size_t n = pixels(H, W);
  const bool need_heatmaps = uses_heatmaps(config.loss_mode);
  const bool need_mask = config.loss_mode == LossMode::Seg;

  if (!augment) {
    out.image.assign(s.image.begin(), s.image.end());
    if (need_mask) out.mask = s.mask;
    if (need_heatmaps) {
      const auto hm = supervision::lines_heatmap(s.lines, W, H, supervision::GaussianSigma(config.sigma));
      out.heatmaps.assign(hm.values.begin(), hm.values.end());
    }
    return out;
  }

  const Affine2D fwd = random_augmentation(config, H, W, aug_seed);
  const Affine2D inv = fwd.inverse();
  out.image.resize(n);
  if (need_mask) out.mask.resize(n);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double sx, sy;
      inv.apply(x, y, sx, sy);
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      out.image[i] = static_cast<T>(bilinear(s.image, H, W, sx, sy));
      if (need_mask) {
        const int nx = std::clamp(static_cast<int>(std::lround(sx)), 0, W - 1);
        const int ny = std::clamp(static_cast<int>(std::lround(sy)), 0, H - 1);
        out.mask[i] = s.mask[static_cast<std::size_t>(ny) * W + nx];
      }
    }
  }
  if (need_heatmaps) {
    std::vector<geometry::LineABC> lines;
    lines.reserve(s.lines.size());
    for (const auto& l : s.lines) lines.push_back(supervision::transform_line(l, fwd));
    const auto hm = supervision::lines_heatmap(lines, W, H, supervision::GaussianSigma(config.sigma));
    out.heatmaps.assign(hm.values.begin(), hm.values.end());
  }
  return out;
}

template <class T>
double batch_objective(const ModelParams<T>& params, std::span<const Prepared<T>> batch, int H, int W, LossMode mode,
                       const ClassWeights& weights, double l1_reg, ModelParams<T>* grads) {
  if (batch.empty()) throw NnError(NnError::Kind::EmptyDataset, "empty batch");
  const Outputs outs = outputs_for(mode);
  const int K = params.dense_channels;
  const std::size_t n = pixels(H, W);
  const auto N = static_cast<double>(batch.size());
  if (mode == LossMode::Seg && K != kSegClasses) {
    throw NnError(NnError::Kind::ShapeError, "segmentation needs a " + std::to_string(kSegClasses) + "-channel head");
  }

  Cache<T> cache;
  std::vector<T> d_dense;
  double total = 0.0;
  for (const auto& s : batch) {
    forward<T>(params, s.image, H, W, outs, cache);
    T d_scalar{};
    if (outs.dense) d_dense.assign(static_cast<std::size_t>(K) * n, T{});

    if (mode == LossMode::Ori || mode == LossMode::MTL) {
      if (s.heatmaps.size() != static_cast<std::size_t>(K) * n) {
        throw NnError(NnError::Kind::ShapeError, "heatmap target does not match the dense head");
      }
      const double scale = 1.0 / (N * K * static_cast<double>(n));
      double se = 0.0;
      for (std::size_t i = 0; i < d_dense.size(); ++i) {
        const double e = static_cast<double>(cache.dense[i]) - static_cast<double>(s.heatmaps[i]);
        se += e * e;
        d_dense[i] = static_cast<T>(2.0 * e * scale);
      }
      total += se * scale;
    }
    if (mode == LossMode::Loc || mode == LossMode::MTL) {
      const double e = static_cast<double>(cache.scalar) - s.location;
      total += e * e / N;
      d_scalar = static_cast<T>(2.0 * e / N);
    }
    if (mode == LossMode::Seg) {
      const T scale = static_cast<T>(1.0 / (N * static_cast<double>(n)));
      total += seg_ce_grad<T>(cache.dense, s.mask, K, scale, d_dense) * static_cast<double>(scale);
    }
    if (mode == LossMode::Cls) {
      const double z = static_cast<double>(cache.scalar);
      total += loss_cls(z, s.label, weights.pos, weights.neg) / N;
      const double w = s.label == 1 ? weights.pos : weights.neg;
      d_scalar = static_cast<T>(w * (sigmoid(z) - s.label) / N);
    }
    if (grads) backward<T>(params, cache, d_dense, d_scalar, *grads);
  }
  return total + l1_penalty(params, l1_reg, grads);
}

TrainResult train(const TrainConfig& config, ModelParams<float> params, const Dataset& data) {
  config.validate();
  if (data.train.empty()) throw NnError(NnError::Kind::EmptyDataset, "training split is empty");
  const int H = data.height, W = data.width;
  for (const auto* split : {&data.train, &data.val}) {
    for (const auto& s : *split) check_sample(s, H, W, config, params.dense_channels);
  }

  ClassWeights weights;
  if (config.loss_mode == LossMode::Cls) {
    std::vector<int> labels;
    for (const auto& s : data.train) labels.push_back(s.label);
    weights = inverse_prevalence_weights(labels);
  }

  const auto val = prepare_all(data.val, H, W, config);
  std::vector<Prepared<float>> train_cache;
  if (!config.augment) train_cache = prepare_all(data.train, H, W, config);

  AdamConfig adam;
  adam.weight_decay = config.weight_decay;
  auto state = AdamState<float>::for_params(params);
  auto grads = params.zeros_like();

  TrainResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n_train = data.train.size();
  std::vector<std::size_t> order(n_train);
  std::vector<Prepared<float>> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr * std::pow(0.5, epoch / config.halve_every);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(mix_seed(config.seed, kShuffleStream), static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(n_train, start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t idx = order[j];
        if (config.augment) {
          const auto aug_seed = mix_seed(mix_seed(config.seed, kAugmentStream), epoch * n_train + idx);
          batch.push_back(prepare<float>(data.train[idx], H, W, config, true, aug_seed));
        } else {
          batch.push_back(train_cache[idx]);
        }
      }
      grads.set_zero();
      const double loss = batch_objective<float>(params, batch, H, W, config.loss_mode, weights, config.l1_reg, &grads);
      if (!std::isfinite(loss)) {
        throw NnError(NnError::Kind::Divergence,
                      "loss became non-finite in epoch " + std::to_string(epoch) + " at batch starting " + std::to_string(start));
      }
      for (int id = 0; id < kNumParams; ++id) grads[id].check_finite(std::string("gradient of ") + param_name(id));
      adam_step(params, grads, state, lr, adam);
      epoch_loss += loss * static_cast<double>(stop - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<double>(n_train);
    rec.val_loss = val.empty() ? rec.train_loss
                               : batch_objective<float>(params, val, H, W, config.loss_mode, weights, 0.0, nullptr);
    if (!std::isfinite(rec.val_loss)) {
      throw NnError(NnError::Kind::Divergence, "validation loss became non-finite in epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (rec.val_loss < best) {
      best = rec.val_loss;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

TrainResult train_pretext(const TrainConfig& config, const Dataset& data) {
  config.validate();
  if (config.loss_mode != LossMode::Ori && config.loss_mode != LossMode::Loc && config.loss_mode != LossMode::MTL) {
    throw NnError(NnError::Kind::BadConfig, "pretext training needs loss mode ori, loc or mtl");
  }
  return train(config, init_params<float>(config.seed, config.dense_channels), data);
}

TrainResult finetune(const TrainConfig& config, ModelParams<float> params, const Dataset& data, FinetuneHead head) {
  TrainConfig c = config;
  if (head == FinetuneHead::Seg) {
    c.loss_mode = LossMode::Seg;
    reset_dense_head(params, kSegClasses, c.seed);
  } else {
    c.loss_mode = LossMode::Cls;
    reset_scalar_head(params, c.seed);
  }
  return train(c, std::move(params), data);
}

double predict_location(const ModelParams<float>& p, const Sample& s, int H, int W) {
  Cache<float> cache;
  forward<float>(p, s.image, H, W, {false, true}, cache);
  return cache.scalar;
}

std::vector<float> predict_dense(const ModelParams<float>& p, const Sample& s, int H, int W) {
  Cache<float> cache;
  forward<float>(p, s.image, H, W, {true, false}, cache);
  return cache.dense;
}

std::vector<std::uint8_t> predict_segmentation(const ModelParams<float>& p, const Sample& s, int H, int W) {
  const auto logits = predict_dense(p, s, H, W);
  const std::size_t n = pixels(H, W);
  const int K = p.dense_channels;
  std::vector<std::uint8_t> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int k = 1; k < K; ++k) {
      if (logits[k * n + i] > logits[best * n + i]) best = k;
    }
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

double predict_probability(const ModelParams<float>& p, const Sample& s, int H, int W) {
  return sigmoid(predict_location(p, s, H, W));
}

#define VIEWSSL_INSTANTIATE(T)                                                                             \
  template Prepared<T> prepare<T>(const Sample&, int, int, const TrainConfig&, bool, std::uint64_t);         \
  template double batch_objective<T>(const ModelParams<T>&, std::span<const Prepared<T>>, int, int, LossMode, \
                                     const ClassWeights&, double, ModelParams<T>*);
VIEWSSL_INSTANTIATE(float)
VIEWSSL_INSTANTIATE(double)
#undef VIEWSSL_INSTANTIATE

}  // namespace viewssl::nn
