#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "viewssl/nn/checkpoint.hpp"
#include "viewssl/nn/train.hpp"
#include "viewssl/pipeline.hpp"
#include "viewssl/random.hpp"
#include "viewssl/supervision.hpp"

using namespace viewssl;
using namespace viewssl::nn;
using namespace fixture;

namespace {

NnError::Kind nn_kind(auto&& fn) {
  try {
    fn();
  } catch (const NnError& e) {
    return e.kind();
  }
  FAIL("expected NnError");
  return NnError::Kind::ShapeError;
}

const pipeline::LoadOptions kSmall{2.0, 32, geometry::LocationMapping::Linear};

}  // namespace

TEST_CASE("forward: shapes, zero weights and determinism") {
  Rng rng(1);
  const auto p = init_params<double>(3, 2);
  Tensor<double> img({1, 64, 64});
  for (auto& v : img.data) v = rng.normal();
  const auto out = forward_pretext(p, img);
  CHECK(out.heatmaps.shape == std::vector<int>{2, 64, 64});
  const auto again = forward_pretext(p, img);
  CHECK(out.heatmaps.data == again.heatmaps.data);
  CHECK(out.location == again.location);

  auto z = zero_params<double>(2);
  z[HeadB].data = {0.25, -0.5};
  z[FcB].data = {0.75};
  const auto zo = forward_pretext(z, img);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 64 * 64; ++i) CHECK(zo.heatmaps.data[c * 64 * 64 + i] == z[HeadB].data[c]);
  }
  CHECK(zo.location == 0.75);

  CHECK(nn_kind([&] { forward_pretext(p, Tensor<double>({1, 30, 32})); }) == NnError::Kind::ShapeError);
}

TEST_CASE("init_params: Glorot bounds, zero biases, seeded") {
  const auto a = init_params<float>(5, 2), b = init_params<float>(5, 2), c = init_params<float>(6, 2);
  CHECK(a[Enc1W].data == b[Enc1W].data);
  CHECK(a[Enc1W].data != c[Enc1W].data);
  for (int id = 0; id < kNumParams; ++id) {
    if (is_bias(id)) {
      for (float v : a[id].data) CHECK(v == 0.0f);
    }
  }
  // 3x3 conv 1->8: fan_in 9, fan_out 72
  const double bound = std::sqrt(6.0 / (9 + 72));
  for (float v : a[Enc1W].data) CHECK(std::abs(v) <= bound);
}

TEST_CASE("loss_ori and loss_loc examples and naive oracle") {
  Tensor<double> t({1, 1, 2, 2}, 0.0), p({1, 1, 2, 2}, 0.5);
  CHECK(loss_ori(t, t) == 0.0);
  CHECK(loss_ori(p, t) == 0.25);
  CHECK(loss_loc(std::vector<double>{0, 0}, std::vector<double>{0, 1}) == 0.5);
  CHECK(loss_loc(std::vector<double>{0.3}, std::vector<double>{0.3}) == 0.0);
  CHECK(nn_kind([] { loss_loc(std::vector<double>{0}, std::vector<double>{0, 1}); }) == NnError::Kind::LengthMismatch);
  CHECK(nn_kind([] { loss_ori(Tensor<double>({1, 2}), Tensor<double>({2, 1})); }) == NnError::Kind::ShapeError);

  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(3)), k = 1 + static_cast<int>(rng.below(3));
    Tensor<double> a({n, k, 5, 7}), b({n, k, 5, 7});
    for (auto& v : a.data) v = rng.normal();
    for (auto& v : b.data) v = rng.normal();
    double want = 0;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < k; ++c)
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 7; ++x) {
            const std::size_t idx = ((static_cast<std::size_t>(i) * k + c) * 5 + y) * 7 + x;
            want += (a.data[idx] - b.data[idx]) * (a.data[idx] - b.data[idx]);
          }
    want /= n * k * 35.0;
    CHECK(std::abs(loss_ori(a, b) - want) < 1e-12);

    // residuals scaled by lambda scale both losses by lambda^2
    const double lambda = rng.uniform(0.1, 4);
    Tensor<double> scaled = b;
    std::vector<double> lp(static_cast<std::size_t>(n)), lt(lp.size()), ls(lp.size());
    for (std::size_t i = 0; i < a.size(); ++i) scaled.data[i] = a.data[i] + lambda * (b.data[i] - a.data[i]);
    for (std::size_t i = 0; i < lp.size(); ++i) {
      lt[i] = rng.uniform();
      lp[i] = rng.uniform();
      ls[i] = lt[i] + lambda * (lp[i] - lt[i]);
    }
    CHECK(std::abs(loss_ori(scaled, a) - lambda * lambda * loss_ori(b, a)) < 1e-12);
    CHECK(std::abs(loss_loc(ls, lt) - lambda * lambda * loss_loc(lp, lt)) < 1e-12);

    const double x = rng.uniform(), y = rng.uniform();
    CHECK(loss_mtl(x, y) == x + y);
    CHECK(loss_mtl(x, y) == loss_mtl(y, x));
  }
  CHECK(loss_mtl(0.25, 0.5) == 0.75);
  CHECK(loss_mtl(0, 0) == 0);
}

TEST_CASE("loss_seg and loss_cls") {
  Tensor<double> uniform({kSegClasses, 3, 3}, 0.2);
  const std::vector<std::uint8_t> labels{0, 1, 2, 3, 0, 1, 2, 3, 0};
  CHECK(loss_seg(uniform, labels) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor<double> saturated({kSegClasses, 3, 3}, -50.0);
  for (std::size_t i = 0; i < labels.size(); ++i) saturated.data[labels[i] * 9 + i] = 50.0;
  CHECK(loss_seg(saturated, labels) < 1e-6);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> logits({kSegClasses, 4, 5});
    for (auto& v : logits.data) v = 3 * rng.normal();
    std::vector<std::uint8_t> l(20);
    for (auto& v : l) v = static_cast<std::uint8_t>(rng.below(kSegClasses));
    double want = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      double z = 0;
      for (int c = 0; c < kSegClasses; ++c) z += std::exp(logits.data[c * 20 + i]);
      want += -std::log(std::exp(logits.data[l[i] * 20 + i]) / z);
    }
    CHECK(std::abs(loss_seg(logits, l) - want / 20) < 1e-10);
  }
  std::vector<std::uint8_t> bad(labels);
  bad[0] = 4;
  CHECK(nn_kind([&] { loss_seg(uniform, bad); }) == NnError::Kind::LabelOutOfRange);

  CHECK(loss_cls(0.0, 1, 1, 1) == doctest::Approx(std::log(2.0)));
  CHECK(loss_cls(0.0, 0, 2, 3) == doctest::Approx(3 * std::log(2.0)));
  CHECK(loss_cls(1.5, 1, 2, 3) == doctest::Approx(-2 * std::log(1 / (1 + std::exp(-1.5)))));
  CHECK(std::isfinite(loss_cls(-800, 1, 1, 1)));
  CHECK(nn_kind([] { loss_cls(0, 2, 1, 1); }) == NnError::Kind::LabelOutOfRange);

  const std::vector<int> y{1, 0, 0, 0};
  const auto w = inverse_prevalence_weights(y);
  CHECK(w.pos == 2.0);
  CHECK(w.neg == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("adam: closed-form first step, zero gradient, scalar reference") {
  auto p = init_params<double>(1, 2);
  const auto before = p;
  auto g = p.zeros_like();
  auto state = AdamState<double>::for_params(p);
  adam_step(p, g, state, 1e-3);
  for (int id = 0; id < kNumParams; ++id) CHECK(p[id].data == before[id].data);

  p = before;
  state = AdamState<double>::for_params(p);
  for (int id = 0; id < kNumParams; ++id) std::fill(g[id].data.begin(), g[id].data.end(), 1.0);
  adam_step(p, g, state, 1e-3);
  // m_hat = v_hat = 1 after one step with g = 1
  const double delta = -1e-3 / (1.0 + 1e-8);
  for (int id = 0; id < kNumParams; ++id) {
    for (std::size_t i = 0; i < p[id].size(); ++i) CHECK(std::abs(p[id].data[i] - before[id].data[i] - delta) < 1e-15);
  }

  // two steps on f(theta) = (theta - 3)^2
  double ref_theta = 0.5, m = 0, v = 0;
  ScalarAdam adam;
  double theta = 0.5;
  for (int t = 1; t <= 2; ++t) {
    const double grad = 2 * (ref_theta - 3);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    ref_theta -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    theta = adam.update(theta, 2 * (theta - 3), 0.01);
    CHECK(std::abs(theta - ref_theta) < 1e-12);
  }
}

TEST_CASE("backward: single linear unit through the scalar head") {
  // Zero network, only the fc head reads a constant GAP feature: with all
  // conv weights zero and enc3 bias 2 the pooled feature is 2 everywhere.
  auto p = zero_params<double>(2);
  p[Enc3B].data.assign(p[Enc3B].size(), 0.0);
  p[Enc3B].data[0] = 2.0;
  p[FcW].data[0] = 1.0;
  std::vector<double> img(16 * 16, 0.0);
  Cache<double> cache;
  forward(p, std::span<const double>(img), 16, 16, {false, true}, cache);
  CHECK(cache.scalar == 2.0);
  auto g = p.zeros_like();
  // L = (y - 0)^2, dL/dy = 2y = 4; dL/dw = 4 * x = 8
  backward(p, cache, std::span<const double>(), 2.0 * cache.scalar, g);
  CHECK(g[FcW].data[0] == doctest::Approx(8.0));
}

TEST_CASE("backward: all-zero input gives zero first-layer weight gradients") {
  Rng rng(4);
  const auto p = init_params<double>(7, 2);
  Sample s = synthetic_sample(rng, 32, 32);
  std::fill(s.image.begin(), s.image.end(), 0.0f);
  TrainConfig cfg;
  const std::vector<Prepared<double>> batch{prepare<double>(s, 32, 32, cfg, false, 0)};
  auto g = p.zeros_like();
  batch_objective<double>(p, batch, 32, 32, LossMode::MTL, {}, 0.0, &g);
  for (double v : g[Enc1W].data) CHECK(v == 0.0);
  bool head_bias_nonzero = false;
  for (double v : g[HeadB].data) head_bias_nonzero |= v != 0.0;
  CHECK(head_bias_nonzero);
  CHECK(g[FcB].data[0] != 0.0);
}

TEST_CASE("gradient check: full pretext model, 64-bit central differences") {
  // 16x16 keeps the number of ReLU/max-pool kinks within h of a
  // perturbed parameter small; a crossed kink breaks the difference quotient
  // itself, not the analytic gradient.
  const auto r = check_pretext_gradients(1, 16, 1, 1e-5, 200);
  MESSAGE("worst relative error ", r.worst);
  CHECK(r.failures == 0);
}

TEST_CASE("gradient check: larger batch with a finer step") {
  const auto r = check_pretext_gradients(5, 32, 2, 1e-7, 200);
  MESSAGE("worst relative error ", r.worst);
  CHECK(r.failures == 0);
}

TEST_CASE("gradient check: segmentation and classification objectives") {
  Rng rng(6);
  auto p = init_params<double>(12, kSegClasses);
  TrainConfig cfg;
  cfg.loss_mode = LossMode::Seg;
  std::vector<Prepared<double>> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(prepare<double>(synthetic_sample(rng, 16, 16), 16, 16, cfg, false, 0));
  batch[0].label = 1;
  batch[1].label = 0;
  const ClassWeights w{1.5, 0.75};
  for (const auto mode : {LossMode::Seg, LossMode::Cls}) {
    auto g = p.zeros_like();
    batch_objective<double>(p, batch, 16, 16, mode, w, 0.0, &g);
    for (int trial = 0; trial < 40; ++trial) {
      const int id = static_cast<int>(rng.below(kNumParams));
      const std::size_t i = rng.below(p[id].size());
      const double orig = p[id].data[i], h = 1e-5;
      p[id].data[i] = orig + h;
      const double up = batch_objective<double>(p, batch, 16, 16, mode, w, 0.0, nullptr);
      p[id].data[i] = orig - h;
      const double down = batch_objective<double>(p, batch, 16, 16, mode, w, 0.0, nullptr);
      p[id].data[i] = orig;
      const double numeric = (up - down) / (2 * h), analytic = g[id].data[i];
      CHECK(std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8}) < 1e-4);
    }
  }
}

TEST_CASE("augmentation regenerates heatmaps from the transformed lines") {
  Rng rng(7);
  const int H = 32, W = 32;
  TrainConfig cfg;
  cfg.max_rotation_deg = 25;
  for (int trial = 0; trial < 20; ++trial) {
    Sample s = synthetic_sample(rng, H, W);
    // coordinate images: bilinear warping reproduces linear functions exactly,
    // which recovers the inverse map for every interior pixel
    Sample sx = s, sy = s;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        sx.image[static_cast<std::size_t>(y) * W + x] = static_cast<float>(x);
        sy.image[static_cast<std::size_t>(y) * W + x] = static_cast<float>(y);
      }
    }
    const auto seed = static_cast<std::uint64_t>(trial) * 7919 + 1;
    const auto a = prepare<double>(s, H, W, cfg, true, seed);
    const auto px = prepare<double>(sx, H, W, cfg, true, seed);
    const auto py = prepare<double>(sy, H, W, cfg, true, seed);
    const double denom = 2 * cfg.sigma * cfg.sigma;
    int checked = 0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        const double u = px.image[i], v = py.image[i];
        if (u <= 0.5 || v <= 0.5 || u >= W - 1.5 || v >= H - 1.5) continue;
        for (std::size_t k = 0; k < s.lines.size(); ++k) {
          const double d = s.lines[k].signed_distance(u, v);
          CHECK(std::abs(a.heatmaps[k * H * W + i] - std::exp(-d * d / denom)) < 1e-6);
        }
        ++checked;
      }
    }
    CHECK(checked > H * W / 3);
  }
  // the same seed reproduces the same draw
  Sample s = synthetic_sample(rng, H, W);
  CHECK(prepare<float>(s, H, W, cfg, true, 42).image == prepare<float>(s, H, W, cfg, true, 42).image);
}

TEST_CASE("horizontal flip: transformed line heatmap equals flipped heatmap") {
  Rng rng(8);
  const int W = 24, H = 20;
  const auto flip = supervision::Affine2D::horizontal_flip(W);
  for (int trial = 0; trial < 100; ++trial) {
    const double t = rng.uniform(0, std::numbers::pi);
    const auto line = geometry::LineABC::canonical(std::cos(t), std::sin(t), rng.uniform(-20, 20));
    const auto a = supervision::line_heatmap(line, W, H);
    const auto b = supervision::line_heatmap(supervision::transform_line(line, flip), W, H);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        CHECK(std::abs(b.values[static_cast<std::size_t>(y) * W + x] - a.values[static_cast<std::size_t>(y) * W + (W - 1 - x)]) < 1e-12);
      }
    }
  }
}

TEST_CASE("training: epochs = 0, determinism, overfit sanity, errors") {
  Dataset data = pipeline::phantom_dataset(1, 0, 0.0, 17, {}, kSmall);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 4;
  const auto none = train_pretext(cfg, data);
  CHECK(none.history.empty());
  const auto init = init_params<float>(cfg.seed, cfg.dense_channels);
  for (int id = 0; id < kNumParams; ++id) CHECK(none.params[id].data == init[id].data);

  cfg.epochs = 50;
  cfg.lr = 3e-3;
  const auto a = train_pretext(cfg, data);
  REQUIRE(a.history.size() == 50);
  CHECK(a.history.back().train_loss < a.history.front().train_loss);

  cfg.epochs = 3;
  cfg.augment = true;
  const auto r1 = train_pretext(cfg, data), r2 = train_pretext(cfg, data);
  for (std::size_t e = 0; e < r1.history.size(); ++e) CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
  for (int id = 0; id < kNumParams; ++id) CHECK(r1.params[id].data == r2.params[id].data);

  Dataset empty;
  empty.height = empty.width = 32;
  CHECK(nn_kind([&] { train_pretext(cfg, empty); }) == NnError::Kind::EmptyDataset);
  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK(nn_kind([&] { train_pretext(bad, data); }) == NnError::Kind::BadConfig);
  bad = cfg;
  bad.loss_mode = LossMode::Seg;
  CHECK(nn_kind([&] { train_pretext(bad, data); }) == NnError::Kind::BadConfig);
}

TEST_CASE("training: divergence fails fast with the epoch") {
  Dataset data = pipeline::phantom_dataset(1, 0, 0.0, 18, {}, kSmall);
  data.train[0].location = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.loss_mode = LossMode::Loc;
  try {
    train_pretext(cfg, data);
    FAIL("expected divergence");
  } catch (const NnError& e) {
    CHECK(e.kind() == NnError::Kind::Divergence);
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("finetune heads and checkpoint round trip") {
  Dataset data = pipeline::phantom_dataset(2, 0, 0.5, 19, {}, kSmall);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  const auto pre = train_pretext(cfg, data);

  cfg.loss_mode = LossMode::Seg;
  const auto seg = finetune(cfg, pre.params, data, FinetuneHead::Seg);
  CHECK(seg.params.dense_channels == kSegClasses);
  CHECK(seg.params[HeadW].shape[0] == kSegClasses);
  const auto mask = predict_segmentation(seg.params, data.train[0], data.height, data.width);
  CHECK(mask.size() == data.train[0].image.size());
  for (auto v : mask) CHECK(v < kSegClasses);

  cfg.loss_mode = LossMode::Cls;
  const auto cls = finetune(cfg, pre.params, data, FinetuneHead::Cls);
  const double prob = predict_probability(cls.params, data.train[0], data.height, data.width);
  CHECK(prob > 0.0);
  CHECK(prob < 1.0);

  const auto dir = std::filesystem::temp_directory_path() / "viewssl_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, seg.params, R"({"note": "test"})");
  const auto back = load_checkpoint(dir);
  CHECK(back.dense_channels == seg.params.dense_channels);
  for (int id = 0; id < kNumParams; ++id) {
    CHECK(back[id].shape == seg.params[id].shape);
    CHECK(back[id].data == seg.params[id].data);
  }
  std::filesystem::remove(dir / param_name(FcW) += ".pft");
  CHECK_THROWS(load_checkpoint(dir));
  std::filesystem::remove_all(dir);
}
