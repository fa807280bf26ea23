#include "viewssl/nn/model.hpp"

#include <cmath>

#include "layers.hpp"
#include "viewssl/random.hpp"

namespace viewssl::nn {

namespace {

struct ParamSpec {
  const char* name;
  int cout, cin, k;  // k = kernel side; 0 marks a bias of length cout
};

ParamSpec spec_of(int id, int dense_channels) {
  switch (id) {
    case Enc1W: return {"enc1.weight", kEnc1, 1, 3};
    case Enc1B: return {"enc1.bias", kEnc1, 0, 0};
    case Enc2W: return {"enc2.weight", kEnc2, kEnc1, 3};
    case Enc2B: return {"enc2.bias", kEnc2, 0, 0};
    case Enc3W: return {"enc3.weight", kEnc3, kEnc2, 3};
    case Enc3B: return {"enc3.bias", kEnc3, 0, 0};
    case Dec1W: return {"dec1.weight", kDec1, kEnc3 + kEnc2, 3};
    case Dec1B: return {"dec1.bias", kDec1, 0, 0};
    case Dec2W: return {"dec2.weight", kDec2, kDec1 + kEnc1, 3};
    case Dec2B: return {"dec2.bias", kDec2, 0, 0};
    case HeadW: return {"head.weight", dense_channels, kDec2, 1};
    case HeadB: return {"head.bias", dense_channels, 0, 0};
    case FcW: return {"fc.weight", 1, kEnc3, 1};
    case FcB: return {"fc.bias", 1, 0, 0};
    default: return {"?", 0, 0, 0};
  }
}

std::vector<int> shape_of(const ParamSpec& s) {
  if (s.k == 0) return {s.cout};
  if (s.k == 1) return {s.cout, s.cin};
  return {s.cout, s.cin, s.k, s.k};
}

template <class T>
void glorot_fill(Tensor<T>& t, const ParamSpec& s, Rng& rng) {
  if (s.k == 0) {
    std::fill(t.data.begin(), t.data.end(), T{});
    return;
  }
  const double fan_in = static_cast<double>(s.cin) * s.k * s.k;
  const double fan_out = static_cast<double>(s.cout) * s.k * s.k;
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
void make_param(ModelParams<T>& p, int id) {
  p[id] = Tensor<T>(shape_of(spec_of(id, p.dense_channels)));
}

void check_dims(int height, int width) {
  if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0) {
    throw NnError(NnError::Kind::ShapeError, "input height and width must be positive multiples of 4 (got " +
                                                 std::to_string(height) + "x" + std::to_string(width) + ")");
  }
}

}  // namespace

const char* param_name(int id) { return spec_of(id, 1).name; }

bool is_bias(int id) { return spec_of(id, 1).k == 0; }

template <class T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template <class T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams<T> z = *this;
  z.set_zero();
  return z;
}

template <class T>
void ModelParams<T>::set_zero() {
  for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), T{});
}

template <class T>
ModelParams<T> zero_params(int dense_channels) {
  if (dense_channels < 1) throw NnError(NnError::Kind::ShapeError, "dense head needs >= 1 channel");
  ModelParams<T> p;
  p.dense_channels = dense_channels;
  for (int id = 0; id < kNumParams; ++id) make_param(p, id);
  return p;
}

template <class T>
ModelParams<T> init_params(std::uint64_t seed, int dense_channels) {
  ModelParams<T> p = zero_params<T>(dense_channels);
  Rng rng(mix_seed(seed, 0x1417));
  for (int id = 0; id < kNumParams; ++id) glorot_fill(p[id], spec_of(id, dense_channels), rng);
  return p;
}

template <class T>
void reset_dense_head(ModelParams<T>& p, int channels, std::uint64_t seed) {
  if (channels < 1) throw NnError(NnError::Kind::ShapeError, "dense head needs >= 1 channel");
  p.dense_channels = channels;
  make_param(p, HeadW);
  make_param(p, HeadB);
  Rng rng(mix_seed(seed, 0x4EAD));
  glorot_fill(p[HeadW], spec_of(HeadW, channels), rng);
}

template <class T>
void reset_scalar_head(ModelParams<T>& p, std::uint64_t seed) {
  make_param(p, FcW);
  make_param(p, FcB);
  Rng rng(mix_seed(seed, 0xFC));
  glorot_fill(p[FcW], spec_of(FcW, p.dense_channels), rng);
}

template <class T>
void forward(const ModelParams<T>& p, std::span<const T> image, int H, int W, Outputs outputs, Cache<T>& c) {
  using namespace layers;
  check_dims(H, W);
  if (image.size() != static_cast<std::size_t>(H) * W) {
    throw NnError(NnError::Kind::ShapeError, "image buffer does not match its height x width");
  }
  c.height = H;
  c.width = W;
  c.outputs = outputs;
  const int H2 = H / 2, W2 = W / 2, H4 = H / 4, W4 = W / 4;
  const int H8 = pooled(H4), W8 = pooled(W4);
  const auto plane = [](int h, int w) { return static_cast<std::size_t>(h) * w; };

  c.pad_x.assign(padded_plane(H, W), T{});
  write_padded(image.data(), 1, H, W, c.pad_x.data());
  c.e1.resize(kEnc1 * plane(H, W));
  conv3x3(c.pad_x.data(), 1, H, W, p[Enc1W].data.data(), p[Enc1B].data.data(), kEnc1, c.e1.data());
  relu_inplace(c.e1.data(), c.e1.size());

  std::vector<T> tmp(kEnc1 * plane(H2, W2));
  c.arg1.resize(tmp.size());
  maxpool2(c.e1.data(), kEnc1, H, W, tmp.data(), c.arg1.data());
  c.pad_p1.assign(kEnc1 * padded_plane(H2, W2), T{});
  write_padded(tmp.data(), kEnc1, H2, W2, c.pad_p1.data());
  c.e2.resize(kEnc2 * plane(H2, W2));
  conv3x3(c.pad_p1.data(), kEnc1, H2, W2, p[Enc2W].data.data(), p[Enc2B].data.data(), kEnc2, c.e2.data());
  relu_inplace(c.e2.data(), c.e2.size());

  tmp.resize(kEnc2 * plane(H4, W4));
  c.arg2.resize(tmp.size());
  maxpool2(c.e2.data(), kEnc2, H2, W2, tmp.data(), c.arg2.data());
  c.pad_p2.assign(kEnc2 * padded_plane(H4, W4), T{});
  write_padded(tmp.data(), kEnc2, H4, W4, c.pad_p2.data());
  c.e3.resize(kEnc3 * plane(H4, W4));
  conv3x3(c.pad_p2.data(), kEnc2, H4, W4, p[Enc3W].data.data(), p[Enc3B].data.data(), kEnc3, c.e3.data());
  relu_inplace(c.e3.data(), c.e3.size());

  if (outputs.scalar) {
    c.p3.resize(kEnc3 * plane(H8, W8));
    c.arg3.resize(c.p3.size());
    maxpool2(c.e3.data(), kEnc3, H4, W4, c.p3.data(), c.arg3.data());
    c.gap.assign(kEnc3, T{});
    const std::size_t n8 = plane(H8, W8);
    for (int ch = 0; ch < kEnc3; ++ch) {
      T s{};
      for (std::size_t i = 0; i < n8; ++i) s += c.p3[ch * n8 + i];
      c.gap[ch] = s / static_cast<T>(n8);
    }
    T s = p[FcB].data[0];
    for (int ch = 0; ch < kEnc3; ++ch) s += p[FcW].data[ch] * c.gap[ch];
    c.scalar = s;
  }

  if (outputs.dense) {
    c.pad_c1.assign((kEnc3 + kEnc2) * padded_plane(H2, W2), T{});
    write_upsampled_padded(c.e3.data(), kEnc3, H4, W4, c.pad_c1.data());
    write_padded(c.e2.data(), kEnc2, H2, W2, c.pad_c1.data() + kEnc3 * padded_plane(H2, W2));
    c.d1.resize(kDec1 * plane(H2, W2));
    conv3x3(c.pad_c1.data(), kEnc3 + kEnc2, H2, W2, p[Dec1W].data.data(), p[Dec1B].data.data(), kDec1, c.d1.data());
    relu_inplace(c.d1.data(), c.d1.size());

    c.pad_c2.assign((kDec1 + kEnc1) * padded_plane(H, W), T{});
    write_upsampled_padded(c.d1.data(), kDec1, H2, W2, c.pad_c2.data());
    write_padded(c.e1.data(), kEnc1, H, W, c.pad_c2.data() + kDec1 * padded_plane(H, W));
    c.d2.resize(kDec2 * plane(H, W));
    conv3x3(c.pad_c2.data(), kDec1 + kEnc1, H, W, p[Dec2W].data.data(), p[Dec2B].data.data(), kDec2, c.d2.data());
    relu_inplace(c.d2.data(), c.d2.size());

    const int K = p.dense_channels;
    const std::size_t n = plane(H, W);
    c.dense.resize(K * n);
    for (int k = 0; k < K; ++k) {
      T* o = c.dense.data() + k * n;
      std::fill(o, o + n, p[HeadB].data[k]);
      for (int ch = 0; ch < kDec2; ++ch) {
        const T wv = p[HeadW].data[k * kDec2 + ch];
        const T* a = c.d2.data() + ch * n;
        for (std::size_t i = 0; i < n; ++i) o[i] += wv * a[i];
      }
    }
  }
}

template <class T>
void backward(const ModelParams<T>& p, const Cache<T>& c, std::span<const T> d_dense, T d_scalar, ModelParams<T>& g) {
  using namespace layers;
  const int H = c.height, W = c.width;
  const int H2 = H / 2, W2 = W / 2, H4 = H / 4, W4 = W / 4;
  const int H8 = pooled(H4), W8 = pooled(W4);
  const auto plane = [](int h, int w) { return static_cast<std::size_t>(h) * w; };

  std::vector<T> de1(c.e1.size(), T{}), de2(c.e2.size(), T{}), de3(c.e3.size(), T{});
  std::vector<T> flipped;

  if (c.outputs.dense) {
    const int K = p.dense_channels;
    const std::size_t n = plane(H, W);
    if (d_dense.size() != K * n) throw NnError(NnError::Kind::ShapeError, "dense gradient has the wrong size");
    std::vector<T> dd2(c.d2.size(), T{});
    for (int k = 0; k < K; ++k) {
      const T* gk = d_dense.data() + k * n;
      T sb{};
      for (std::size_t i = 0; i < n; ++i) sb += gk[i];
      g[HeadB].data[k] += sb;
      for (int ch = 0; ch < kDec2; ++ch) {
        const T* a = c.d2.data() + ch * n;
        T* da = dd2.data() + ch * n;
        const T wv = p[HeadW].data[k * kDec2 + ch];
        T sw{};
        for (std::size_t i = 0; i < n; ++i) {
          sw += gk[i] * a[i];
          da[i] += wv * gk[i];
        }
        g[HeadW].data[k * kDec2 + ch] += sw;
      }
    }
    relu_backward(c.d2.data(), dd2.data(), dd2.size());
    conv3x3_weight_grad(c.pad_c2.data(), kDec1 + kEnc1, H, W, dd2.data(), kDec2, g[Dec2W].data.data(),
                        g[Dec2B].data.data());
    // input gradient of dec2, computed on the padded output gradient
    std::vector<T> pad_g(kDec2 * padded_plane(H, W), T{});
    write_padded(dd2.data(), kDec2, H, W, pad_g.data());
    flip_transpose(p[Dec2W].data.data(), kDec2, kDec1 + kEnc1, flipped);
    std::vector<T> dc2((kDec1 + kEnc1) * plane(H, W));
    conv3x3<T>(pad_g.data(), kDec2, H, W, flipped.data(), nullptr, kDec1 + kEnc1, dc2.data());
    // split: upsampled dec1 channels, then the enc1 skip
    std::vector<T> dd1(c.d1.size(), T{});
    for (int ch = 0; ch < kDec1; ++ch) {
      const T* src = dc2.data() + ch * plane(H, W);
      T* dst = dd1.data() + ch * plane(H2, W2);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) dst[(y / 2) * W2 + x / 2] += src[y * W + x];
      }
    }
    for (std::size_t i = 0; i < de1.size(); ++i) de1[i] += dc2[kDec1 * plane(H, W) + i];

    relu_backward(c.d1.data(), dd1.data(), dd1.size());
    conv3x3_weight_grad(c.pad_c1.data(), kEnc3 + kEnc2, H2, W2, dd1.data(), kDec1, g[Dec1W].data.data(),
                        g[Dec1B].data.data());
    pad_g.assign(kDec1 * padded_plane(H2, W2), T{});
    write_padded(dd1.data(), kDec1, H2, W2, pad_g.data());
    flip_transpose(p[Dec1W].data.data(), kDec1, kEnc3 + kEnc2, flipped);
    std::vector<T> dc1((kEnc3 + kEnc2) * plane(H2, W2));
    conv3x3<T>(pad_g.data(), kDec1, H2, W2, flipped.data(), nullptr, kEnc3 + kEnc2, dc1.data());
    for (int ch = 0; ch < kEnc3; ++ch) {
      const T* src = dc1.data() + ch * plane(H2, W2);
      T* dst = de3.data() + ch * plane(H4, W4);
      for (int y = 0; y < H2; ++y) {
        for (int x = 0; x < W2; ++x) dst[(y / 2) * W4 + x / 2] += src[y * W2 + x];
      }
    }
    for (std::size_t i = 0; i < de2.size(); ++i) de2[i] += dc1[kEnc3 * plane(H2, W2) + i];
  }

  if (c.outputs.scalar) {
    g[FcB].data[0] += d_scalar;
    const std::size_t n8 = plane(H8, W8);
    std::vector<T> dp3(kEnc3 * n8);
    for (int ch = 0; ch < kEnc3; ++ch) {
      g[FcW].data[ch] += d_scalar * c.gap[ch];
      const T dg = p[FcW].data[ch] * d_scalar / static_cast<T>(n8);
      std::fill(dp3.begin() + ch * n8, dp3.begin() + (ch + 1) * n8, dg);
    }
    maxpool2_backward(dp3.data(), c.arg3.data(), kEnc3, H4, W4, de3.data());
  }

  // enc3
  relu_backward(c.e3.data(), de3.data(), de3.size());
  conv3x3_weight_grad(c.pad_p2.data(), kEnc2, H4, W4, de3.data(), kEnc3, g[Enc3W].data.data(), g[Enc3B].data.data());
  std::vector<T> pad_g(kEnc3 * padded_plane(H4, W4), T{});
  write_padded(de3.data(), kEnc3, H4, W4, pad_g.data());
  flip_transpose(p[Enc3W].data.data(), kEnc3, kEnc2, flipped);
  std::vector<T> dp2(kEnc2 * plane(H4, W4));
  conv3x3<T>(pad_g.data(), kEnc3, H4, W4, flipped.data(), nullptr, kEnc2, dp2.data());
  maxpool2_backward(dp2.data(), c.arg2.data(), kEnc2, H2, W2, de2.data());

  // enc2
  relu_backward(c.e2.data(), de2.data(), de2.size());
  conv3x3_weight_grad(c.pad_p1.data(), kEnc1, H2, W2, de2.data(), kEnc2, g[Enc2W].data.data(), g[Enc2B].data.data());
  pad_g.assign(kEnc2 * padded_plane(H2, W2), T{});
  write_padded(de2.data(), kEnc2, H2, W2, pad_g.data());
  flip_transpose(p[Enc2W].data.data(), kEnc2, kEnc1, flipped);
  std::vector<T> dp1(kEnc1 * plane(H2, W2));
  conv3x3<T>(pad_g.data(), kEnc2, H2, W2, flipped.data(), nullptr, kEnc1, dp1.data());
  maxpool2_backward(dp1.data(), c.arg1.data(), kEnc1, H, W, de1.data());

  // enc1 (no input gradient needed)
  relu_backward(c.e1.data(), de1.data(), de1.size());
  conv3x3_weight_grad(c.pad_x.data(), 1, H, W, de1.data(), kEnc1, g[Enc1W].data.data(), g[Enc1B].data.data());
}

template <class T>
PretextOutput forward_pretext(const ModelParams<T>& p, const Tensor<T>& image) {
  if (image.shape.size() != 3 || image.shape[0] != 1) {
    throw NnError(NnError::Kind::ShapeError, "pretext input must be a [1, H, W] tensor");
  }
  Cache<T> cache;
  forward<T>(p, image.data, image.shape[1], image.shape[2], Outputs{true, true}, cache);
  PretextOutput out;
  out.heatmaps = Tensor<double>({p.dense_channels, image.shape[1], image.shape[2]},
                                std::vector<double>(cache.dense.begin(), cache.dense.end()));
  out.location = static_cast<double>(cache.scalar);
  return out;
}

#define VIEWSSL_INSTANTIATE(T)                                                                                     \
  template struct ModelParams<T>;                                                                                  \
  template ModelParams<T> init_params<T>(std::uint64_t, int);                                                      \
  template ModelParams<T> zero_params<T>(int);                                                                     \
  template void reset_dense_head<T>(ModelParams<T>&, int, std::uint64_t);                                          \
  template void reset_scalar_head<T>(ModelParams<T>&, std::uint64_t);                                              \
  template void forward<T>(const ModelParams<T>&, std::span<const T>, int, int, Outputs, Cache<T>&);               \
  template void backward<T>(const ModelParams<T>&, const Cache<T>&, std::span<const T>, T, ModelParams<T>&);       \
  template PretextOutput forward_pretext<T>(const ModelParams<T>&, const Tensor<T>&);

VIEWSSL_INSTANTIATE(float)
VIEWSSL_INSTANTIATE(double)

#undef VIEWSSL_INSTANTIATE

}  // namespace viewssl::nn
