#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "viewssl/nn/tensor.hpp"

/// Small U-Net-style network for pretext and fine-tuning tasks.
///
///   enc1  3x3 conv 1->8,   ReLU   (H)      -> maxpool -> H/2
///   enc2  3x3 conv 8->16,  ReLU   (H/2)    -> maxpool -> H/4
///   enc3  3x3 conv 16->32, ReLU   (H/4)    -> maxpool -> H/8 (ceil)
///   dec1  up x2(enc3) ++ enc2 -> 3x3 conv 48->16, ReLU  (H/2)
///   dec2  up x2(dec1) ++ enc1 -> 3x3 conv 24->8,  ReLU  (H)
///   head  1x1 conv 8->K, linear                         (dense output)
///   fc    global average pool(pooled enc3) -> 32->1      (scalar output)
///
/// The dense head regresses heatmaps (pretext) or class logits (segmentation);
/// the scalar head regresses the relative location (pretext) or a
/// classification logit.
namespace viewssl::nn {

inline constexpr int kEnc1 = 8;
inline constexpr int kEnc2 = 16;
inline constexpr int kEnc3 = 32;
inline constexpr int kDec1 = 16;
inline constexpr int kDec2 = 8;

enum ParamId : int {
  Enc1W, Enc1B, Enc2W, Enc2B, Enc3W, Enc3B,
  Dec1W, Dec1B, Dec2W, Dec2B,
  HeadW, HeadB, FcW, FcB,
  kNumParams
};

const char* param_name(int id);
bool is_bias(int id);

template <class T>
struct ModelParams {
  int dense_channels = 2;
  std::array<Tensor<T>, kNumParams> tensors;

  Tensor<T>& operator[](int id) { return tensors[static_cast<std::size_t>(id)]; }
  const Tensor<T>& operator[](int id) const { return tensors[static_cast<std::size_t>(id)]; }

  std::size_t parameter_count() const;
  /// Same architecture, every value zero (gradient accumulator).
  ModelParams zeros_like() const;
  void set_zero();

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.dense_channels = dense_channels;
    for (int i = 0; i < kNumParams; ++i) {
      out[i].shape = (*this)[i].shape;
      out[i].data.assign((*this)[i].data.begin(), (*this)[i].data.end());
    }
    return out;
  }
};

/// Glorot-uniform weights, s = sqrt(6 / (fan_in + fan_out)); zero biases.
template <class T>
ModelParams<T> init_params(std::uint64_t seed, int dense_channels);

/// All-zero parameters with the architecture's shapes.
template <class T>
ModelParams<T> zero_params(int dense_channels);

/// Replaces the dense head with a freshly initialised `channels`-way 1x1 conv.
template <class T>
void reset_dense_head(ModelParams<T>& p, int channels, std::uint64_t seed);

/// Reinitialises the fully connected scalar head.
template <class T>
void reset_scalar_head(ModelParams<T>& p, std::uint64_t seed);

/// Which outputs a forward pass must produce.
struct Outputs {
  bool dense = true;
  bool scalar = true;
};

/// Activations kept for the backward pass of a single sample.
template <class T>
struct Cache {
  int height = 0, width = 0;
  std::vector<T> pad_x, e1, pad_p1, e2, pad_p2, e3, p3, gap;
  std::vector<int> arg1, arg2, arg3;
  std::vector<T> pad_c1, d1, pad_c2, d2;
  std::vector<T> dense;  ///< K x H x W
  T scalar{};
  Outputs outputs;
};

/// Forward pass of one image (H x W, single channel). H and W must be
/// divisible by 4.
template <class T>
void forward(const ModelParams<T>& p, std::span<const T> image, int height, int width, Outputs outputs, Cache<T>& cache);

/// Accumulates parameter gradients into `grads` given dL/d(dense) and
/// dL/d(scalar) for the sample held in `cache`.
template <class T>
void backward(const ModelParams<T>& p, const Cache<T>& cache, std::span<const T> d_dense, T d_scalar,
              ModelParams<T>& grads);

struct PretextOutput {
  Tensor<double> heatmaps;  ///< [K, H, W]
  double location = 0.0;
};

/// Convenience wrapper: image is a [1, H, W] tensor.
template <class T>
PretextOutput forward_pretext(const ModelParams<T>& p, const Tensor<T>& image);

}  // namespace viewssl::nn
