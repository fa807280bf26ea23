#pragma once

// Single-sample CHW layer kernels shared by the model's forward and
// backward passes. Convolutions take zero-padded inputs of shape
// C x (H + 2) x (W + 2).

#include <algorithm>
#include <cstddef>
#include <vector>

namespace viewssl::nn::layers {

inline std::size_t padded_plane(int h, int w) { return static_cast<std::size_t>(h + 2) * (w + 2); }

/// Copies C x H x W into the interior of a zero-padded buffer.
template <class T>
void write_padded(const T* src, int c, int h, int w, T* dst) {
  const int pw = w + 2;
  for (int ch = 0; ch < c; ++ch) {
    const T* s = src + static_cast<std::size_t>(ch) * h * w;
    T* d = dst + ch * padded_plane(h, w);
    for (int y = 0; y < h; ++y) std::copy(s + y * w, s + (y + 1) * w, d + (y + 1) * pw + 1);
  }
}

/// Nearest-neighbour x2 upsample of C x H x W into a padded C x (2H+2) x (2W+2) buffer.
template <class T>
void write_upsampled_padded(const T* src, int c, int h, int w, T* dst) {
  const int oh = 2 * h, ow = 2 * w, pw = ow + 2;
  for (int ch = 0; ch < c; ++ch) {
    const T* s = src + static_cast<std::size_t>(ch) * h * w;
    T* d = dst + ch * padded_plane(oh, ow);
    for (int y = 0; y < oh; ++y) {
      T* row = d + (y + 1) * pw + 1;
      const T* srow = s + (y / 2) * w;
      for (int x = 0; x < ow; ++x) row[x] = srow[x / 2];
    }
  }
}

/// out[co] = bias[co] + sum_ci W[co, ci] (*) pad[ci]   (3x3, stride 1).
/// `bias` may be null.
template <class T>
void conv3x3(const T* pad, int cin, int h, int w, const T* weights, const T* bias, int cout, T* out) {
  const int pw = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < cout; ++co) {
    T* o = out + co * plane;
    std::fill(o, o + plane, bias ? bias[co] : T{});
    for (int ci = 0; ci < cin; ++ci) {
      const T* ip = pad + ci * padded_plane(h, w);
      const T* k = weights + (static_cast<std::size_t>(co) * cin + ci) * 9;
      const T k0 = k[0], k1 = k[1], k2 = k[2], k3 = k[3], k4 = k[4], k5 = k[5], k6 = k[6], k7 = k[7], k8 = k[8];
      for (int y = 0; y < h; ++y) {
        const T* r0 = ip + y * pw;
        const T* r1 = r0 + pw;
        const T* r2 = r1 + pw;
        T* d = o + y * w;
        for (int x = 0; x < w; ++x) {
          d[x] += k0 * r0[x] + k1 * r0[x + 1] + k2 * r0[x + 2] + k3 * r1[x] + k4 * r1[x + 1] + k5 * r1[x + 2] +
                  k6 * r2[x] + k7 * r2[x + 1] + k8 * r2[x + 2];
        }
      }
    }
  }
}

/// Weights for the input-gradient pass: Wt[ci][co][a][b] = W[co][ci][2-a][2-b].
template <class T>
void flip_transpose(const T* weights, int cout, int cin, std::vector<T>& out) {
  out.resize(static_cast<std::size_t>(cout) * cin * 9);
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      const T* k = weights + (static_cast<std::size_t>(co) * cin + ci) * 9;
      T* t = out.data() + (static_cast<std::size_t>(ci) * cout + co) * 9;
      for (int i = 0; i < 9; ++i) t[i] = k[8 - i];
    }
  }
}

/// dW[co][ci][tap] += sum_{y,x} dout[co][y][x] * pad[ci][y+ky][x+kx]; db[co] += sum dout[co].
template <class T>
void conv3x3_weight_grad(const T* pad, int cin, int h, int w, const T* dout, int cout, T* dweights, T* dbias) {
  constexpr int L = 8;
  const int pw = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int wv = w - w % L;
  for (int co = 0; co < cout; ++co) {
    const T* g = dout + co * plane;
    if (dbias) {
      T acc[L] = {};
      std::size_t i = 0;
      for (; i + L <= plane; i += L) {
        for (int j = 0; j < L; ++j) acc[j] += g[i + j];
      }
      T s{};
      for (; i < plane; ++i) s += g[i];
      for (int j = 0; j < L; ++j) s += acc[j];
      dbias[co] += s;
    }
    for (int ci = 0; ci < cin; ++ci) {
      const T* ip = pad + ci * padded_plane(h, w);
      T acc[9][L] = {};
      T tail[9] = {};
      for (int y = 0; y < h; ++y) {
        const T* gr = g + y * w;
        const T* rows[3] = {ip + y * pw, ip + (y + 1) * pw, ip + (y + 2) * pw};
        for (int x = 0; x < wv; x += L) {
          for (int t = 0; t < 9; ++t) {
            const T* r = rows[t / 3] + t % 3 + x;
            for (int j = 0; j < L; ++j) acc[t][j] += gr[x + j] * r[j];
          }
        }
        for (int x = wv; x < w; ++x) {
          for (int t = 0; t < 9; ++t) tail[t] += gr[x] * rows[t / 3][t % 3 + x];
        }
      }
      T* dw = dweights + (static_cast<std::size_t>(co) * cin + ci) * 9;
      for (int t = 0; t < 9; ++t) {
        T s = tail[t];
        for (int j = 0; j < L; ++j) s += acc[t][j];
        dw[t] += s;
      }
    }
  }
}

template <class T>
void relu_inplace(T* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = v[i] > T{} ? v[i] : T{};
}

/// grad *= (activation > 0)
template <class T>
void relu_backward(const T* activation, T* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) grad[i] = activation[i] > T{} ? grad[i] : T{};
}

inline int pooled(int n) { return (n + 1) / 2; }

/// 2x2 max-pool with ceil mode (edge windows clipped). `arg` records the
/// flat source index of each maximum.
template <class T>
void maxpool2(const T* in, int c, int h, int w, T* out, int* arg) {
  const int oh = pooled(h), ow = pooled(w);
  for (int ch = 0; ch < c; ++ch) {
    const T* s = in + static_cast<std::size_t>(ch) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int best = (2 * oy) * w + 2 * ox;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int y = 2 * oy + dy, x = 2 * ox + dx;
            if (y < h && x < w && s[y * w + x] > s[best]) best = y * w + x;
          }
        }
        const std::size_t o = static_cast<std::size_t>(ch) * oh * ow + oy * ow + ox;
        out[o] = s[best];
        arg[o] = best;
      }
    }
  }
}

template <class T>
void maxpool2_backward(const T* dout, const int* arg, int c, int h, int w, T* din) {
  const int oh = pooled(h), ow = pooled(w);
  for (int ch = 0; ch < c; ++ch) {
    T* d = din + static_cast<std::size_t>(ch) * h * w;
    for (int i = 0; i < oh * ow; ++i) {
      const std::size_t o = static_cast<std::size_t>(ch) * oh * ow + i;
      d[arg[o]] += dout[o];
    }
  }
}

}  // namespace viewssl::nn::layers
