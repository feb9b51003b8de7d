#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "jersey/nn/tensor.hpp"

// Layer kernels as free functions: each forward returns whatever the matching
// backward needs. All convolutions are 3x3, stride 1, zero padding 1.

namespace jersey::nn::layers {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// ---------------------------------------------------------------------------
// conv3x3

namespace detail {

template <typename T>
void im2col3x3(const T* image, std::size_t channels, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = image + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + ((c * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long iy = static_cast<long>(y) + ky - 1;
          T* out = row + y * w;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill(out, out + w, T(0));
            continue;
          }
          const T* in = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long ix = static_cast<long>(x) + kx - 1;
            out[x] = (ix < 0 || ix >= static_cast<long>(w)) ? T(0) : in[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* cols, std::size_t channels, std::size_t h, std::size_t w, T* image) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = image + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + ((c * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long iy = static_cast<long>(y) + ky - 1;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          T* out = plane + static_cast<std::size_t>(iy) * w;
          const T* in = row + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long ix = static_cast<long>(x) + kx - 1;
            if (ix >= 0 && ix < static_cast<long>(w)) out[ix] += in[x];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
struct ConvCache {
  Shape input_shape;
  std::vector<T> cols;  // [N][C*9][H*W]
};

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                          ConvCache<T>* cache) {
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = weight.dim(0);
  require_shape(weight, {o, c, 3, 3}, "conv weight");
  require_shape(bias, {o}, "conv bias");
  const std::size_t k = c * 9, hw = h * w;

  Tensor<T> out({n, o, h, w});
  std::vector<T> local;
  std::vector<T>& cols = cache ? cache->cols : local;
  cols.resize(cache ? n * k * hw : k * hw);
  ConstMatMap<T> wmat(weight.data(), static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < n; ++s) {
    T* col = cols.data() + (cache ? s * k * hw : 0);
    detail::im2col3x3(input.data() + s * c * hw, c, h, w, col);
    ConstMatMap<T> cmat(col, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
    MatMap<T> omat(out.data() + s * o * hw, static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(hw));
    omat.noalias() = wmat * cmat;
    for (std::size_t ch = 0; ch < o; ++ch) omat.row(static_cast<Eigen::Index>(ch)).array() += bias[ch];
  }
  if (cache) cache->input_shape = input.shape();
  return out;
}

/// Accumulates into `dweight` / `dbias`; returns d(input) when requested.
template <typename T>
Tensor<T> conv3x3_backward(const Tensor<T>& dout, const Tensor<T>& weight, const ConvCache<T>& cache,
                           Tensor<T>& dweight, Tensor<T>& dbias, bool need_input_grad) {
  const std::size_t n = cache.input_shape[0], c = cache.input_shape[1], h = cache.input_shape[2],
                    w = cache.input_shape[3];
  const std::size_t o = weight.dim(0), k = c * 9, hw = h * w;
  ConstMatMap<T> wmat(weight.data(), static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(k));
  MatMap<T> dwmat(dweight.data(), static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(k));
  Tensor<T> dinput;
  std::vector<T> dcols;
  if (need_input_grad) {
    dinput = Tensor<T>(cache.input_shape);
    dcols.resize(k * hw);
  }
  for (std::size_t s = 0; s < n; ++s) {
    ConstMatMap<T> dmat(dout.data() + s * o * hw, static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(hw));
    ConstMatMap<T> cmat(cache.cols.data() + s * k * hw, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
    dwmat.noalias() += dmat * cmat.transpose();
    for (std::size_t ch = 0; ch < o; ++ch) {
      // Plain loop: Eigen's vectorized reductions peel by pointer alignment,
      // which makes the summation order vary between runs.
      const T* row = dout.data() + (s * o + ch) * hw;
      T sum = 0;
      for (std::size_t i = 0; i < hw; ++i) sum += row[i];
      dbias[ch] += sum;
    }
    if (need_input_grad) {
      MatMap<T> dcmat(dcols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
      dcmat.noalias() = wmat.transpose() * dmat;
      detail::col2im3x3(dcols.data(), c, h, w, dinput.data() + s * c * hw);
    }
  }
  return dinput;
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
Tensor<T> relu_forward(Tensor<T> x) {
  for (auto& v : x.values()) v = v > T(0) ? v : T(0);
  return x;
}

/// Uses the forward output: gradient passes where output > 0.
template <typename T>
Tensor<T> relu_backward(Tensor<T> dout, const Tensor<T>& output) {
  for (std::size_t i = 0; i < dout.size(); ++i) {
    if (!(output[i] > T(0))) dout[i] = T(0);
  }
  return dout;
}

// ---------------------------------------------------------------------------
// 2x2 max pool, stride 2 (odd trailing row/column dropped)

struct PoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, PoolCache* cache) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw Error(Errc::ShapeMismatch, "max pool input smaller than 2x2");
  Tensor<T> out({n, c, oh, ow});
  if (cache) {
    cache->input_shape = x.shape();
    cache->argmax.resize(out.size());
  }
  std::size_t o = 0;
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        std::size_t best = base + (2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * y + dy) * w + 2 * xx + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        if (cache) cache->argmax[o] = best;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dout, const PoolCache& cache) {
  Tensor<T> dx(cache.input_shape);
  for (std::size_t o = 0; o < dout.size(); ++o) dx[cache.argmax[o]] += dout[o];
  return dx;
}

// ---------------------------------------------------------------------------
// Adaptive average pool to a g x g grid. Bin i covers
// [floor(i*H/g), ceil((i+1)*H/g)). g = 1 is global average pooling.

inline std::pair<std::size_t, std::size_t> adaptive_bin(std::size_t i, std::size_t extent, std::size_t grid) {
  return {(i * extent) / grid, ((i + 1) * extent + grid - 1) / grid};
}

template <typename T>
Tensor<T> adaptive_avgpool_forward(const Tensor<T>& x, std::size_t grid) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (grid < 1 || grid > h || grid > w) throw Error(Errc::ShapeMismatch, "pool grid larger than feature map");
  Tensor<T> out({n, c, grid, grid});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t gy = 0; gy < grid; ++gy) {
        const auto [y0, y1] = adaptive_bin(gy, h, grid);
        for (std::size_t gx = 0; gx < grid; ++gx) {
          const auto [x0, x1] = adaptive_bin(gx, w, grid);
          T sum = 0;
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t xx = x0; xx < x1; ++xx) sum += x.at(s, ch, y, xx);
          }
          out.at(s, ch, gy, gx) = sum / static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> adaptive_avgpool_backward(const Tensor<T>& dout, const Shape& input_shape) {
  const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t grid = dout.dim(2);
  Tensor<T> dx(input_shape);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t gy = 0; gy < grid; ++gy) {
        const auto [y0, y1] = adaptive_bin(gy, h, grid);
        for (std::size_t gx = 0; gx < grid; ++gx) {
          const auto [x0, x1] = adaptive_bin(gx, w, grid);
          const T g = dout.at(s, ch, gy, gx) / static_cast<T>((y1 - y0) * (x1 - x0));
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t xx = x0; xx < x1; ++xx) dx.at(s, ch, y, xx) += g;
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear: y = x W^T + b, W is [out, in].

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const std::size_t n = x.dim(0), in = x.size() / n, out_dim = weight.dim(0);
  require_shape(weight, {out_dim, in}, "linear weight");
  require_shape(bias, {out_dim}, "linear bias");
  Tensor<T> y({n, out_dim});
  // Fixed-order dot products per sample so a row's logits do not depend on
  // the batch it came in (GEMM blocking and GEMV paths change with n).
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = x.data() + s * in;
    for (std::size_t k = 0; k < out_dim; ++k) {
      const T* wk = weight.data() + k * in;
      T acc = 0;
      for (std::size_t i = 0; i < in; ++i) acc += xs[i] * wk[i];
      y.at(s, k) = acc + bias[k];
    }
  }
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& dout, const Tensor<T>& x, const Tensor<T>& weight, Tensor<T>& dweight,
                          Tensor<T>& dbias) {
  const std::size_t n = x.dim(0), in = x.size() / n, out_dim = weight.dim(0);
  ConstMatMap<T> dm(dout.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_dim));
  ConstMatMap<T> xm(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  ConstMatMap<T> wm(weight.data(), static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in));
  MatMap<T> dwm(dweight.data(), static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in));
  dwm.noalias() += dm.transpose() * xm;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < out_dim; ++k) dbias[k] += dout.at(s, k);
  }
  Tensor<T> dx(x.shape());
  MatMap<T> dxm(dx.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  dxm.noalias() = dm * wm;
  return dx;
}

}  // namespace jersey::nn::layers
