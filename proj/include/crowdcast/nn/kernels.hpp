#pragma once

// Tape-free forward and backward kernels for the convolution family. All
// convolutions are cross-correlations lowered to GEMM through im2col.

#include <Eigen/Core>

#include <cstddef>
#include <vector>

#include "crowdcast/tensor.hpp"

namespace crowdcast::nn {

/// Kernel/stride/padding geometry of a 2-D sliding window.
struct Window2d {
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;

  std::size_t taps() const noexcept { return kernel_h * kernel_w; }
  bool is_pointwise() const noexcept {
    return kernel_h == 1 && kernel_w == 1 && stride_h == 1 && stride_w == 1 && pad_h == 0 &&
           pad_w == 0;
  }
  friend bool operator==(const Window2d&, const Window2d&) = default;
};

/// floor((in + 2p - k) / s) + 1, or 0 when the window does not fit.
inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  if (in + 2 * p < k || s == 0) return 0;
  return (in + 2 * p - k) / s + 1;
}

/// (in - 1) * s + k - 2p, or 0 when non-positive.
inline std::size_t deconv_out_extent(std::size_t in, std::size_t k, std::size_t s,
                                     std::size_t p) {
  const std::size_t full = (in - 1) * s + k;
  return full > 2 * p ? full - 2 * p : 0;
}

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = img[c][oy*sh - ph + i][ox*sw - pw + j]
template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t height, std::size_t width,
            const Window2d& win, std::size_t out_h, std::size_t out_w, T* cols) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = img + c * height * width;
    for (std::size_t i = 0; i < win.kernel_h; ++i) {
      for (std::size_t j = 0; j < win.kernel_w; ++j) {
        T* dst = cols + ((c * win.kernel_h + i) * win.kernel_w + j) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * win.stride_h + i) -
                         static_cast<std::ptrdiff_t>(win.pad_h);
          T* row = dst + oy * out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(row, row + out_w, T{0});
            continue;
          }
          const T* src_row = src + static_cast<std::size_t>(y) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * win.stride_w + j) -
                           static_cast<std::ptrdiff_t>(win.pad_w);
            row[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(width))
                          ? T{0}
                          : src_row[static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the (zeroed or partial) image.
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height, std::size_t width,
            const Window2d& win, std::size_t out_h, std::size_t out_w, T* img) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = img + c * height * width;
    for (std::size_t i = 0; i < win.kernel_h; ++i) {
      for (std::size_t j = 0; j < win.kernel_w; ++j) {
        const T* src = cols + ((c * win.kernel_h + i) * win.kernel_w + j) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * win.stride_h + i) -
                         static_cast<std::ptrdiff_t>(win.pad_h);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) continue;
          T* dst_row = dst + static_cast<std::size_t>(y) * width;
          const T* row = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * win.stride_w + j) -
                           static_cast<std::ptrdiff_t>(win.pad_w);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(width)) continue;
            dst_row[static_cast<std::size_t>(x)] += row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void add_channel_bias(T* out, const T* bias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T b = bias[c];
    T* p = out + c * plane;
    for (std::size_t k = 0; k < plane; ++k) p[k] += b;
  }
}

template <typename T>
void accumulate_channel_sums(const T* grad, T* bias_grad, std::size_t channels,
                             std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* p = grad + c * plane;
    T acc{0};
    for (std::size_t k = 0; k < plane; ++k) acc += p[k];
    bias_grad[c] += acc;
  }
}

}  // namespace detail

/// Validated extents of one conv/deconv call on an NCHW input.
struct ConvGeometry {
  std::size_t batch, in_channels, out_channels;
  std::size_t in_h, in_w, out_h, out_w;
};

/// Checks x[N,C,H,W] against weight[O,C,kh,kw] for a forward convolution.
inline ConvGeometry conv2d_geometry(const char* op, const Shape& x, const Shape& w,
                                    const Shape& b, const Window2d& win) {
  expect_rank(op, x, 4);
  expect_rank(op, w, 4);
  expect_rank(op, b, 1);
  expect_extent(op, "channels", w[1], x[1]);
  expect_extent(op, "kernel_h", win.kernel_h, w[2]);
  expect_extent(op, "kernel_w", win.kernel_w, w[3]);
  expect_extent(op, "bias", w[0], b[0]);
  const std::size_t oh = conv_out_extent(x[2], win.kernel_h, win.stride_h, win.pad_h);
  const std::size_t ow = conv_out_extent(x[3], win.kernel_w, win.stride_w, win.pad_w);
  if (oh == 0) throw ShapeError(op, "height", win.kernel_h, x[2] + 2 * win.pad_h);
  if (ow == 0) throw ShapeError(op, "width", win.kernel_w, x[3] + 2 * win.pad_w);
  return {x[0], x[1], w[0], x[2], x[3], oh, ow};
}

/// Checks x[N,C,H,W] against weight[C,O,kh,kw] for a transposed convolution.
inline ConvGeometry deconv2d_geometry(const char* op, const Shape& x, const Shape& w,
                                      const Shape& b, const Window2d& win) {
  expect_rank(op, x, 4);
  expect_rank(op, w, 4);
  expect_rank(op, b, 1);
  expect_extent(op, "channels", w[0], x[1]);
  expect_extent(op, "kernel_h", win.kernel_h, w[2]);
  expect_extent(op, "kernel_w", win.kernel_w, w[3]);
  expect_extent(op, "bias", w[1], b[0]);
  const std::size_t oh = deconv_out_extent(x[2], win.kernel_h, win.stride_h, win.pad_h);
  const std::size_t ow = deconv_out_extent(x[3], win.kernel_w, win.stride_w, win.pad_w);
  if (oh == 0) throw ShapeError(op, "height", 1, 0);
  if (ow == 0) throw ShapeError(op, "width", 1, 0);
  return {x[0], x[1], w[1], x[2], x[3], oh, ow};
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         const Window2d& win) {
  const auto g = conv2d_geometry("conv2d", x.shape(), w.shape(), b.shape(), win);
  Tensor<T> y({g.batch, g.out_channels, g.out_h, g.out_w});
  const std::size_t rows = g.in_channels * win.taps();
  const std::size_t plane = g.out_h * g.out_w;
  detail::ConstMatMap<T> wm(w.data(), g.out_channels, rows);
  std::vector<T> cols(win.is_pointwise() ? 0 : rows * plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x.data() + n * g.in_channels * g.in_h * g.in_w;
    const T* colp = xn;
    if (!win.is_pointwise()) {
      detail::im2col(xn, g.in_channels, g.in_h, g.in_w, win, g.out_h, g.out_w, cols.data());
      colp = cols.data();
    }
    detail::MatMap<T> yn(y.data() + n * g.out_channels * plane, g.out_channels, plane);
    yn.noalias() = wm * detail::ConstMatMap<T>(colp, rows, plane);
    detail::add_channel_bias(yn.data(), b.data(), g.out_channels, plane);
  }
  return y;
}

/// Accumulates gradients of a conv2d into the non-null buffers.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                     const Window2d& win, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const auto g = conv2d_geometry("conv2d", x.shape(), w.shape(), Shape{w.dim(0)}, win);
  const std::size_t rows = g.in_channels * win.taps();
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t in_plane = g.in_channels * g.in_h * g.in_w;
  detail::ConstMatMap<T> wm(w.data(), g.out_channels, rows);
  std::vector<T> cols(win.is_pointwise() ? 0 : rows * plane);
  std::vector<T> dcols(dx && !win.is_pointwise() ? rows * plane : 0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    detail::ConstMatMap<T> dyn(dy.data() + n * g.out_channels * plane, g.out_channels, plane);
    const T* xn = x.data() + n * in_plane;
    if (dw) {
      const T* colp = xn;
      if (!win.is_pointwise()) {
        detail::im2col(xn, g.in_channels, g.in_h, g.in_w, win, g.out_h, g.out_w, cols.data());
        colp = cols.data();
      }
      detail::MatMap<T> dwm(dw->data(), g.out_channels, rows);
      dwm.noalias() += dyn * detail::ConstMatMap<T>(colp, rows, plane).transpose();
    }
    if (db) detail::accumulate_channel_sums(dyn.data(), db->data(), g.out_channels, plane);
    if (dx) {
      if (win.is_pointwise()) {
        detail::MatMap<T> dxn(dx->data() + n * in_plane, rows, plane);
        dxn.noalias() += wm.transpose() * dyn;
      } else {
        detail::MatMap<T> dc(dcols.data(), rows, plane);
        dc.noalias() = wm.transpose() * dyn;
        detail::col2im(dcols.data(), g.in_channels, g.in_h, g.in_w, win, g.out_h, g.out_w,
                       dx->data() + n * in_plane);
      }
    }
  }
}

template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           const Window2d& win) {
  const auto g = deconv2d_geometry("deconv2d", x.shape(), w.shape(), b.shape(), win);
  Tensor<T> y({g.batch, g.out_channels, g.out_h, g.out_w});
  const std::size_t rows = g.out_channels * win.taps();
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  detail::ConstMatMap<T> wm(w.data(), g.in_channels, rows);
  std::vector<T> cols(rows * in_plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    detail::ConstMatMap<T> xn(x.data() + n * g.in_channels * in_plane, g.in_channels, in_plane);
    detail::MatMap<T> cm(cols.data(), rows, in_plane);
    cm.noalias() = wm.transpose() * xn;
    T* yn = y.data() + n * g.out_channels * out_plane;
    detail::col2im(cols.data(), g.out_channels, g.out_h, g.out_w, win, g.in_h, g.in_w, yn);
    detail::add_channel_bias(yn, b.data(), g.out_channels, out_plane);
  }
  return y;
}

template <typename T>
void deconv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                       const Window2d& win, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const auto g = deconv2d_geometry("deconv2d", x.shape(), w.shape(), Shape{w.dim(1)}, win);
  const std::size_t rows = g.out_channels * win.taps();
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  detail::ConstMatMap<T> wm(w.data(), g.in_channels, rows);
  std::vector<T> cols(rows * in_plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* dyn = dy.data() + n * g.out_channels * out_plane;
    if (db) detail::accumulate_channel_sums(dyn, db->data(), g.out_channels, out_plane);
    if (!dx && !dw) continue;
    detail::im2col(dyn, g.out_channels, g.out_h, g.out_w, win, g.in_h, g.in_w, cols.data());
    detail::ConstMatMap<T> cm(cols.data(), rows, in_plane);
    if (dx) {
      detail::MatMap<T> dxn(dx->data() + n * g.in_channels * in_plane, g.in_channels, in_plane);
      dxn.noalias() += wm * cm;
    }
    if (dw) {
      detail::ConstMatMap<T> xn(x.data() + n * g.in_channels * in_plane, g.in_channels,
                                in_plane);
      detail::MatMap<T> dwm(dw->data(), g.in_channels, rows);
      dwm.noalias() += xn * cm.transpose();
    }
  }
}

}  // namespace crowdcast::nn
