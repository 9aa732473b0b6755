#pragma once

#include <cmath>
#include <cstddef>

#include "crowdcast/nn/ops.hpp"
#include "crowdcast/rng.hpp"

namespace crowdcast::nn {

/// Fills `t` with uniform(-a, a), a = sqrt(1 / fan_in).
template <typename T>
void init_uniform_fan_in(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-a, a));
}

/// weight[out, in, kh, kw], bias[out].
template <typename T>
struct Conv2dLayer {
  std::size_t in_channels = 0, out_channels = 0;
  Window2d window;
  Tensor<T> weight, bias;

  static Conv2dLayer create(std::size_t in, std::size_t out, Window2d win, Rng& rng) {
    Conv2dLayer l{in, out, win, Tensor<T>({out, in, win.kernel_h, win.kernel_w}),
                  Tensor<T>({out})};
    init_uniform_fan_in(l.weight, in * win.taps(), rng);
    return l;
  }
};

/// weight[in, out, kh, kw], bias[out].
template <typename T>
struct Deconv2dLayer {
  std::size_t in_channels = 0, out_channels = 0;
  Window2d window;
  Tensor<T> weight, bias;

  static Deconv2dLayer create(std::size_t in, std::size_t out, Window2d win, Rng& rng) {
    Deconv2dLayer l{in, out, win, Tensor<T>({in, out, win.kernel_h, win.kernel_w}),
                    Tensor<T>({out})};
    init_uniform_fan_in(l.weight, in * win.taps(), rng);
    return l;
  }
};

/// weight[out, in, kt], bias[out].
template <typename T>
struct TemporalConvLayer {
  std::size_t in_channels = 0, out_channels = 0;
  TemporalWindow window;
  Tensor<T> weight, bias;

  static TemporalConvLayer create(std::size_t in, std::size_t out, TemporalWindow win,
                                  Rng& rng) {
    TemporalConvLayer l{in, out, win, Tensor<T>({out, in, win.kernel}), Tensor<T>({out})};
    init_uniform_fan_in(l.weight, in * win.kernel, rng);
    return l;
  }
};

/// weight[in, out, kt], bias[out].
template <typename T>
struct TemporalDeconvLayer {
  std::size_t in_channels = 0, out_channels = 0;
  TemporalWindow window;
  Tensor<T> weight, bias;

  static TemporalDeconvLayer create(std::size_t in, std::size_t out, TemporalWindow win,
                                    Rng& rng) {
    TemporalDeconvLayer l{in, out, win, Tensor<T>({in, out, win.kernel}), Tensor<T>({out})};
    init_uniform_fan_in(l.weight, in * win.kernel, rng);
    return l;
  }
};

/// Per-location affine map: weight[out, in], bias[out].
template <typename T>
struct LinearLayer {
  std::size_t in_channels = 0, out_channels = 0;
  Tensor<T> weight, bias;

  static LinearLayer create(std::size_t in, std::size_t out, Rng& rng) {
    LinearLayer l{in, out, Tensor<T>({out, in}), Tensor<T>({out})};
    init_uniform_fan_in(l.weight, in, rng);
    return l;
  }
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dLayer<T>& l) {
  return conv2d_forward(x, l.weight, l.bias, l.window);
}

template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const Deconv2dLayer<T>& l) {
  return deconv2d_forward(x, l.weight, l.bias, l.window);
}

template <typename T>
Tensor<T> temporal_conv(const Tensor<T>& x, const TemporalConvLayer<T>& l) {
  return temporal_conv_forward(x, l.weight, l.bias, l.window);
}

template <typename T>
Tensor<T> temporal_deconv(const Tensor<T>& x, const TemporalDeconvLayer<T>& l) {
  return temporal_deconv_forward(x, l.weight, l.bias, l.window);
}

template <typename T>
Tensor<T> per_location_linear(const Tensor<T>& x, const LinearLayer<T>& l) {
  return per_location_linear_forward(x, l.weight, l.bias);
}

}  // namespace crowdcast::nn
