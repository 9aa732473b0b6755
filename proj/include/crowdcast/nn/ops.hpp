#pragma once

// Differentiable primitives recorded on a Tape. Each op validates shapes,
// computes its forward value with the tape-free kernels and registers a
// closure that accumulates input gradients.

#include <algorithm>
#include <cmath>
#include <limits>

#include "crowdcast/nn/kernels.hpp"
#include "crowdcast/nn/tape.hpp"

namespace crowdcast::nn {

/// Geometry of a convolution along the temporal axis only (1x1 spatially).
struct TemporalWindow {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  Window2d as_2d() const noexcept { return {kernel, 1, stride, 1, pad, 0}; }
  friend bool operator==(const TemporalWindow&, const TemporalWindow&) = default;
};

namespace detail {

// [N,C,T,H,W] -> [N,C,T,H*W]: every spatial cell becomes an independent column.
inline Shape temporal_view(const char* op, const Shape& s) {
  expect_rank(op, s, 5);
  return {s[0], s[1], s[2], s[3] * s[4]};
}

inline Shape temporal_weight_view(const char* op, const Shape& s) {
  expect_rank(op, s, 3);
  return {s[0], s[1], s[2], 1};
}

template <typename T>
T clamp_probability(T y) {
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
  return std::clamp(y, lo, hi);
}

}  // namespace detail

/// Logistic function clamped so results stay strictly inside (0, 1) even
/// where the exact value rounds to 0 or 1.
template <typename T>
T sigmoid_scalar(T x) {
  const T y = x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
  return detail::clamp_probability(y);
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, const Window2d& win) {
  Tensor<T> y = conv2d_forward(tape.value(x), tape.value(w), tape.value(b), win);
  return tape.record(std::move(y), {x, w, b}, [x, w, b, win](Tape<T>& t, const Tensor<T>& dy) {
    conv2d_backward(t.value(x), t.value(w), dy, win, t.grad_buffer(x), t.grad_buffer(w),
                    t.grad_buffer(b));
  });
}

template <typename T>
Var deconv2d(Tape<T>& tape, Var x, Var w, Var b, const Window2d& win) {
  Tensor<T> y = deconv2d_forward(tape.value(x), tape.value(w), tape.value(b), win);
  return tape.record(std::move(y), {x, w, b}, [x, w, b, win](Tape<T>& t, const Tensor<T>& dy) {
    deconv2d_backward(t.value(x), t.value(w), dy, win, t.grad_buffer(x), t.grad_buffer(w),
                      t.grad_buffer(b));
  });
}

/// Temporal convolution of x[N,C,T,H,W] with weight[O,C,kt]. Every spatial
/// cell is convolved independently with shared weights.
template <typename T>
Tensor<T> temporal_conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                                const TemporalWindow& win) {
  const Shape xs = detail::temporal_view("temporal_conv", x.shape());
  const Shape ws = detail::temporal_weight_view("temporal_conv", w.shape());
  Tensor<T> y = conv2d_forward(x.reshaped(xs), w.reshaped(ws), b, win.as_2d());
  y.reshape({y.dim(0), y.dim(1), y.dim(2), x.dim(3), x.dim(4)});
  return y;
}

/// Transposed temporal convolution of x[N,C,T,H,W] with weight[C,O,kt].
template <typename T>
Tensor<T> temporal_deconv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                                  const TemporalWindow& win) {
  const Shape xs = detail::temporal_view("temporal_deconv", x.shape());
  const Shape ws = detail::temporal_weight_view("temporal_deconv", w.shape());
  Tensor<T> y = deconv2d_forward(x.reshaped(xs), w.reshaped(ws), b, win.as_2d());
  y.reshape({y.dim(0), y.dim(1), y.dim(2), x.dim(3), x.dim(4)});
  return y;
}

template <typename T>
Var temporal_conv(Tape<T>& tape, Var x, Var w, Var b, const TemporalWindow& win) {
  Tensor<T> y = temporal_conv_forward(tape.value(x), tape.value(w), tape.value(b), win);
  return tape.record(std::move(y), {x, w, b}, [x, w, b, win](Tape<T>& t, const Tensor<T>& dy) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    conv2d_backward(xv.reshaped(detail::temporal_view("temporal_conv", xv.shape())),
                    wv.reshaped(detail::temporal_weight_view("temporal_conv", wv.shape())), dy,
                    win.as_2d(), t.grad_buffer(x), t.grad_buffer(w), t.grad_buffer(b));
  });
}

template <typename T>
Var temporal_deconv(Tape<T>& tape, Var x, Var w, Var b, const TemporalWindow& win) {
  Tensor<T> y = temporal_deconv_forward(tape.value(x), tape.value(w), tape.value(b), win);
  return tape.record(std::move(y), {x, w, b}, [x, w, b, win](Tape<T>& t, const Tensor<T>& dy) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    deconv2d_backward(xv.reshaped(detail::temporal_view("temporal_deconv", xv.shape())),
                      wv.reshaped(detail::temporal_weight_view("temporal_deconv", wv.shape())),
                      dy, win.as_2d(), t.grad_buffer(x), t.grad_buffer(w), t.grad_buffer(b));
  });
}

/// The same affine map weight[O,C] * v + bias applied at every cell of x[N,C,H,W].
template <typename T>
Tensor<T> per_location_linear_forward(const Tensor<T>& x, const Tensor<T>& w,
                                      const Tensor<T>& b) {
  expect_rank("per_location_linear", w.shape(), 2);
  return conv2d_forward(x, w.reshaped({w.dim(0), w.dim(1), 1, 1}), b, Window2d{});
}

template <typename T>
Var per_location_linear(Tape<T>& tape, Var x, Var w, Var b) {
  Tensor<T> y = per_location_linear_forward(tape.value(x), tape.value(w), tape.value(b));
  return tape.record(std::move(y), {x, w, b}, [x, w, b](Tape<T>& t, const Tensor<T>& dy) {
    const Tensor<T>& wv = t.value(w);
    conv2d_backward(t.value(x), wv.reshaped({wv.dim(0), wv.dim(1), 1, 1}), dy, Window2d{},
                    t.grad_buffer(x), t.grad_buffer(w), t.grad_buffer(b));
  });
}

template <typename T>
Tensor<T> relu_forward(Tensor<T> x) {
  for (T& v : x.values()) v = v > T{0} ? v : T{0};
  return x;
}

template <typename T>
Tensor<T> sigmoid_forward(Tensor<T> x) {
  for (T& v : x.values()) v = sigmoid_scalar(v);
  return x;
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  return tape.record(relu_forward(tape.value(x)), {x}, [x](Tape<T>& t, const Tensor<T>& dy) {
    Tensor<T>* dx = t.grad_buffer(x);
    const Tensor<T>& xv = t.value(x);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xv[i] > T{0}) (*dx)[i] += dy[i];
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  // The closure reads the recorded output, whose id is the next slot.
  const Var out{tape.size()};
  return tape.record(sigmoid_forward(tape.value(x)), {x}, [x, out](Tape<T>& t,
                                                                   const Tensor<T>& dy) {
    Tensor<T>* dx = t.grad_buffer(x);
    const Tensor<T>& yv = t.value(out);
    for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i] * yv[i] * (T{1} - yv[i]);
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  return tape.record(tape.value(x).reshaped(std::move(shape)), {x},
                     [x](Tape<T>& t, const Tensor<T>& dy) {
                       Tensor<T>* dx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
                     });
}

namespace detail {

inline void expect_same_shape(const char* op, const Shape& a, const Shape& b) {
  expect_rank(op, b, a.size());
  static const char* axis_names[] = {"axis0", "axis1", "axis2", "axis3", "axis4", "axis5"};
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) throw ShapeError(op, i < 6 ? axis_names[i] : "axis", a[i], b[i]);
}

}  // namespace detail

/// Mean binary cross-entropy of predictions in (0,1) against targets in
/// [0,1], accumulated in double.
template <typename T>
double bce_mean(const Tensor<T>& p, const Tensor<T>& t) {
  detail::expect_same_shape("bce_loss", p.shape(), t.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i], ti = t[i];
    acc -= ti * std::log(pi) + (1.0 - ti) * std::log1p(-pi);
  }
  return acc / static_cast<double>(p.size());
}

template <typename T>
T bce_value(const Tensor<T>& p, const Tensor<T>& t) {
  return static_cast<T>(bce_mean(p, t));
}

template <typename T>
Var bce_loss(Tape<T>& tape, Var prediction, Var target) {
  const T loss = bce_value(tape.value(prediction), tape.value(target));
  return tape.record(
      Tensor<T>({1}, loss), {prediction, target},
      [prediction, target](Tape<T>& t, const Tensor<T>& dy) {
        const Tensor<T>& p = t.value(prediction);
        const Tensor<T>& q = t.value(target);
        const T scale = dy[0] / static_cast<T>(p.size());
        if (Tensor<T>* dp = t.grad_buffer(prediction))
          for (std::size_t i = 0; i < p.size(); ++i)
            (*dp)[i] += scale * ((T{1} - q[i]) / (T{1} - p[i]) - q[i] / p[i]);
        if (Tensor<T>* dq = t.grad_buffer(target))
          for (std::size_t i = 0; i < p.size(); ++i)
            (*dq)[i] += scale * (std::log1p(-p[i]) - std::log(p[i]));
      });
}

template <typename T>
double mse_mean(const Tensor<T>& p, const Tensor<T>& t) {
  detail::expect_same_shape("mse_loss", p.shape(), t.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(p.size());
}

template <typename T>
T mse_value(const Tensor<T>& p, const Tensor<T>& t) {
  return static_cast<T>(mse_mean(p, t));
}

template <typename T>
Var mse_loss(Tape<T>& tape, Var prediction, Var target) {
  const T loss = mse_value(tape.value(prediction), tape.value(target));
  return tape.record(Tensor<T>({1}, loss), {prediction, target},
                     [prediction, target](Tape<T>& t, const Tensor<T>& dy) {
                       const Tensor<T>& p = t.value(prediction);
                       const Tensor<T>& q = t.value(target);
                       const T scale = T{2} * dy[0] / static_cast<T>(p.size());
                       Tensor<T>* dp = t.grad_buffer(prediction);
                       Tensor<T>* dq = t.grad_buffer(target);
                       for (std::size_t i = 0; i < p.size(); ++i) {
                         const T d = scale * (p[i] - q[i]);
                         if (dp) (*dp)[i] += d;
                         if (dq) (*dq)[i] -= d;
                       }
                     });
}

/// sum_i weights[i] * x[i]; reduces any tensor to a scalar for gradient checks.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, Tensor<T> weights) {
  const Tensor<T>& xv = tape.value(x);
  detail::expect_same_shape("weighted_sum", xv.shape(), weights.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i)
    acc += static_cast<double>(xv[i]) * static_cast<double>(weights[i]);
  return tape.record(Tensor<T>({1}, static_cast<T>(acc)), {x},
                     [x, weights = std::move(weights)](Tape<T>& t, const Tensor<T>& dy) {
                       Tensor<T>* dx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < weights.size(); ++i)
                         (*dx)[i] += dy[0] * weights[i];
                     });
}

}  // namespace crowdcast::nn
