#pragma once

// Central finite-difference verification of the differentiable primitives.
// The numeric side only calls tape-free forward kernels, so it never shares
// code with the backward closures it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crowdcast/nn/ops.hpp"
#include "crowdcast/rng.hpp"

namespace crowdcast::nn {

enum class PrimitiveOp {
  kConv2d,
  kDeconv2d,
  kTemporalConv,
  kTemporalDeconv,
  kPerLocationLinear,
  kRelu,
  kSigmoid,
  kBce,
  kMse,
};

inline constexpr PrimitiveOp kAllPrimitiveOps[] = {
    PrimitiveOp::kConv2d,       PrimitiveOp::kDeconv2d,          PrimitiveOp::kTemporalConv,
    PrimitiveOp::kTemporalDeconv, PrimitiveOp::kPerLocationLinear, PrimitiveOp::kRelu,
    PrimitiveOp::kSigmoid,      PrimitiveOp::kBce,               PrimitiveOp::kMse,
};

inline const char* primitive_name(PrimitiveOp op) {
  switch (op) {
    case PrimitiveOp::kConv2d: return "conv2d";
    case PrimitiveOp::kDeconv2d: return "deconv2d";
    case PrimitiveOp::kTemporalConv: return "temporal_conv";
    case PrimitiveOp::kTemporalDeconv: return "temporal_deconv";
    case PrimitiveOp::kPerLocationLinear: return "per_location_linear";
    case PrimitiveOp::kRelu: return "relu";
    case PrimitiveOp::kSigmoid: return "sigmoid";
    case PrimitiveOp::kBce: return "bce_loss";
    case PrimitiveOp::kMse: return "mse_loss";
  }
  return "?";
}

/// Default step and tolerance for each precision.
template <typename T>
struct GradCheckDefaults;
template <>
struct GradCheckDefaults<float> {
  static constexpr double step = 1e-4;
  static constexpr double tolerance = 1e-3;
};
template <>
struct GradCheckDefaults<double> {
  static constexpr double step = 1e-6;
  static constexpr double tolerance = 1e-6;
};

struct GradCheckOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  /// Multiplies the analytic gradient before comparison. Anything other than
  /// 1 simulates a broken backward pass.
  double analytic_scale = 1.0;
};

struct GradCheckResult {
  std::string op;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed() const noexcept { return max_relative_error < tolerance; }
};

/// ||a - n|| / max(||a||, ||n||) over the concatenated gradient of all inputs.
inline double relative_error(const std::vector<double>& analytic,
                             const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

namespace detail {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Values bounded away from zero so a step never crosses the ReLU kink.
template <typename T>
Tensor<T> random_nonzero_tensor(Shape shape, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) {
    const double mag = rng.uniform(0.05, 1.0);
    v = static_cast<T>(rng.uniform() < 0.5 ? -mag : mag);
  }
  return t;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

template <typename T>
double weighted_reduce(const Tensor<T>& y, const Tensor<T>& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc += static_cast<double>(y[i]) * static_cast<double>(r[i]);
  return acc;
}

// One randomized instance: inputs, a tape builder producing the scalar loss,
// and an independent evaluation of the same loss. The numeric side always
// runs in double so 32-bit differences are not dominated by rounding.
template <typename T>
struct GradCase {
  std::vector<Tensor<T>> inputs;
  std::function<Var(Tape<T>&, const std::vector<Var>&)> build;
  std::function<double(const std::vector<Tensor<double>>&)> evaluate;
};

template <typename T>
GradCase<T> make_case(PrimitiveOp op, Rng& rng) {
  GradCase<T> c;
  auto with_projection = [&](Shape out_shape, auto forward, auto tape_op) {
    Tensor<T> r = random_tensor<T>(std::move(out_shape), rng, -1.0, 1.0);
    c.build = [r, tape_op](Tape<T>& t, const std::vector<Var>& v) {
      return weighted_sum(t, tape_op(t, v), r);
    };
    c.evaluate = [r = r.template cast<double>(), forward](const std::vector<Tensor<double>>& in) {
      return weighted_reduce(forward(in), r);
    };
  };

  switch (op) {
    case PrimitiveOp::kConv2d:
    case PrimitiveOp::kDeconv2d: {
      const bool transposed = op == PrimitiveOp::kDeconv2d;
      const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
      Window2d win;
      win.kernel_h = pick(rng, 1, 3);
      win.kernel_w = pick(rng, 1, 3);
      win.stride_h = pick(rng, 1, 2);
      win.stride_w = pick(rng, 1, 2);
      win.pad_h = pick(rng, 0, win.kernel_h - 1);
      win.pad_w = pick(rng, 0, win.kernel_w - 1);
      const std::size_t h = pick(rng, std::max<std::size_t>(win.kernel_h, 2), 5);
      const std::size_t w = pick(rng, std::max<std::size_t>(win.kernel_w, 2), 5);
      c.inputs.push_back(random_tensor<T>({n, ci, h, w}, rng, -1.0, 1.0));
      c.inputs.push_back(transposed
                             ? random_tensor<T>({ci, co, win.kernel_h, win.kernel_w}, rng, -1, 1)
                             : random_tensor<T>({co, ci, win.kernel_h, win.kernel_w}, rng, -1, 1));
      c.inputs.push_back(random_tensor<T>({co}, rng, -1.0, 1.0));
      if (transposed) {
        const Shape out = deconv2d_forward(c.inputs[0], c.inputs[1], c.inputs[2], win).shape();
        with_projection(
            out,
            [win](const std::vector<Tensor<double>>& in) {
              return deconv2d_forward(in[0], in[1], in[2], win);
            },
            [win](Tape<T>& t, const std::vector<Var>& v) {
              return deconv2d(t, v[0], v[1], v[2], win);
            });
      } else {
        const Shape out = conv2d_forward(c.inputs[0], c.inputs[1], c.inputs[2], win).shape();
        with_projection(
            out,
            [win](const std::vector<Tensor<double>>& in) {
              return conv2d_forward(in[0], in[1], in[2], win);
            },
            [win](Tape<T>& t, const std::vector<Var>& v) {
              return conv2d(t, v[0], v[1], v[2], win);
            });
      }
      break;
    }
    case PrimitiveOp::kTemporalConv:
    case PrimitiveOp::kTemporalDeconv: {
      const bool transposed = op == PrimitiveOp::kTemporalDeconv;
      const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
      TemporalWindow win{pick(rng, 1, 4), pick(rng, 1, 2), 0};
      win.pad = pick(rng, 0, win.kernel - 1);
      const std::size_t steps = pick(rng, std::max<std::size_t>(win.kernel, 2), 6);
      const std::size_t h = pick(rng, 1, 3), w = pick(rng, 1, 3);
      c.inputs.push_back(random_tensor<T>({n, ci, steps, h, w}, rng, -1.0, 1.0));
      c.inputs.push_back(transposed ? random_tensor<T>({ci, co, win.kernel}, rng, -1, 1)
                                    : random_tensor<T>({co, ci, win.kernel}, rng, -1, 1));
      c.inputs.push_back(random_tensor<T>({co}, rng, -1.0, 1.0));
      if (transposed) {
        const Shape out =
            temporal_deconv_forward(c.inputs[0], c.inputs[1], c.inputs[2], win).shape();
        with_projection(
            out,
            [win](const std::vector<Tensor<double>>& in) {
              return temporal_deconv_forward(in[0], in[1], in[2], win);
            },
            [win](Tape<T>& t, const std::vector<Var>& v) {
              return temporal_deconv(t, v[0], v[1], v[2], win);
            });
      } else {
        const Shape out =
            temporal_conv_forward(c.inputs[0], c.inputs[1], c.inputs[2], win).shape();
        with_projection(
            out,
            [win](const std::vector<Tensor<double>>& in) {
              return temporal_conv_forward(in[0], in[1], in[2], win);
            },
            [win](Tape<T>& t, const std::vector<Var>& v) {
              return temporal_conv(t, v[0], v[1], v[2], win);
            });
      }
      break;
    }
    case PrimitiveOp::kPerLocationLinear: {
      const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 4), co = pick(rng, 1, 4);
      const std::size_t h = pick(rng, 1, 3), w = pick(rng, 1, 3);
      c.inputs.push_back(random_tensor<T>({n, ci, h, w}, rng, -1.0, 1.0));
      c.inputs.push_back(random_tensor<T>({co, ci}, rng, -1.0, 1.0));
      c.inputs.push_back(random_tensor<T>({co}, rng, -1.0, 1.0));
      with_projection(
          Shape{n, co, h, w},
          [](const std::vector<Tensor<double>>& in) {
            return per_location_linear_forward(in[0], in[1], in[2]);
          },
          [](Tape<T>& t, const std::vector<Var>& v) {
            return per_location_linear(t, v[0], v[1], v[2]);
          });
      break;
    }
    case PrimitiveOp::kRelu:
    case PrimitiveOp::kSigmoid: {
      const Shape shape{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
      if (op == PrimitiveOp::kRelu) {
        c.inputs.push_back(random_nonzero_tensor<T>(shape, rng));
        with_projection(
            shape, [](const std::vector<Tensor<double>>& in) { return relu_forward(in[0]); },
            [](Tape<T>& t, const std::vector<Var>& v) { return relu(t, v[0]); });
      } else {
        c.inputs.push_back(random_tensor<T>(shape, rng, -3.0, 3.0));
        with_projection(
            shape, [](const std::vector<Tensor<double>>& in) { return sigmoid_forward(in[0]); },
            [](Tape<T>& t, const std::vector<Var>& v) { return sigmoid(t, v[0]); });
      }
      break;
    }
    case PrimitiveOp::kBce:
    case PrimitiveOp::kMse: {
      const Shape shape{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
      if (op == PrimitiveOp::kBce) {
        c.inputs.push_back(random_tensor<T>(shape, rng, 0.05, 0.95));
        c.inputs.push_back(random_tensor<T>(shape, rng, 0.0, 1.0));
        c.build = [](Tape<T>& t, const std::vector<Var>& v) { return bce_loss(t, v[0], v[1]); };
        c.evaluate = [](const std::vector<Tensor<double>>& in) { return bce_mean(in[0], in[1]); };
      } else {
        c.inputs.push_back(random_tensor<T>(shape, rng, -1.0, 1.0));
        c.inputs.push_back(random_tensor<T>(shape, rng, -1.0, 1.0));
        c.build = [](Tape<T>& t, const std::vector<Var>& v) { return mse_loss(t, v[0], v[1]); };
        c.evaluate = [](const std::vector<Tensor<double>>& in) { return mse_mean(in[0], in[1]); };
      }
      break;
    }
  }
  return c;
}

}  // namespace detail

/// Relative error between tape gradients (in T) and central differences of
/// the same function evaluated in double at the same input point.
template <typename T>
double gradient_error(const detail::GradCase<T>& c, double step, double analytic_scale = 1.0) {
  Tape<T> tape;
  std::vector<Var> vars;
  for (const auto& in : c.inputs) vars.push_back(tape.parameter(in));
  tape.backward(c.build(tape, vars));

  std::vector<double> analytic, numeric;
  std::vector<Tensor<double>> probe;
  for (const auto& in : c.inputs) probe.push_back(in.template cast<double>());
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const Tensor<T> g = tape.grad(vars[k]);
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      analytic.push_back(static_cast<double>(g[i]) * analytic_scale);
      const double x0 = probe[k][i];
      const double up = x0 + step, down = x0 - step;
      probe[k][i] = up;
      const double f_up = c.evaluate(probe);
      probe[k][i] = down;
      const double f_down = c.evaluate(probe);
      probe[k][i] = x0;
      numeric.push_back((f_up - f_down) / (up - down));
    }
  }
  return relative_error(analytic, numeric);
}

template <typename T>
GradCheckResult check_primitive(PrimitiveOp op, const GradCheckOptions& opts = {}) {
  GradCheckResult result{primitive_name(op), opts.instances, 0.0,
                         GradCheckDefaults<T>::tolerance};
  Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(op) + 1));
  for (std::size_t k = 0; k < opts.instances; ++k) {
    const auto c = detail::make_case<T>(op, rng);
    result.max_relative_error =
        std::max(result.max_relative_error,
                 gradient_error(c, GradCheckDefaults<T>::step, opts.analytic_scale));
  }
  return result;
}

}  // namespace crowdcast::nn
