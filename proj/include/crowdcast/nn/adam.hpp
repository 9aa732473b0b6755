#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "crowdcast/tensor.hpp"

namespace crowdcast::nn {

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  explicit AdamState(double lr = 1e-3) : learning_rate(lr) {}
};

/// One bias-corrected Adam update of every parameter in place. Moment
/// buffers are created on the first call and must keep matching shapes.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step", "parameters", params.size(), grads.size());
  if (state.first_moment.empty()) {
    for (const Tensor<T>* p : params) {
      state.first_moment.push_back(Tensor<T>::zeros_like(*p));
      state.second_moment.push_back(Tensor<T>::zeros_like(*p));
    }
  }
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam_step", "moment buffers", state.first_moment.size(), params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k].shape() || params[k]->shape() != state.first_moment[k].shape())
      throw ShapeError("adam_step", "parameter " + std::to_string(k) + " shape " +
                                        shape_string(params[k]->shape()) + " vs gradient " +
                                        shape_string(grads[k].shape()));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(state.learning_rate / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    Tensor<T>& m = state.first_moment[k];
    Tensor<T>& v = state.second_moment[k];
    const Tensor<T>& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

}  // namespace crowdcast::nn
