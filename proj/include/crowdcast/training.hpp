#pragma once

// Two-stage training: the autoencoder on BCE reconstruction of input frames,
// then the latent forecaster on MSE with the encoder frozen.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "crowdcast/model.hpp"
#include "crowdcast/nn/adam.hpp"

namespace crowdcast::train {

using model::ForecastModel;
using model::kInputFrames;
using model::kOutputFrames;
using model::kWindowFrames;

/// Sliding windows of 20 frames (8 input, 12 output) over one sequence.
struct WindowDataset {
  DensitySequence source;
  std::size_t stride = 1;
  std::vector<std::size_t> offsets;

  std::size_t size() const noexcept { return offsets.size(); }
  DensitySequence input(std::size_t i) const { return source.slice(offsets.at(i), kInputFrames); }
  DensitySequence output(std::size_t i) const {
    return source.slice(offsets.at(i) + kInputFrames, kOutputFrames);
  }
};

/// Windows at offsets 0, stride, 2*stride, ...; floor((len - 20)/stride) + 1 of them.
inline WindowDataset make_windows(DensitySequence seq, std::size_t stride = 1) {
  if (stride == 0) throw InputError("make_windows: stride must be positive");
  if (seq.length() < kWindowFrames)
    throw InputError("make_windows: sequence has " + std::to_string(seq.length()) +
                     " frames, need at least " + std::to_string(kWindowFrames));
  WindowDataset ds;
  for (std::size_t o = 0; o + kWindowFrames <= seq.length(); o += stride) ds.offsets.push_back(o);
  ds.source = std::move(seq);
  ds.stride = stride;
  return ds;
}

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t iterations = 1000;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
  model::OutputTransform target = model::OutputTransform::kSqrt;
};

inline void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw InputError("train: batch size must be at least 1");
  if (c.iterations == 0) throw InputError("train: iterations must be at least 1");
  if (!(c.learning_rate >= 0.0)) throw InputError("train: learning rate must be non-negative");
}

/// Window indices for one mini-batch: uniform with replacement, a pure
/// function of (seed, iteration).
inline std::vector<std::size_t> sample_batch(std::uint64_t seed, std::size_t iteration,
                                             std::size_t n_windows, std::size_t batch_size) {
  Rng rng(derive_seed(seed, 0xBA7C0000ULL + iteration));
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n_windows));
  return idx;
}

struct TrainResult {
  std::vector<double> losses;
  /// Parameters that received a gradient buffer at any iteration.
  std::vector<std::string> updated_parameters;
};

using ProgressFn = std::function<void(std::size_t iteration, double loss)>;

namespace detail {

inline void check_finite(double loss, std::size_t iteration, const std::vector<std::size_t>& batch,
                         const char* stage) {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << stage << ": non-finite loss at iteration " << iteration << ", batch windows [";
  for (std::size_t i = 0; i < batch.size(); ++i) msg << (i ? "," : "") << batch[i];
  msg << "]";
  throw TrainingError(msg.str());
}

inline void apply_adam(std::vector<model::NamedParameter>& params, model::Tape& tape,
                       const std::vector<model::Var>& vars, nn::AdamState<float>& adam,
                       std::vector<std::string>& updated) {
  std::vector<Tensor<float>*> ptrs;
  std::vector<Tensor<float>> grads;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ptrs.push_back(params[i].value);
    if (tape.has_grad_buffer(vars[i]) &&
        std::find(updated.begin(), updated.end(), params[i].name) == updated.end())
      updated.push_back(params[i].name);
    grads.push_back(tape.grad(vars[i]));
  }
  nn::adam_step<float>(ptrs, grads, adam);
}

}  // namespace detail

/// Minimizes mean BCE between D(E(sqrt c)) and the target transform of c
/// over the input frames of B sampled windows per iteration.
inline TrainResult train_autoencoder(ForecastModel& model, const WindowDataset& data,
                                     const TrainConfig& config, const ProgressFn& progress = {}) {
  validate(config);
  if (data.size() == 0) throw InputError("train_autoencoder: empty dataset");
  model.set_output_transform(config.target);
  const std::size_t cells = model::kMapSize * model::kMapSize;
  const Tensor<float> inputs = model::frames_tensor(data.source, true);
  const Tensor<float> targets = model::frames_tensor(
      data.source, config.target == model::OutputTransform::kSqrt);

  auto params = model.autoencoder_parameters();
  nn::AdamState<float> adam(config.learning_rate);
  TrainResult result;
  const std::size_t n = config.batch_size * kInputFrames;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto batch = sample_batch(config.seed, it, data.size(), config.batch_size);
    Tensor<float> x({n, 1, model::kMapSize, model::kMapSize});
    Tensor<float> y({n, 1, model::kMapSize, model::kMapSize});
    for (std::size_t b = 0; b < batch.size(); ++b)
      for (std::size_t t = 0; t < kInputFrames; ++t) {
        const std::size_t src = (data.offsets[batch[b]] + t) * cells;
        const std::size_t dst = (b * kInputFrames + t) * cells;
        std::copy(inputs.data() + src, inputs.data() + src + cells, x.data() + dst);
        std::copy(targets.data() + src, targets.data() + src + cells, y.data() + dst);
      }

    model::Tape tape;
    const auto vars = model::bind(tape, params, true);
    const std::span<const model::Var> all(vars);
    const auto enc = all.first(model.encoder_parameters().size());
    const auto dec = all.subspan(enc.size());
    const model::Var recon = model.decode(tape, model.encode(tape, tape.constant(std::move(x)), enc), dec);
    const model::Var loss = nn::bce_loss(tape, recon, tape.constant(std::move(y)));
    const double value = tape.value(loss)[0];
    detail::check_finite(value, it, batch, "train_autoencoder");
    tape.backward(loss);
    detail::apply_adam(params, tape, vars, adam, result.updated_parameters);
    result.losses.push_back(value);
    if (progress) progress(it, value);
  }
  return result;
}

/// Latent windows of a dataset under a frozen encoder: [B,K,T,g,g] pairs.
class LatentWindows {
 public:
  LatentWindows(const ForecastModel& model, const WindowDataset& data)
      : data_(&data), latents_(model::encode_sequence(model, data.source)) {}

  /// Stacks input (first 8) or output (last 12) latent frames of the given windows.
  Tensor<float> gather(const std::vector<std::size_t>& windows, bool output) const {
    const std::size_t steps = output ? kOutputFrames : kInputFrames;
    const std::size_t per = latents_.size() / latents_.dim(0);
    Tensor<float> frames({windows.size() * steps, latents_.dim(1), latents_.dim(2),
                          latents_.dim(3)});
    for (std::size_t b = 0; b < windows.size(); ++b)
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t f = data_->offsets.at(windows[b]) + (output ? kInputFrames : 0) + t;
        std::copy(latents_.data() + f * per, latents_.data() + (f + 1) * per,
                  frames.data() + (b * steps + t) * per);
      }
    return model::frames_to_sequence(frames, windows.size(), steps);
  }

 private:
  const WindowDataset* data_;
  Tensor<float> latents_;
};

/// Minimizes MSE between M(Z_in) and Z_out = E(C_out). Only forecaster
/// parameters are placed on the tape, so the encoder and decoder never get
/// gradient buffers and stay bit-identical.
inline TrainResult train_forecaster(ForecastModel& model, const WindowDataset& data,
                                    const TrainConfig& config, const ProgressFn& progress = {}) {
  validate(config);
  if (data.size() == 0) throw InputError("train_forecaster: empty dataset");
  const LatentWindows latents(model, data);
  auto params = model.forecaster_parameters();
  nn::AdamState<float> adam(config.learning_rate);
  TrainResult result;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto batch = sample_batch(config.seed, it, data.size(), config.batch_size);
    model::Tape tape;
    const auto vars = model::bind(tape, params, true);
    const model::Var pred =
        model.forecast_latent(tape, tape.constant(latents.gather(batch, false)), vars);
    const model::Var loss = nn::mse_loss(tape, pred, tape.constant(latents.gather(batch, true)));
    const double value = tape.value(loss)[0];
    detail::check_finite(value, it, batch, "train_forecaster");
    tape.backward(loss);
    detail::apply_adam(params, tape, vars, adam, result.updated_parameters);
    result.losses.push_back(value);
    if (progress) progress(it, value);
  }
  return result;
}

/// Mean latent MSE of the forecaster over every window of `data`.
inline double latent_mse(const ForecastModel& model, const WindowDataset& data) {
  const LatentWindows latents(model, data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<std::size_t> one{i};
    total += nn::mse_mean(model.forecast_latent(latents.gather(one, false)),
                          latents.gather(one, true));
  }
  return total / static_cast<double>(data.size());
}

}  // namespace crowdcast::train
