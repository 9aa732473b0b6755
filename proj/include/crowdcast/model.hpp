#pragma once

// Patch-based density forecasting network (PDFN) and its whole-map ablation
// (DFN). Encoder: three stride-2 convolutions and a linear bottleneck.
// Forecaster: temporal conv/deconv stack applied at each latent cell.
// Decoder: three stride-2 transposed convolutions ending in a sigmoid.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crowdcast/checkpoint.hpp"
#include "crowdcast/density.hpp"
#include "crowdcast/nn/layers.hpp"

namespace crowdcast::model {

using nn::Var;
using Tape = nn::Tape<float>;

inline constexpr std::size_t kMapSize = 80;
inline constexpr std::size_t kInputFrames = 8;
inline constexpr std::size_t kOutputFrames = 12;
inline constexpr std::size_t kWindowFrames = kInputFrames + kOutputFrames;
inline constexpr std::size_t kPatchGrid = 10;
inline constexpr std::size_t kTopChannels = 64;

enum class Architecture { kPdfn, kDfn };

/// What the decoder is trained to reproduce: sqrt(c) (densities recovered
/// by squaring) or c itself.
enum class OutputTransform { kSqrt, kIdentity };

struct ModelConfig {
  Architecture arch = Architecture::kPdfn;
  std::size_t latent_dim = 16;

  static ModelConfig pdfn(std::size_t k = 16) { return {Architecture::kPdfn, k}; }
  static ModelConfig dfn(std::size_t k = 128) { return {Architecture::kDfn, k}; }

  /// Side of the latent grid: 10 for PDFN, 1 for DFN.
  std::size_t grid() const { return arch == Architecture::kPdfn ? kPatchGrid : 1; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedParameter {
  std::string name;
  Tensor<float>* value;
};

/// Registers every tensor as a tape leaf, in order.
inline std::vector<Var> bind(Tape& tape, const std::vector<NamedParameter>& params,
                             bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(*p.value, requires_grad));
  return vars;
}

/// [B*T, K, g, g] (frame-major per sample) -> [B, K, T, g, g].
inline Tensor<float> frames_to_sequence(const Tensor<float>& frames, std::size_t batch,
                                        std::size_t steps) {
  expect_rank("frames_to_sequence", frames.shape(), 4);
  expect_extent("frames_to_sequence", "frames", batch * steps, frames.dim(0));
  const std::size_t k = frames.dim(1), cells = frames.dim(2) * frames.dim(3);
  Tensor<float> out({batch, k, steps, frames.dim(2), frames.dim(3)});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t c = 0; c < k; ++c) {
        const float* src = frames.data() + ((b * steps + t) * k + c) * cells;
        std::copy(src, src + cells, out.data() + ((b * k + c) * steps + t) * cells);
      }
  return out;
}

/// [B, K, T, g, g] -> [B*T, K, g, g].
inline Tensor<float> sequence_to_frames(const Tensor<float>& seq) {
  expect_rank("sequence_to_frames", seq.shape(), 5);
  const std::size_t batch = seq.dim(0), k = seq.dim(1), steps = seq.dim(2);
  const std::size_t cells = seq.dim(3) * seq.dim(4);
  Tensor<float> out({batch * steps, k, seq.dim(3), seq.dim(4)});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t c = 0; c < k; ++c) {
        const float* src = seq.data() + ((b * k + c) * steps + t) * cells;
        std::copy(src, src + cells, out.data() + ((b * steps + t) * k + c) * cells);
      }
  return out;
}

class ForecastModel {
 public:
  /// Fresh parameters: uniform(-a, a) with a = sqrt(1/fan_in), zero biases.
  static ForecastModel create(const ModelConfig& config, std::uint64_t seed) {
    ForecastModel m;
    m.config_ = config;
    Rng rng(derive_seed(seed, 0xC0DE));
    const std::size_t k = config.latent_dim;
    const nn::Window2d down{4, 4, 2, 2, 1, 1};
    m.enc_conv_[0] = nn::Conv2dLayer<float>::create(1, 32, down, rng);
    m.enc_conv_[1] = nn::Conv2dLayer<float>::create(32, 64, down, rng);
    m.enc_conv_[2] = nn::Conv2dLayer<float>::create(64, kTopChannels, down, rng);
    const std::size_t flat = kTopChannels * kPatchGrid * kPatchGrid;
    m.enc_fc_ = nn::LinearLayer<float>::create(
        config.arch == Architecture::kPdfn ? kTopChannels : flat, k, rng);

    m.fc_conv_[0] = nn::TemporalConvLayer<float>::create(k, 64, {4, 2, 1}, rng);
    m.fc_conv_[1] = nn::TemporalConvLayer<float>::create(64, 128, {4, 2, 1}, rng);
    m.fc_conv_[2] = nn::TemporalConvLayer<float>::create(128, 256, {2, 1, 0}, rng);
    m.fc_deconv_[0] = nn::TemporalDeconvLayer<float>::create(256, 128, {3, 1, 0}, rng);
    m.fc_deconv_[1] = nn::TemporalDeconvLayer<float>::create(128, 64, {4, 2, 1}, rng);
    m.fc_deconv_[2] = nn::TemporalDeconvLayer<float>::create(64, k, {4, 2, 1}, rng);

    std::size_t first_in = k;
    if (config.arch == Architecture::kDfn) {
      m.dec_fc_ = nn::LinearLayer<float>::create(k, flat, rng);
      first_in = kTopChannels;
    }
    m.dec_deconv_[0] = nn::Deconv2dLayer<float>::create(first_in, 32, down, rng);
    m.dec_deconv_[1] = nn::Deconv2dLayer<float>::create(32, 32, down, rng);
    m.dec_deconv_[2] = nn::Deconv2dLayer<float>::create(32, 1, down, rng);
    return m;
  }

  const ModelConfig& config() const noexcept { return config_; }
  OutputTransform output_transform() const noexcept { return output_transform_; }
  void set_output_transform(OutputTransform t) noexcept { output_transform_ = t; }

  std::vector<NamedParameter> encoder_parameters() {
    std::vector<NamedParameter> p;
    for (std::size_t i = 0; i < 3; ++i) push(p, "encoder." + std::to_string(i), enc_conv_[i]);
    push(p, "encoder.3", enc_fc_);
    return p;
  }

  std::vector<NamedParameter> forecaster_parameters() {
    std::vector<NamedParameter> p;
    for (std::size_t i = 0; i < 3; ++i) push(p, "forecaster." + std::to_string(i), fc_conv_[i]);
    for (std::size_t i = 0; i < 3; ++i)
      push(p, "forecaster." + std::to_string(i + 3), fc_deconv_[i]);
    return p;
  }

  std::vector<NamedParameter> decoder_parameters() {
    std::vector<NamedParameter> p;
    std::size_t idx = 0;
    if (config_.arch == Architecture::kDfn) push(p, "decoder." + std::to_string(idx++), dec_fc_);
    for (std::size_t i = 0; i < 3; ++i)
      push(p, "decoder." + std::to_string(idx++), dec_deconv_[i]);
    return p;
  }

  std::vector<NamedParameter> autoencoder_parameters() {
    auto p = encoder_parameters();
    for (auto& d : decoder_parameters()) p.push_back(d);
    return p;
  }

  std::vector<NamedParameter> parameters() {
    auto p = encoder_parameters();
    for (auto& f : forecaster_parameters()) p.push_back(f);
    for (auto& d : decoder_parameters()) p.push_back(d);
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : const_cast<ForecastModel*>(this)->parameters()) n += p.value->size();
    return n;
  }

  // ---- differentiable passes; `p` holds vars bound in *_parameters() order

  /// x[N,1,80,80] -> z[N,K,g,g].
  Var encode(Tape& tape, Var x, std::span<const Var> p) const {
    check_frames("encode", tape.value(x).shape());
    Var h = x;
    for (std::size_t i = 0; i < 3; ++i)
      h = nn::relu(tape, nn::conv2d(tape, h, p[2 * i], p[2 * i + 1], enc_conv_[i].window));
    if (config_.arch == Architecture::kDfn) {
      const std::size_t n = tape.value(h).dim(0);
      h = nn::reshape(tape, h, {n, tape.value(h).size() / n, 1, 1});
    }
    return nn::per_location_linear(tape, h, p[6], p[7]);
  }

  /// z[N,K,g,g] -> c'[N,1,80,80], values in (0,1).
  Var decode(Tape& tape, Var z, std::span<const Var> p) const {
    check_latent("decode", tape.value(z).shape());
    Var h = z;
    std::size_t o = 0;
    if (config_.arch == Architecture::kDfn) {
      h = nn::relu(tape, nn::per_location_linear(tape, h, p[0], p[1]));
      h = nn::reshape(tape, h, {tape.value(h).dim(0), kTopChannels, kPatchGrid, kPatchGrid});
      o = 2;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      h = nn::deconv2d(tape, h, p[o + 2 * i], p[o + 2 * i + 1], dec_deconv_[i].window);
      h = i < 2 ? nn::relu(tape, h) : nn::sigmoid(tape, h);
    }
    return h;
  }

  /// Z_in[N,K,8,g,g] -> Z_out'[N,K,12,g,g]. Every layer, including the
  /// last, is followed by a ReLU.
  Var forecast_latent(Tape& tape, Var z, std::span<const Var> p) const {
    check_sequence("forecast_latent", tape.value(z).shape(), kInputFrames);
    Var h = z;
    for (std::size_t i = 0; i < 3; ++i)
      h = nn::relu(tape, nn::temporal_conv(tape, h, p[2 * i], p[2 * i + 1], fc_conv_[i].window));
    for (std::size_t i = 0; i < 3; ++i)
      h = nn::relu(tape, nn::temporal_deconv(tape, h, p[6 + 2 * i], p[7 + 2 * i],
                                             fc_deconv_[i].window));
    return h;
  }

  // ---- inference

  Tensor<float> encode(const Tensor<float>& frames) const {
    Tape tape;
    auto p = model::bind(tape, self().encoder_parameters(), false);
    return tape.value(encode(tape, tape.constant(frames), p));
  }

  Tensor<float> decode(const Tensor<float>& latent) const {
    Tape tape;
    auto p = model::bind(tape, self().decoder_parameters(), false);
    return tape.value(decode(tape, tape.constant(latent), p));
  }

  Tensor<float> forecast_latent(const Tensor<float>& z_in) const {
    Tape tape;
    auto p = model::bind(tape, self().forecaster_parameters(), false);
    return tape.value(forecast_latent(tape, tape.constant(z_in), p));
  }

  // ---- checkpoints

  /// Encoder and decoder tensors plus a one-element `meta.output_sqrt` flag.
  std::vector<io::NamedTensor> autoencoder_tensors() const {
    std::vector<io::NamedTensor> out;
    for (const auto& p : self().autoencoder_parameters()) out.push_back({p.name, *p.value});
    out.push_back({"meta.output_sqrt",
                   Tensor<float>({1}, output_transform_ == OutputTransform::kSqrt ? 1.0f : 0.0f)});
    return out;
  }

  std::vector<io::NamedTensor> forecaster_tensors() const {
    std::vector<io::NamedTensor> out;
    for (const auto& p : self().forecaster_parameters()) out.push_back({p.name, *p.value});
    return out;
  }

  /// Rebuilds a model from an autoencoder checkpoint. Architecture and K are
  /// read from the bottleneck shape; any missing, extra or mis-shaped tensor
  /// is rejected.
  static ForecastModel from_autoencoder(const std::vector<io::NamedTensor>& tensors) {
    const Tensor<float>* fc = nullptr;
    for (const auto& t : tensors)
      if (t.name == "encoder.3.weight") fc = &t.value;
    if (!fc || fc->rank() != 2) throw FormatError("checkpoint: missing encoder.3.weight");
    ModelConfig cfg;
    if (fc->dim(1) == kTopChannels) {
      cfg = ModelConfig::pdfn(fc->dim(0));
    } else if (fc->dim(1) == kTopChannels * kPatchGrid * kPatchGrid) {
      cfg = ModelConfig::dfn(fc->dim(0));
    } else {
      throw FormatError("checkpoint: encoder.3.weight has unexpected shape " +
                        shape_string(fc->shape()));
    }
    ForecastModel m = create(cfg, 0);
    auto params = m.autoencoder_parameters();
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t.value;
    auto flag = by_name.find("meta.output_sqrt");
    if (flag == by_name.end() || flag->second->size() != 1)
      throw FormatError("checkpoint: missing meta.output_sqrt");
    m.output_transform_ =
        (*flag->second)[0] != 0.0f ? OutputTransform::kSqrt : OutputTransform::kIdentity;
    by_name.erase(flag);
    assign(params, by_name, "autoencoder");
    return m;
  }

  void load_forecaster(const std::vector<io::NamedTensor>& tensors) {
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t.value;
    assign(forecaster_parameters(), by_name, "forecaster");
  }

 private:
  ForecastModel& self() const { return const_cast<ForecastModel&>(*this); }

  template <typename Layer>
  static void push(std::vector<NamedParameter>& out, const std::string& prefix, Layer& l) {
    out.push_back({prefix + ".weight", &l.weight});
    out.push_back({prefix + ".bias", &l.bias});
  }

  static void assign(const std::vector<NamedParameter>& params,
                     const std::map<std::string, const Tensor<float>*>& by_name,
                     const std::string& what) {
    if (by_name.size() != params.size())
      throw FormatError(what + " checkpoint: expected " + std::to_string(params.size()) +
                        " tensors, found " + std::to_string(by_name.size()));
    for (const auto& p : params) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw FormatError(what + " checkpoint: missing " + p.name);
      if (it->second->shape() != p.value->shape())
        throw FormatError(what + " checkpoint: " + p.name + " has shape " +
                          shape_string(it->second->shape()) + ", expected " +
                          shape_string(p.value->shape()));
      *p.value = *it->second;
    }
  }

  void check_frames(const char* op, const Shape& s) const {
    expect_rank(op, s, 4);
    expect_extent(op, "channels", 1, s[1]);
    expect_extent(op, "height", kMapSize, s[2]);
    expect_extent(op, "width", kMapSize, s[3]);
  }

  void check_latent(const char* op, const Shape& s) const {
    expect_rank(op, s, 4);
    expect_extent(op, "channels", config_.latent_dim, s[1]);
    expect_extent(op, "height", config_.grid(), s[2]);
    expect_extent(op, "width", config_.grid(), s[3]);
  }

  void check_sequence(const char* op, const Shape& s, std::size_t steps) const {
    expect_rank(op, s, 5);
    expect_extent(op, "channels", config_.latent_dim, s[1]);
    expect_extent(op, "time", steps, s[2]);
    expect_extent(op, "height", config_.grid(), s[3]);
    expect_extent(op, "width", config_.grid(), s[4]);
  }

  ModelConfig config_;
  OutputTransform output_transform_ = OutputTransform::kSqrt;
  nn::Conv2dLayer<float> enc_conv_[3];
  nn::LinearLayer<float> enc_fc_;
  nn::TemporalConvLayer<float> fc_conv_[3];
  nn::TemporalDeconvLayer<float> fc_deconv_[3];
  nn::LinearLayer<float> dec_fc_;
  nn::Deconv2dLayer<float> dec_deconv_[3];
};

/// Stacks frames into an [N,1,H,W] tensor, applying sqrt when requested.
inline Tensor<float> frames_tensor(const DensitySequence& seq, bool take_sqrt) {
  const std::size_t h = seq.height(), w = seq.width();
  Tensor<float> t({seq.length(), 1, h, w});
  for (std::size_t f = 0; f < seq.length(); ++f)
    for (std::size_t i = 0; i < h * w; ++i) {
      const float v = seq.frames[f].values[i];
      t[f * h * w + i] = take_sqrt ? std::sqrt(std::max(v, 0.0f)) : v;
    }
  return t;
}

/// Inverse of frames_tensor for decoder output, squaring when requested.
inline DensitySequence frames_sequence(const Tensor<float>& t, bool square, double frame_rate) {
  expect_rank("frames_sequence", t.shape(), 4);
  const std::size_t h = t.dim(2), w = t.dim(3);
  DensitySequence seq;
  seq.frame_rate = frame_rate;
  for (std::size_t f = 0; f < t.dim(0); ++f) {
    DensityMap m(w, h);
    for (std::size_t i = 0; i < h * w; ++i) {
      const float v = t[f * h * w + i];
      m.values[i] = square ? v * v : v;
    }
    seq.frames.push_back(std::move(m));
  }
  return seq;
}

/// Encodes a density sequence frame by frame (input is sqrt-transformed).
inline Tensor<float> encode_sequence(const ForecastModel& model, const DensitySequence& seq,
                                     std::size_t chunk = 32) {
  const std::size_t k = model.config().latent_dim, g = model.config().grid();
  Tensor<float> out({seq.length(), k, g, g});
  const std::size_t per = k * g * g;
  for (std::size_t start = 0; start < seq.length(); start += chunk) {
    const std::size_t n = std::min(chunk, seq.length() - start);
    const Tensor<float> z = model.encode(frames_tensor(seq.slice(start, n), true));
    std::copy(z.data(), z.data() + n * per, out.data() + start * per);
  }
  return out;
}

/// Decodes frames and maps them back to density space.
inline DensitySequence reconstruct(const ForecastModel& model, const DensitySequence& seq) {
  validate(seq);
  const Tensor<float> z = encode_sequence(model, seq);
  return frames_sequence(model.decode(z), model.output_transform() == OutputTransform::kSqrt,
                         seq.frame_rate);
}

/// Full pipeline: sqrt -> encode -> forecast in latent space -> decode ->
/// square. Takes 8 frames of 80x80 and returns 12.
inline DensitySequence forecast(const DensitySequence& c_in, const ForecastModel& model) {
  validate(c_in);
  expect_extent("forecast", "time", kInputFrames, c_in.length());
  expect_extent("forecast", "height", kMapSize, c_in.height());
  expect_extent("forecast", "width", kMapSize, c_in.width());
  const Tensor<float> z_in = frames_to_sequence(encode_sequence(model, c_in), 1, kInputFrames);
  const Tensor<float> z_out = model.forecast_latent(z_in);
  const Tensor<float> frames = model.decode(sequence_to_frames(z_out));
  return frames_sequence(frames, model.output_transform() == OutputTransform::kSqrt,
                         c_in.frame_rate);
}

}  // namespace crowdcast::model
