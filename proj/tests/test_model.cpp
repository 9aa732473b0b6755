#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "crowdcast/checkpoint.hpp"
#include "crowdcast/model.hpp"

using namespace crowdcast;
using namespace crowdcast::model;

namespace {

Tensor<float> random_tensor(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<float> t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

DensitySequence random_frames(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  DensitySequence s;
  s.frames.assign(n, DensityMap(kMapSize, kMapSize));
  for (auto& f : s.frames)
    for (float& v : f.values) v = static_cast<float>(rng.uniform(0.0, 0.3));
  return s;
}

void zero_parameters(ForecastModel& m) {
  for (auto& p : m.parameters()) p.value->fill(0.0f);
}

// Input rows/cols feeding latent cell o: three k=4 s=2 p=1 convolutions.
bool in_receptive_field(std::size_t pixel, std::size_t cell) {
  const long lo = 8 * static_cast<long>(cell) - 7, hi = 8 * static_cast<long>(cell) + 14;
  return static_cast<long>(pixel) >= lo && static_cast<long>(pixel) <= hi;
}

}  // namespace

TEST(Model, ParameterCount) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 0);
  // Encoder 100016 + forecaster 238224 + decoder 25153.
  EXPECT_EQ(m.parameter_count(), 363393u);
  auto mm = m;
  std::size_t enc = 0, fc = 0, dec = 0;
  for (const auto& p : mm.encoder_parameters()) enc += p.value->size();
  for (const auto& p : mm.forecaster_parameters()) fc += p.value->size();
  for (const auto& p : mm.decoder_parameters()) dec += p.value->size();
  EXPECT_EQ(enc, 100016u);
  EXPECT_EQ(fc, 238224u);
  EXPECT_EQ(dec, 25153u);
}

TEST(Model, ParameterNames) {
  auto m = ForecastModel::create(ModelConfig::pdfn(16), 0);
  std::vector<std::string> names;
  for (const auto& p : m.parameters()) names.push_back(p.name);
  EXPECT_EQ(names.front(), "encoder.0.weight");
  EXPECT_NE(std::find(names.begin(), names.end(), "encoder.3.bias"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "forecaster.5.weight"), names.end());
  EXPECT_EQ(names.back(), "decoder.2.bias");
}

class PipelineShapes : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PipelineShapes, MatchArchitectureTable) {
  const std::size_t b = GetParam();
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 1);
  const auto z = m.encode(random_tensor({b * kInputFrames, 1, 80, 80}, 2));
  EXPECT_EQ(z.shape(), (Shape{b * kInputFrames, 16, 10, 10}));
  const auto z_in = frames_to_sequence(z, b, kInputFrames);
  EXPECT_EQ(z_in.shape(), (Shape{b, 16, 8, 10, 10}));
  const auto z_out = m.forecast_latent(z_in);
  EXPECT_EQ(z_out.shape(), (Shape{b, 16, 12, 10, 10}));
  const auto c = m.decode(sequence_to_frames(z_out));
  EXPECT_EQ(c.shape(), (Shape{b * kOutputFrames, 1, 80, 80}));
}

INSTANTIATE_TEST_SUITE_P(Batch, PipelineShapes, ::testing::Values(1u, 16u));

TEST(Model, ForecasterTemporalShapes) {
  // 8 -> 4 -> 2 -> 1 -> 3 -> 6 -> 12 through the six temporal layers.
  EXPECT_EQ(nn::conv_out_extent(8, 4, 2, 1), 4u);
  EXPECT_EQ(nn::conv_out_extent(4, 4, 2, 1), 2u);
  EXPECT_EQ(nn::conv_out_extent(2, 2, 1, 0), 1u);
  EXPECT_EQ(nn::deconv_out_extent(1, 3, 1, 0), 3u);
  EXPECT_EQ(nn::deconv_out_extent(3, 4, 2, 1), 6u);
  EXPECT_EQ(nn::deconv_out_extent(6, 4, 2, 1), 12u);
}

TEST(Model, SequenceLayoutRoundTrip) {
  const auto frames = random_tensor({3 * 8, 4, 2, 2}, 3);
  const auto seq = frames_to_sequence(frames, 3, 8);
  EXPECT_EQ(sequence_to_frames(seq), frames);
  // Frame t of sample b, channel c lands at seq[b][c][t].
  EXPECT_EQ(seq[((1 * 4 + 2) * 8 + 5) * 4 + 3], frames[((1 * 8 + 5) * 4 + 2) * 4 + 3]);
}

TEST(Model, DfnShapes) {
  const auto m = ForecastModel::create(ModelConfig::dfn(128), 4);
  const auto z = m.encode(random_tensor({8, 1, 80, 80}, 5));
  EXPECT_EQ(z.shape(), (Shape{8, 128, 1, 1}));
  const auto z_out = m.forecast_latent(frames_to_sequence(z, 1, 8));
  EXPECT_EQ(z_out.shape(), (Shape{1, 128, 12, 1, 1}));
  EXPECT_EQ(m.decode(sequence_to_frames(z_out)).shape(), (Shape{12, 1, 80, 80}));
  EXPECT_EQ(forecast(random_frames(8, 6), m).length(), 12u);
}

TEST(Model, ZeroInputZeroBiasGivesZeroLatent) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 7);
  const auto z = m.encode(Tensor<float>({2, 1, 80, 80}));
  for (float v : z.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Model, ZeroParametersClosedForms) {
  auto m = ForecastModel::create(ModelConfig::pdfn(16), 8);
  zero_parameters(m);
  const auto decoded = m.decode(Tensor<float>({1, 16, 10, 10}));
  for (float v : decoded.values()) EXPECT_EQ(v, 0.5f);
  const auto latent = m.forecast_latent(random_tensor({1, 16, 8, 10, 10}, 9));
  for (float v : latent.values()) EXPECT_EQ(v, 0.0f);
  const auto out = forecast(random_frames(8, 10), m);
  ASSERT_EQ(out.length(), 12u);
  for (const auto& f : out.frames)
    for (float v : f.values) EXPECT_EQ(v, 0.25f);
}

TEST(Model, DecoderOutputInOpenUnitInterval) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 11);
  const auto out = m.decode(random_tensor({2, 16, 10, 10}, 12, -3.0, 3.0));
  for (float v : out.values()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Model, ForecastOutputsNonNegative) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 13);
  const auto out = m.forecast_latent(random_tensor({2, 16, 8, 10, 10}, 14, -1.0, 1.0));
  for (float v : out.values()) EXPECT_GE(v, 0.0f);
}

TEST(Model, EncoderReceptiveFieldLocality) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 15);
  const auto base = random_tensor({1, 1, 80, 80}, 16);
  const auto z0 = m.encode(base);
  const std::size_t pixels[][2] = {{0, 0}, {7, 7}, {8, 8}, {14, 22}, {15, 16},
                                   {40, 41}, {63, 1}, {79, 79}, {72, 33}};
  Tensor<float> batch({std::size(pixels), 1, 80, 80});
  for (std::size_t k = 0; k < std::size(pixels); ++k) {
    std::copy(base.data(), base.data() + 6400, batch.data() + k * 6400);
    batch[k * 6400 + pixels[k][0] * 80 + pixels[k][1]] += 0.5f;
  }
  const auto z1 = m.encode(batch);
  for (std::size_t k = 0; k < std::size(pixels); ++k)
    for (std::size_t c = 0; c < 16; ++c)
      for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j) {
          const float before = z0[(c * 10 + i) * 10 + j];
          const float after = z1[((k * 16 + c) * 10 + i) * 10 + j];
          if (!in_receptive_field(pixels[k][0], i) || !in_receptive_field(pixels[k][1], j)) {
            EXPECT_EQ(before, after) << "pixel " << k << " cell " << i << "," << j;
          }
        }
}

TEST(Model, ForecasterSpatialIndependence) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 17);
  Tensor<float> z({1, 16, 8, 10, 10});
  Rng rng(18);
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t t = 0; t < 8; ++t)
      z[((c * 8 + t) * 10 + 3) * 10 + 7] = static_cast<float>(rng.uniform(0.0, 2.0));
  const auto out = m.forecast_latent(z);
  bool any = false;
  for (std::size_t p = 0; p < 16 * 12; ++p)
    for (std::size_t cell = 0; cell < 100; ++cell) {
      const float v = out[p * 100 + cell];
      if (cell != 37) {
        EXPECT_EQ(v, 0.0f);
      }
      any = any || v != 0.0f;
    }
  EXPECT_TRUE(any);
}

TEST(Model, ShapeErrorsNameAxis) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 19);
  try {
    m.encode(Tensor<float>({1, 1, 64, 80}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.axis(), "height");
  }
  try {
    m.forecast_latent(Tensor<float>({1, 16, 7, 10, 10}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.axis(), "time");
  }
  EXPECT_THROW(m.decode(Tensor<float>({1, 8, 10, 10})), ShapeError);
  EXPECT_THROW(forecast(random_frames(7, 20), m), ShapeError);
}

TEST(Model, ForecastIsDeterministic) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 21);
  const auto in = random_frames(8, 22);
  EXPECT_EQ(forecast(in, m), forecast(in, m));
  EXPECT_EQ(ForecastModel::create(ModelConfig::pdfn(16), 21).autoencoder_tensors().size(),
            m.autoencoder_tensors().size());
}

TEST(Checkpoint, RoundTripReproducesForecast) {
  auto m = ForecastModel::create(ModelConfig::pdfn(16), 23);
  m.set_output_transform(OutputTransform::kIdentity);
  const auto dir = std::filesystem::temp_directory_path();
  io::write_checkpoint(m.autoencoder_tensors(), dir / "crowdcast_model_ae.ckpt");
  io::write_checkpoint(m.forecaster_tensors(), dir / "crowdcast_model_fc.ckpt");
  auto back = ForecastModel::from_autoencoder(io::read_checkpoint(dir / "crowdcast_model_ae.ckpt"));
  back.load_forecaster(io::read_checkpoint(dir / "crowdcast_model_fc.ckpt"));
  EXPECT_EQ(back.output_transform(), OutputTransform::kIdentity);
  const auto in = random_frames(8, 24);
  EXPECT_EQ(forecast(in, back), forecast(in, m));
  EXPECT_EQ(io::encode_checkpoint(back.autoencoder_tensors()),
            io::encode_checkpoint(m.autoencoder_tensors()));
}

TEST(Checkpoint, DetectsArchitecture) {
  const auto dfn = ForecastModel::create(ModelConfig::dfn(128), 25);
  const auto back = ForecastModel::from_autoencoder(dfn.autoencoder_tensors());
  EXPECT_EQ(back.config(), ModelConfig::dfn(128));
}

TEST(Checkpoint, RejectsMismatches) {
  const auto m = ForecastModel::create(ModelConfig::pdfn(16), 26);
  auto missing = m.autoencoder_tensors();
  missing.erase(missing.begin() + 1);
  EXPECT_THROW(ForecastModel::from_autoencoder(missing), FormatError);

  auto extra = m.autoencoder_tensors();
  extra.push_back({"decoder.9.weight", Tensor<float>({1})});
  EXPECT_THROW(ForecastModel::from_autoencoder(extra), FormatError);

  auto reshaped = m.autoencoder_tensors();
  for (auto& t : reshaped)
    if (t.name == "decoder.1.weight") t.value = Tensor<float>({32, 32, 3, 3});
  EXPECT_THROW(ForecastModel::from_autoencoder(reshaped), FormatError);

  auto fresh = ForecastModel::create(ModelConfig::pdfn(16), 27);
  EXPECT_THROW(fresh.load_forecaster(m.autoencoder_tensors()), FormatError);
  auto other_k = ForecastModel::create(ModelConfig::pdfn(8), 28);
  EXPECT_THROW(fresh.load_forecaster(other_k.forecaster_tensors()), FormatError);
}

TEST(Checkpoint, BinaryFormat) {
  const std::vector<io::NamedTensor> ts{{"a.b", Tensor<float>({2, 3}, 1.5f)}};
  const std::string bytes = io::encode_checkpoint(ts);
  EXPECT_EQ(bytes.substr(0, 4), "CDFW");
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 3 + 1 + 8 + 24);
  const auto back = io::decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].name, "a.b");
  EXPECT_EQ(back[0].value, ts[0].value);
  EXPECT_THROW(io::decode_checkpoint(bytes.substr(0, bytes.size() - 2)), FormatError);
  EXPECT_THROW(io::decode_checkpoint(bytes + "z"), FormatError);
  std::string bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(io::decode_checkpoint(bad), FormatError);
}
