#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "crowdcast/metrics.hpp"
#include "crowdcast/rng.hpp"

using namespace crowdcast;
using namespace crowdcast::metrics;

namespace {

DensityMap random_map(std::size_t w, std::size_t h, Rng& rng, double sparsity = 0.0) {
  DensityMap m(w, h);
  for (float& v : m.values)
    v = rng.uniform() < sparsity ? 0.0f : static_cast<float>(rng.uniform());
  return m;
}

DensitySequence blob_sequence(std::size_t frames, double x0, double vx) {
  DensitySequence s;
  for (std::size_t t = 0; t < frames; ++t) {
    DensityMap m(80, 80);
    const double cx = x0 + vx * static_cast<double>(t);
    for (std::size_t y = 30; y < 38; ++y)
      for (std::size_t x = 0; x < 80; ++x)
        if (std::abs(static_cast<double>(x) - cx) < 3.0) m.at(x, y) = 0.8f;
    s.frames.push_back(m);
  }
  return s;
}

}  // namespace

TEST(Normalize, SumsToOneAndHandlesZeros) {
  Rng rng(1);
  const auto p = normalize(random_map(9, 7, rng));
  double total = 0.0;
  for (double v : p.p) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  const auto u = normalize(DensityMap(4, 5));
  for (double v : u.p) EXPECT_NEAR(v, 1.0 / 20.0, 1e-15);
  DensityMap neg(2, 2);
  neg.values[3] = -0.1f;
  EXPECT_THROW(normalize(neg), InputError);
}

TEST(Divergences, ZeroOnIdenticalMaps) {
  Rng rng(2);
  for (int k = 0; k < 10; ++k) {
    const auto p = normalize(random_map(80, 80, rng, 0.5));
    EXPECT_LE(std::abs(kl_divergence(p, p)), 1e-12);
    EXPECT_LE(std::abs(inverse_kl(p, p)), 1e-12);
    EXPECT_LE(std::abs(js_divergence(p, p)), 1e-12);
  }
}

TEST(Divergences, NonNegativeAndBounded) {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const auto g = normalize(random_map(12, 10, rng, 0.6));
    const auto c = normalize(random_map(12, 10, rng, 0.6));
    EXPECT_GE(kl_divergence(g, c), 0.0);
    EXPECT_GE(inverse_kl(g, c), 0.0);
    const double js = js_divergence(g, c);
    EXPECT_GE(js, 0.0);
    EXPECT_LE(js, std::numbers::ln2);
    EXPECT_LE(std::abs(js - js_divergence(c, g)), 1e-12);
    EXPECT_DOUBLE_EQ(inverse_kl(g, c), kl_divergence(c, g));
  }
}

TEST(Divergences, DisjointSupportsGiveLn2) {
  DensityMap a(80, 80), b(80, 80);
  for (std::size_t x = 0; x < 40; ++x) a.at(x, 10) = 1.0f;
  for (std::size_t x = 40; x < 80; ++x) b.at(x, 70) = 0.5f;
  EXPECT_NEAR(js_divergence(normalize(a), normalize(b)), std::numbers::ln2, 1e-6);
}

TEST(Divergences, PrefactorScalesExactly) {
  Rng rng(4);
  const auto g = normalize(random_map(80, 80, rng, 0.3));
  const auto c = normalize(random_map(80, 80, rng, 0.3));
  const double scale = 1.0 / 6400.0;
  EXPECT_DOUBLE_EQ(kl_divergence(g, c, true), kl_divergence(g, c) * scale);
  EXPECT_DOUBLE_EQ(inverse_kl(g, c, true), inverse_kl(g, c) * scale);
  EXPECT_DOUBLE_EQ(js_divergence(g, c, true), js_divergence(g, c) * scale);
}

TEST(Divergences, GridMismatchThrows) {
  EXPECT_THROW(kl_divergence(normalize(DensityMap(3, 3)), normalize(DensityMap(3, 4))), ShapeError);
  EXPECT_THROW(js_divergence(normalize(DensityMap(2, 3)), normalize(DensityMap(3, 3))), ShapeError);
}

TEST(Evaluate, PerfectForecastScoresZero) {
  const auto gt = blob_sequence(12, 20, 1.0);
  const auto r = evaluate_sequence(gt, gt);
  ASSERT_EQ(r.frames.size(), 12u);
  for (const auto& f : r.frames) {
    EXPECT_LE(std::abs(f.d_kl), 1e-12);
    EXPECT_LE(std::abs(f.d_js), 1e-12);
  }
}

TEST(Evaluate, AggregatesAreMeanAndLast) {
  const auto gt = blob_sequence(12, 20, 1.0);
  const auto pred = blob_sequence(12, 20, 1.5);
  const auto r = evaluate_sequence(pred, gt);
  double sum = 0.0;
  for (const auto& f : r.frames) sum += f.d_js;
  EXPECT_NEAR(r.average.d_js, sum / 12.0, 1e-15);
  EXPECT_EQ(r.final.d_kl, r.frames.back().d_kl);
  EXPECT_GT(r.final.d_js, r.frames.front().d_js);
}

TEST(Evaluate, MismatchesThrow) {
  EXPECT_THROW(evaluate_sequence(blob_sequence(11, 20, 1), blob_sequence(12, 20, 1)), ShapeError);
  DensitySequence small;
  small.frames.assign(12, DensityMap(40, 80));
  EXPECT_THROW(evaluate_sequence(small, blob_sequence(12, 20, 1)), ShapeError);
}

TEST(Evaluate, StricterSigmaScoresWorse) {
  const auto gt = blob_sequence(12, 20, 1.0);
  const auto pred = blob_sequence(12, 22, 0.8);
  const auto r1 = evaluate_sequence(pred, gt, {1.0});
  const auto r3 = evaluate_sequence(pred, gt, {3.0});
  const auto r6 = evaluate_sequence(pred, gt, {6.0});
  EXPECT_GE(r1.average.d_kl, r3.average.d_kl);
  EXPECT_GE(r3.average.d_kl, r6.average.d_kl);
  EXPECT_GE(r1.average.d_ikl, r3.average.d_ikl);
  EXPECT_GE(r3.average.d_ikl, r6.average.d_ikl);
  EXPECT_GE(r1.average.d_js, r3.average.d_js);
  EXPECT_GE(r3.average.d_js, r6.average.d_js);
}

TEST(Evaluate, PrefactorOption) {
  const auto gt = blob_sequence(12, 20, 1.0);
  const auto pred = blob_sequence(12, 25, 1.0);
  EvalOptions on;
  on.prefactor = true;
  const auto a = evaluate_sequence(pred, gt), b = evaluate_sequence(pred, gt, on);
  EXPECT_DOUBLE_EQ(b.average.d_js, a.average.d_js / 6400.0);
}

TEST(Report, CsvLayout) {
  MetricReport r;
  r.frames = {{0.5, 0.25, 0.125}, {1.0, 2.0, 0.25}};
  r.average = {0.75, 1.125, 0.1875};
  r.final = r.frames.back();
  EXPECT_EQ(report_csv(r),
            "frame,d_kl,d_ikl,d_js\n"
            "1,0.5,0.25,0.125\n"
            "2,1,2,0.25\n"
            "average,0.75,1.125,0.1875\n"
            "final,1,2,0.25\n");
}

TEST(Report, MeanOfReports) {
  MetricReport a, b;
  a.frames = {{1, 2, 3}};
  b.frames = {{3, 4, 5}};
  a.average = a.final = a.frames[0];
  b.average = b.final = b.frames[0];
  const auto m = mean_report({a, b});
  EXPECT_DOUBLE_EQ(m.frames[0].d_kl, 2.0);
  EXPECT_DOUBLE_EQ(m.average.d_js, 4.0);
}
