#pragma once

// Built-in health checks: gradient checks for every primitive in both
// precisions plus shape checks through the full pipeline.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "crowdcast/model.hpp"
#include "crowdcast/nn/gradcheck.hpp"

namespace crowdcast::selftest {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Options {
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  /// Test fixture: scales the analytic gradient of this op so its check fails.
  std::optional<nn::PrimitiveOp> corrupt;
  double corrupt_scale = 1.1;
};

namespace detail {

template <typename T>
CheckResult gradient_check(nn::PrimitiveOp op, const Options& opts, const char* precision) {
  nn::GradCheckOptions g;
  g.instances = opts.instances;
  g.seed = opts.seed;
  if (opts.corrupt == op) g.analytic_scale = opts.corrupt_scale;
  const auto r = nn::check_primitive<T>(op, g);
  char buf[96];
  std::snprintf(buf, sizeof buf, "max rel err %.3g (tol %.0e, %zu instances)",
                r.max_relative_error, r.tolerance, r.instances);
  return {std::string("grad/") + precision + "/" + r.op, r.passed(), buf};
}

inline CheckResult shape_check(const std::string& name, const Shape& expected,
                               const Shape& actual) {
  return {name, expected == actual, "expected " + shape_string(expected) + ", got " +
                                        shape_string(actual)};
}

}  // namespace detail

inline std::vector<CheckResult> run(const Options& opts = {}) {
  std::vector<CheckResult> out;
  for (nn::PrimitiveOp op : nn::kAllPrimitiveOps) {
    out.push_back(detail::gradient_check<float>(op, opts, "f32"));
    out.push_back(detail::gradient_check<double>(op, opts, "f64"));
  }

  using namespace model;
  for (const ModelConfig cfg : {ModelConfig::pdfn(16), ModelConfig::dfn(128)}) {
    const std::string arch = cfg.arch == Architecture::kPdfn ? "pdfn" : "dfn";
    const std::size_t k = cfg.latent_dim, g = cfg.grid();
    const ForecastModel m = ForecastModel::create(cfg, opts.seed);
    const Tensor<float> frames({kInputFrames, 1, kMapSize, kMapSize}, 0.25f);
    const Tensor<float> z = m.encode(frames);
    out.push_back(detail::shape_check("shape/" + arch + "/encode", {kInputFrames, k, g, g},
                                      z.shape()));
    const Tensor<float> z_out = m.forecast_latent(frames_to_sequence(z, 1, kInputFrames));
    out.push_back(detail::shape_check("shape/" + arch + "/forecast",
                                      {1, k, kOutputFrames, g, g}, z_out.shape()));
    const Tensor<float> c_out = m.decode(sequence_to_frames(z_out));
    out.push_back(detail::shape_check("shape/" + arch + "/decode",
                                      {kOutputFrames, 1, kMapSize, kMapSize}, c_out.shape()));
  }
  return out;
}

}  // namespace crowdcast::selftest
