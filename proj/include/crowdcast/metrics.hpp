#pragma once

// Divergences between normalized density maps: KL (recall-like), inverse KL
// (precision-like) and Jensen-Shannon. Natural logarithm throughout.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "crowdcast/density.hpp"

namespace crowdcast::metrics {

inline constexpr double kDefaultEpsilon = 1e-12;

/// Probability field over a W x H grid.
struct NormalizedMap {
  std::size_t width = 0, height = 0;
  std::vector<double> p;
};

/// Adds `epsilon` to every cell then divides by the total, so all-zero maps
/// become uniform.
inline NormalizedMap normalize(const DensityMap& map, double epsilon = kDefaultEpsilon) {
  NormalizedMap out{map.width, map.height, std::vector<double>(map.cells())};
  double total = 0.0;
  for (std::size_t i = 0; i < map.cells(); ++i) {
    const double v = map.values[i];
    if (v < 0.0 || !std::isfinite(v))
      throw InputError("normalize: negative or non-finite value at cell " + std::to_string(i));
    out.p[i] = v + epsilon;
    total += out.p[i];
  }
  for (double& v : out.p) v /= total;
  return out;
}

namespace detail {

inline void expect_same_grid(const char* op, const NormalizedMap& a, const NormalizedMap& b) {
  if (a.width != b.width) throw ShapeError(op, "width", a.width, b.width);
  if (a.height != b.height) throw ShapeError(op, "height", a.height, b.height);
}

inline double kl_sum(const std::vector<double>& g, const std::vector<double>& c) {
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i] > 0.0) acc += g[i] * std::log(g[i] / c[i]);
  return acc;
}

inline double scale(const NormalizedMap& m, bool prefactor) {
  return prefactor ? 1.0 / static_cast<double>(m.width * m.height) : 1.0;
}

}  // namespace detail

/// sum g log(g / c), times 1/(W*H) when `prefactor` is set.
inline double kl_divergence(const NormalizedMap& g, const NormalizedMap& c, bool prefactor = false) {
  detail::expect_same_grid("kl_divergence", g, c);
  return detail::kl_sum(g.p, c.p) * detail::scale(g, prefactor);
}

/// KL with arguments swapped: KL(c || g).
inline double inverse_kl(const NormalizedMap& g, const NormalizedMap& c, bool prefactor = false) {
  return kl_divergence(c, g, prefactor);
}

/// 1/2 [KL(g || m) + KL(c || m)], m = (g + c) / 2.
inline double js_divergence(const NormalizedMap& g, const NormalizedMap& c, bool prefactor = false) {
  detail::expect_same_grid("js_divergence", g, c);
  std::vector<double> m(g.p.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (g.p[i] + c.p[i]);
  return 0.5 * (detail::kl_sum(g.p, m) + detail::kl_sum(c.p, m)) * detail::scale(g, prefactor);
}

struct FrameScores {
  double d_kl = 0.0, d_ikl = 0.0, d_js = 0.0;
};

struct MetricReport {
  std::vector<FrameScores> frames;
  FrameScores average;
  FrameScores final;
};

struct EvalOptions {
  double sigma = 3.0;
  bool prefactor = false;
  double epsilon = kDefaultEpsilon;
};

/// Smooths prediction and ground truth spatiotemporally with sigma, then
/// scores every frame; Average is the frame mean, Final the last frame.
inline MetricReport evaluate_sequence(const DensitySequence& pred, const DensitySequence& gt,
                                      const EvalOptions& opts = {}) {
  if (pred.length() != gt.length())
    throw ShapeError("evaluate_sequence", "time", gt.length(), pred.length());
  if (pred.width() != gt.width())
    throw ShapeError("evaluate_sequence", "width", gt.width(), pred.width());
  if (pred.height() != gt.height())
    throw ShapeError("evaluate_sequence", "height", gt.height(), pred.height());
  const DensitySequence sp = smooth_spatiotemporal(pred, opts.sigma);
  const DensitySequence sg = smooth_spatiotemporal(gt, opts.sigma);
  MetricReport r;
  for (std::size_t t = 0; t < sp.length(); ++t) {
    const NormalizedMap g = normalize(sg.frames[t], opts.epsilon);
    const NormalizedMap c = normalize(sp.frames[t], opts.epsilon);
    r.frames.push_back({kl_divergence(g, c, opts.prefactor), inverse_kl(g, c, opts.prefactor),
                        js_divergence(g, c, opts.prefactor)});
  }
  for (const auto& f : r.frames) {
    r.average.d_kl += f.d_kl;
    r.average.d_ikl += f.d_ikl;
    r.average.d_js += f.d_js;
  }
  const auto n = static_cast<double>(r.frames.size());
  r.average.d_kl /= n;
  r.average.d_ikl /= n;
  r.average.d_js /= n;
  r.final = r.frames.back();
  return r;
}

/// Mean of several reports, frame by frame and for the aggregates.
inline MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport out;
  if (reports.empty()) return out;
  out.frames.resize(reports.front().frames.size());
  auto add = [](FrameScores& a, const FrameScores& b, double w) {
    a.d_kl += w * b.d_kl;
    a.d_ikl += w * b.d_ikl;
    a.d_js += w * b.d_js;
  };
  const double w = 1.0 / static_cast<double>(reports.size());
  for (const auto& r : reports) {
    for (std::size_t t = 0; t < out.frames.size(); ++t) add(out.frames[t], r.frames.at(t), w);
    add(out.average, r.average, w);
    add(out.final, r.final, w);
  }
  return out;
}

/// CSV with header frame,d_kl,d_ikl,d_js; frames numbered from 1, then
/// `average` and `final` rows.
inline std::string report_csv(const MetricReport& r) {
  std::string out = "frame,d_kl,d_ikl,d_js\n";
  char line[160];
  auto row = [&](const std::string& label, const FrameScores& s) {
    std::snprintf(line, sizeof line, "%s,%.9g,%.9g,%.9g\n", label.c_str(), s.d_kl, s.d_ikl,
                  s.d_js);
    out += line;
  };
  for (std::size_t t = 0; t < r.frames.size(); ++t) row(std::to_string(t + 1), r.frames[t]);
  row("average", r.average);
  row("final", r.final);
  return out;
}

}  // namespace crowdcast::metrics
