#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crowdcast/error.hpp"

namespace crowdcast {

/// Per-cell crowdedness in [0, 1], row-major (y * width + x).
struct DensityMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;

  DensityMap() = default;
  DensityMap(std::size_t w, std::size_t h, float fill = 0.0f)
      : width(w), height(h), values(w * h, fill) {}

  float& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
  float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
  std::size_t cells() const noexcept { return values.size(); }

  friend bool operator==(const DensityMap&, const DensityMap&) = default;
};

/// Ordered frames sharing one grid.
struct DensitySequence {
  std::vector<DensityMap> frames;
  double frame_rate = 0.0;

  std::size_t length() const noexcept { return frames.size(); }
  std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }

  /// Frames [start, start + count) as a new sequence.
  DensitySequence slice(std::size_t start, std::size_t count) const {
    if (start + count > frames.size())
      throw InputError("slice [" + std::to_string(start) + ", " + std::to_string(start + count) +
                       ") exceeds sequence length " + std::to_string(frames.size()));
    DensitySequence out;
    out.frame_rate = frame_rate;
    out.frames.assign(frames.begin() + static_cast<std::ptrdiff_t>(start),
                      frames.begin() + static_cast<std::ptrdiff_t>(start + count));
    return out;
  }

  friend bool operator==(const DensitySequence&, const DensitySequence&) = default;
};

/// Throws unless all frames share a grid and every value is finite in [0,1].
inline void validate(const DensitySequence& seq) {
  if (seq.frames.empty()) throw InputError("density sequence is empty");
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const DensityMap& m = seq.frames[t];
    if (m.width != seq.width() || m.height != seq.height())
      throw InputError("frame " + std::to_string(t) + " grid differs from frame 0");
    if (m.values.size() != m.width * m.height)
      throw InputError("frame " + std::to_string(t) + " has inconsistent value count");
    for (float v : m.values)
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw InputError("frame " + std::to_string(t) + " has a value outside [0,1]");
  }
}

struct Annotation {
  std::uint64_t frame = 0;
  std::uint64_t person_id = 0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

using AnnotationStream = std::vector<Annotation>;

/// One more than the largest frame index, or 0 for an empty stream.
inline std::size_t frame_count(const AnnotationStream& ann) {
  std::size_t n = 0;
  for (const auto& a : ann) n = std::max<std::size_t>(n, a.frame + 1);
  return n;
}

/// Deposits a unit impulse per annotation at its cell (floor of the
/// coordinate; cell i spans [i, i+1)). Collisions saturate at 1.
inline DensitySequence rasterize(const AnnotationStream& ann, std::size_t width,
                                 std::size_t height, std::size_t n_frames) {
  if (width == 0 || height == 0) throw InputError("rasterize: grid must be non-empty");
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  DensitySequence seq;
  seq.frames.assign(n_frames, DensityMap(width, height));
  for (const auto& a : ann) {
    const std::string who = "frame " + std::to_string(a.frame) + " id " +
                            std::to_string(a.person_id);
    if (!seen.emplace(a.frame, a.person_id).second)
      throw InputError("rasterize: duplicate annotation for " + who);
    if (a.frame >= n_frames) throw InputError("rasterize: " + who + " is past the last frame");
    if (!(a.x >= 0.0 && a.x < static_cast<double>(width) && a.y >= 0.0 &&
          a.y < static_cast<double>(height)))
      throw InputError("rasterize: " + who + " lies outside the " + std::to_string(width) +
                       "x" + std::to_string(height) + " map");
    const auto cx = std::min(static_cast<std::size_t>(a.x), width - 1);
    const auto cy = std::min(static_cast<std::size_t>(a.y), height - 1);
    seq.frames[a.frame].at(cx, cy) = 1.0f;
  }
  return seq;
}

/// Truncated Gaussian taps for offsets -r..r with r = ceil(3 sigma),
/// renormalized to unit sum.
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw InputError("gaussian_kernel: sigma must be positive");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
    const double w = std::exp(-static_cast<double>(d * d) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(d + radius)] = w;
    total += w;
  }
  for (double& w : k) w /= total;
  return k;
}

namespace detail {

// 1-D zero-padded correlation along one axis of a [T][H][W] volume.
inline void convolve_axis(std::vector<double>& vol, std::size_t nt, std::size_t nh,
                          std::size_t nw, int axis, const std::vector<double>& kernel) {
  const std::size_t extent = axis == 0 ? nt : axis == 1 ? nh : nw;
  const std::size_t stride = axis == 0 ? nh * nw : axis == 1 ? nw : 1;
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  std::vector<double> line(extent), out(extent);
  const std::size_t lines = nt * nh * nw / extent;
  for (std::size_t l = 0; l < lines; ++l) {
    // Decompose the line index into the base offset of the line.
    std::size_t base;
    if (axis == 0) {
      base = l;
    } else if (axis == 1) {
      base = (l / nw) * nh * nw + l % nw;
    } else {
      base = l * nw;
    }
    for (std::size_t i = 0; i < extent; ++i) line[i] = vol[base + i * stride];
    for (std::size_t i = 0; i < extent; ++i) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
        const auto j = static_cast<std::ptrdiff_t>(i) + d;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(extent)) continue;
        acc += kernel[static_cast<std::size_t>(d + radius)] * line[static_cast<std::size_t>(j)];
      }
      out[i] = acc;
    }
    for (std::size_t i = 0; i < extent; ++i) vol[base + i * stride] = out[i];
  }
}

inline DensitySequence smooth(const DensitySequence& seq, double sigma, bool temporal) {
  validate(seq);
  const auto kernel = gaussian_kernel(sigma);
  const std::size_t nt = seq.length(), nh = seq.height(), nw = seq.width();
  std::vector<double> vol;
  vol.reserve(nt * nh * nw);
  for (const auto& f : seq.frames) vol.insert(vol.end(), f.values.begin(), f.values.end());
  convolve_axis(vol, nt, nh, nw, 2, kernel);
  convolve_axis(vol, nt, nh, nw, 1, kernel);
  if (temporal) convolve_axis(vol, nt, nh, nw, 0, kernel);
  DensitySequence out = seq;
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t i = 0; i < nh * nw; ++i)
      out.frames[t].values[i] = static_cast<float>(std::clamp(vol[t * nh * nw + i], 0.0, 1.0));
  return out;
}

}  // namespace detail

/// Separable Gaussian with the same sigma on x, y and t. Zero padding at
/// every border; outputs are clamped to [0,1].
inline DensitySequence smooth_spatiotemporal(const DensitySequence& seq, double sigma) {
  return detail::smooth(seq, sigma, true);
}

/// Per-frame Gaussian on x and y only. Frames never see their neighbours,
/// so windowed inputs carry no information from outside the window.
inline DensitySequence smooth_spatial(const DensitySequence& seq, double sigma) {
  return detail::smooth(seq, sigma, false);
}

namespace detail {

// Row-stochastic area-overlap weights mapping `in` cells onto `out` cells.
inline std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t in,
                                                                             std::size_t out) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * scale, hi = static_cast<double>(o + 1) * scale;
    for (auto i = static_cast<std::size_t>(lo); i < in && static_cast<double>(i) < hi; ++i) {
      const double overlap =
          std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w[o].emplace_back(i, overlap / scale);
    }
  }
  return w;
}

}  // namespace detail

/// Area-weighted resampling; each output cell is the mean of the input area it covers.
inline DensityMap resize_area(const DensityMap& map, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw InputError("resize_area: target grid must be non-empty");
  const auto wx = detail::area_weights(map.width, width);
  const auto wy = detail::area_weights(map.height, height);
  DensityMap out(width, height);
  for (std::size_t oy = 0; oy < height; ++oy) {
    for (std::size_t ox = 0; ox < width; ++ox) {
      double acc = 0.0;
      for (const auto& [iy, ay] : wy[oy])
        for (const auto& [ix, ax] : wx[ox]) acc += ay * ax * map.at(ix, iy);
      out.at(ox, oy) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return out;
}

inline DensitySequence sqrt_transform(DensitySequence seq) {
  for (auto& f : seq.frames)
    for (float& v : f.values) v = std::sqrt(std::max(v, 0.0f));
  return seq;
}

inline DensitySequence square_transform(DensitySequence seq) {
  for (auto& f : seq.frames)
    for (float& v : f.values) v = v * v;
  return seq;
}

}  // namespace crowdcast
