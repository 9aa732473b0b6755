#pragma once

// Reference predictors scored alongside the learned model.

#include <cstdint>
#include <vector>

#include "crowdcast/density.hpp"
#include "crowdcast/sim.hpp"

namespace crowdcast::baselines {

/// Future positions of one agent under constant velocity. Entry tau-1 holds
/// the position at t + tau; extrapolation stops at the first out-of-bounds
/// step, so the vector may be shorter than `steps`.
inline std::vector<sim::Vec2> extrapolate(const sim::TrackPoint& prev, const sim::TrackPoint& last,
                                          std::size_t steps, std::size_t width,
                                          std::size_t height) {
  const double vx = last.x - prev.x, vy = last.y - prev.y;
  std::vector<sim::Vec2> out;
  for (std::size_t tau = 1; tau <= steps; ++tau) {
    const sim::Vec2 p{last.x + static_cast<double>(tau) * vx, last.y + static_cast<double>(tau) * vy};
    if (!(p.x >= 0.0 && p.x < static_cast<double>(width) && p.y >= 0.0 &&
          p.y < static_cast<double>(height)))
      break;
    out.push_back(p);
  }
  return out;
}

/// Linear extrapolation of every agent observed at both of the last two
/// input frames of the window starting at `window_start`. The predicted
/// positions are rasterized and smoothed spatially with `sigma`, the same
/// pipeline that turns annotations into model inputs (sigma 0 skips it).
inline DensitySequence constvel_forecast(const std::vector<sim::Trajectory>& tracks,
                                         std::size_t window_start, std::size_t input_frames,
                                         std::size_t output_frames, std::size_t width,
                                         std::size_t height, double sigma) {
  AnnotationStream future;
  if (input_frames >= 2) {
    const std::uint64_t t = window_start + input_frames - 1;
    for (const auto& track : tracks) {
      const auto last = track.at(t), prev = track.at(t - 1);
      if (!last || !prev) continue;
      const auto path = extrapolate(*prev, *last, output_frames, width, height);
      for (std::size_t k = 0; k < path.size(); ++k)
        future.push_back({k, track.person_id, path[k].x, path[k].y});
    }
  }
  DensitySequence seq = rasterize(future, width, height, output_frames);
  return sigma > 0.0 ? smooth_spatial(seq, sigma) : seq;
}

/// The last input frame repeated `output_frames` times, bit for bit.
inline DensitySequence persistence_forecast(const DensitySequence& c_in,
                                            std::size_t output_frames = 12) {
  if (c_in.length() == 0) throw InputError("persistence_forecast: no input frames");
  DensitySequence out;
  out.frame_rate = c_in.frame_rate;
  out.frames.assign(output_frames, c_in.frames.back());
  return out;
}

}  // namespace crowdcast::baselines
