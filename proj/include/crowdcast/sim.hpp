#pragma once

// Deterministic synthetic crowds: groups of agents sharing a base velocity,
// observed with per-frame positional jitter.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "crowdcast/density.hpp"
#include "crowdcast/rng.hpp"

namespace crowdcast::sim {

enum class SpawnPolicy { kInterior, kEdgeIn };

struct Vec2 {
  double x = 0.0, y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Fully specified group, bypassing random placement.
struct GroupSpec {
  Vec2 velocity;
  std::vector<Vec2> positions;
};

inline constexpr double kMaxSpeed = 2.0;

struct Scenario {
  std::size_t width = 80, height = 80;
  std::size_t n_groups = 2;
  std::size_t min_agents = 6, max_agents = 10;
  double min_speed = 0.5, max_speed = 1.5;
  double jitter = 0.1;
  double group_radius = 4.0;
  SpawnPolicy spawn = SpawnPolicy::kInterior;
  std::size_t n_frames = 200;
  std::uint64_t seed = 0;
  /// When non-empty, replaces random group placement (n_groups is ignored).
  std::vector<GroupSpec> groups;

  std::size_t group_count() const { return groups.empty() ? n_groups : groups.size(); }
  std::size_t max_active() const {
    if (groups.empty()) return n_groups * max_agents;
    std::size_t n = 0;
    for (const auto& g : groups) n += g.positions.size();
    return n;
  }
};

inline void validate(const Scenario& s) {
  if (s.n_frames == 0) throw InputError("scenario: n_frames must be at least 1");
  if (s.group_count() == 0) throw InputError("scenario: at least one group is required");
  if (s.width == 0 || s.height == 0) throw InputError("scenario: map size must be positive");
  if (s.groups.empty()) {
    if (s.min_agents == 0 || s.min_agents > s.max_agents)
      throw InputError("scenario: agents per group must satisfy 1 <= min <= max");
    if (s.min_speed < 0.0 || s.min_speed > s.max_speed || s.max_speed > kMaxSpeed)
      throw InputError("scenario: speeds must satisfy 0 <= min <= max <= 2 cells/frame");
    if (s.spawn == SpawnPolicy::kEdgeIn && s.min_speed <= 0.0)
      throw InputError("scenario: edge-in spawning needs a positive minimum speed");
  }
  for (const auto& g : s.groups)
    if (std::hypot(g.velocity.x, g.velocity.y) > kMaxSpeed)
      throw InputError("scenario: group speed exceeds 2 cells/frame");
  if (s.jitter < 0.0 || s.group_radius < 0.0)
    throw InputError("scenario: jitter and group radius must be non-negative");
}

namespace detail {

struct Agent {
  std::uint64_t id = 0;
  std::size_t group = 0;
  Vec2 pos, vel;
  bool entered = false;
  bool exited = false;
};

inline bool inside(const Vec2& p, double w, double h) {
  return p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h;
}

// Mirror a coordinate back into [0, extent) and flip the velocity component.
inline void reflect(double& p, double& v, double extent) {
  if (p < 0.0) {
    p = -p;
    v = -v;
  } else if (p >= extent) {
    p = 2.0 * extent - p;
    v = -v;
  }
  p = std::clamp(p, 0.0, std::nextafter(extent, 0.0));
}

inline double round6(double v) { return std::round(v * 1e6) / 1e6; }

class World {
 public:
  explicit World(const Scenario& s) : s_(s), rng_(derive_seed(s.seed, 0x5151)) {}

  void spawn_initial() {
    if (!s_.groups.empty()) {
      for (std::size_t g = 0; g < s_.groups.size(); ++g)
        for (const Vec2& p : s_.groups[g].positions)
          add_agent(g, p, s_.groups[g].velocity);
      return;
    }
    for (std::size_t g = 0; g < s_.n_groups; ++g) spawn_group(g);
  }

  void emit(std::size_t frame, AnnotationStream& out) {
    const double w = static_cast<double>(s_.width), h = static_cast<double>(s_.height);
    for (Agent& a : agents_) {
      if (s_.spawn == SpawnPolicy::kEdgeIn) {
        if (!a.entered && inside(a.pos, w, h)) a.entered = true;
        if (a.entered && !a.exited && !inside(a.pos, w, h)) a.exited = true;
        if (!a.entered || a.exited) continue;
      }
      Vec2 p = a.pos;
      if (s_.jitter > 0.0) {
        p.x += rng_.normal(0.0, s_.jitter);
        p.y += rng_.normal(0.0, s_.jitter);
      }
      p.x = std::clamp(round6(p.x), 0.0, std::nextafter(w, 0.0));
      p.y = std::clamp(round6(p.y), 0.0, std::nextafter(h, 0.0));
      out.push_back({frame, a.id, p.x, p.y});
    }
  }

  void advance() {
    const double w = static_cast<double>(s_.width), h = static_cast<double>(s_.height);
    for (Agent& a : agents_) {
      a.pos.x += a.vel.x;
      a.pos.y += a.vel.y;
      if (s_.spawn == SpawnPolicy::kInterior) {
        reflect(a.pos.x, a.vel.x, w);
        reflect(a.pos.y, a.vel.y, h);
      }
    }
    if (s_.spawn != SpawnPolicy::kEdgeIn || !s_.groups.empty()) return;
    // Edge-in groups that have fully left the map re-enter with fresh ids.
    for (std::size_t g = 0; g < s_.n_groups; ++g) {
      const bool done = std::all_of(agents_.begin(), agents_.end(), [&](const Agent& a) {
        return a.group != g || a.exited || stale(a);
      });
      if (!done) continue;
      std::erase_if(agents_, [&](const Agent& a) { return a.group == g; });
      spawn_group(g);
    }
  }

 private:
  // An agent that has not entered after crossing the map twice never will.
  bool stale(const Agent& a) const {
    return !a.entered && (a.pos.x < -2.0 * static_cast<double>(s_.width) ||
                          a.pos.x > 3.0 * static_cast<double>(s_.width) ||
                          a.pos.y < -2.0 * static_cast<double>(s_.height) ||
                          a.pos.y > 3.0 * static_cast<double>(s_.height));
  }

  // State lives on the 1e-6 grid used for output, so emitted displacements
  // equal the velocity up to double rounding.
  void add_agent(std::size_t group, Vec2 pos, Vec2 vel) {
    pos = {round6(pos.x), round6(pos.y)};
    vel = {round6(vel.x), round6(vel.y)};
    agents_.push_back(Agent{next_id_++, group, pos, vel, false, false});
  }

  void spawn_group(std::size_t g) {
    const double w = static_cast<double>(s_.width), h = static_cast<double>(s_.height);
    const double r = s_.group_radius;
    const auto count = s_.min_agents + rng_.below(s_.max_agents - s_.min_agents + 1);
    const double speed = rng_.uniform(s_.min_speed, s_.max_speed);
    Vec2 center, vel;
    if (s_.spawn == SpawnPolicy::kInterior) {
      center = {rng_.uniform(std::min(r, w / 2), std::max(w - r, w / 2)),
                rng_.uniform(std::min(r, h / 2), std::max(h - r, h / 2))};
      const double angle = rng_.uniform(0.0, 2.0 * std::numbers::pi);
      vel = {speed * std::cos(angle), speed * std::sin(angle)};
    } else {
      // Start just outside one edge, heading inward within +-45 degrees.
      const auto edge = rng_.below(4);
      const double along = rng_.uniform(0.2, 0.8);
      const double inward[4] = {0.0, std::numbers::pi, std::numbers::pi / 2,
                                -std::numbers::pi / 2};
      const double angle = inward[edge] + rng_.uniform(-std::numbers::pi / 4, std::numbers::pi / 4);
      vel = {speed * std::cos(angle), speed * std::sin(angle)};
      switch (edge) {
        case 0: center = {-r - 0.5, along * h}; break;       // left, moving +x
        case 1: center = {w + r + 0.5, along * h}; break;    // right, moving -x
        case 2: center = {along * w, -r - 0.5}; break;       // top, moving +y
        default: center = {along * w, h + r + 0.5}; break;   // bottom, moving -y
      }
    }
    for (std::uint64_t k = 0; k < count; ++k) {
      const double rho = r * std::sqrt(rng_.uniform());
      const double phi = rng_.uniform(0.0, 2.0 * std::numbers::pi);
      Vec2 p{center.x + rho * std::cos(phi), center.y + rho * std::sin(phi)};
      if (s_.spawn == SpawnPolicy::kInterior) {
        p.x = std::clamp(p.x, 0.0, std::nextafter(w, 0.0));
        p.y = std::clamp(p.y, 0.0, std::nextafter(h, 0.0));
      }
      add_agent(g, p, vel);
    }
  }

  const Scenario& s_;
  Rng rng_;
  std::vector<Agent> agents_;
  std::uint64_t next_id_ = 0;
};

}  // namespace detail

/// Runs the scenario and returns annotations ordered by (frame, id). The
/// output is a pure function of the scenario, including its seed.
inline AnnotationStream simulate(const Scenario& scenario) {
  validate(scenario);
  detail::World world(scenario);
  world.spawn_initial();
  AnnotationStream out;
  for (std::size_t f = 0; f < scenario.n_frames; ++f) {
    const std::size_t first = out.size();
    world.emit(f, out);
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
              [](const Annotation& a, const Annotation& b) { return a.person_id < b.person_id; });
    world.advance();
  }
  return out;
}

struct TrackPoint {
  std::uint64_t frame = 0;
  double x = 0.0, y = 0.0;
};

/// Inclusive range of frames with no observation between two observed ones.
struct TrackGap {
  std::uint64_t first_missing = 0, last_missing = 0;
};

struct Trajectory {
  std::uint64_t person_id = 0;
  std::vector<TrackPoint> points;
  std::vector<TrackGap> gaps;

  /// Observation at `frame`, if any.
  std::optional<TrackPoint> at(std::uint64_t frame) const {
    auto it = std::lower_bound(points.begin(), points.end(), frame,
                               [](const TrackPoint& p, std::uint64_t f) { return p.frame < f; });
    if (it == points.end() || it->frame != frame) return std::nullopt;
    return *it;
  }
};

/// Ground-truth tracking: groups records by id, sorted by frame. Missing
/// frames are reported as gaps and never interpolated.
inline std::vector<Trajectory> track_oracle(const AnnotationStream& ann) {
  std::map<std::uint64_t, Trajectory> by_id;
  for (const auto& a : ann) {
    auto& t = by_id[a.person_id];
    t.person_id = a.person_id;
    t.points.push_back({a.frame, a.x, a.y});
  }
  std::vector<Trajectory> out;
  out.reserve(by_id.size());
  for (auto& [id, t] : by_id) {
    std::sort(t.points.begin(), t.points.end(),
              [](const TrackPoint& a, const TrackPoint& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < t.points.size(); ++i)
      if (t.points[i].frame > t.points[i - 1].frame + 1)
        t.gaps.push_back({t.points[i - 1].frame + 1, t.points[i].frame - 1});
    out.push_back(std::move(t));
  }
  return out;
}

/// Named scenarios shipped with the library.
inline std::optional<Scenario> preset(const std::string& name) {
  Scenario s;
  if (name == "two-groups") return s;
  if (name == "moving-crowd") {
    s.n_groups = 2;
    s.min_speed = 0.8;
    s.max_speed = 1.2;
    s.jitter = 0.05;
    return s;
  }
  if (name == "static") {
    s.min_speed = s.max_speed = 0.0;
    s.jitter = 0.0;
    return s;
  }
  if (name == "edge-in") {
    s.n_groups = 3;
    s.spawn = SpawnPolicy::kEdgeIn;
    return s;
  }
  return std::nullopt;
}

inline std::vector<std::string> preset_names() {
  return {"two-groups", "moving-crowd", "static", "edge-in"};
}

}  // namespace crowdcast::sim
