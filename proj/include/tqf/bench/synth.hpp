#pragma once

// Deterministic moving-shape clips with appearance and motion distractors.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tqf/text/decomposer.hpp"

namespace tqf::bench {

enum class SceneMode { kAppearanceTwin, kMotionTwin, kMixed };
SceneMode parse_mode(const std::string& name);
const char* mode_name(SceneMode mode);

enum class Motion { kStatic, kLinear, kCircular, kFall };
const char* motion_name(Motion m);
Motion parse_motion(const std::string& name);

struct SceneConfig {
  SceneMode mode = SceneMode::kMixed;
  std::size_t frames = 8;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t objects = 3;
  std::size_t track_points = 8;

  void validate() const;
};

struct ObjectRecord {
  std::string shape;  // circle | square | triangle
  std::string color;
  std::array<double, 3> rgb{};
  Motion motion = Motion::kStatic;
  std::vector<double> motion_params;  // linear: vx vy; circular: radius omega phase; fall: v0 g
  std::string direction;              // linear only: left | right | up | down
  double radius = 0;
  std::vector<double> centers;        // [frames x 2], (x, y)
};

/// Point tracks on the target: coordinates are exact (sub-pixel) positions,
/// valid where the rounded point lies on the target's visible mask.
struct TrackSet {
  std::size_t tracks = 0;
  std::size_t frames = 0;
  std::vector<double> coords;       // [tracks x frames x 2]
  std::vector<std::uint8_t> valid;  // [tracks x frames]
};

struct SceneClip {
  SceneConfig config;
  std::uint64_t seed = 0;
  std::vector<float> frames;                      // [T x 3 x H x W] in [0,1]
  std::vector<std::vector<std::uint8_t>> gt_masks;  // per object, [T x H x W] visible region
  std::vector<ObjectRecord> objects;
  text::TokenizedExpression expression;
  std::size_t target_id = 0;
  TrackSet gt_tracks;

  std::size_t area() const { return config.height * config.width; }
  /// Index of the object visible at (x, y) in frame t, or -1 for background.
  int object_at(std::size_t t, std::size_t x, std::size_t y) const;
};

SceneClip generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Object motion offset from frame 0 to frame t.
std::array<double, 2> displacement(const ObjectRecord& obj, std::size_t t);

/// Writes scene.json, frames.ten, gt_masks.ten and tracks/coords.ten.
void write_scene(const std::filesystem::path& dir, const SceneClip& clip);
SceneClip read_scene(const std::filesystem::path& dir);

/// Cycles through `weights` (mode -> count) in a fixed mode order, so any
/// count divisible by the weight total reproduces the fractions exactly.
std::vector<SceneMode> mode_schedule(const std::vector<std::pair<SceneMode, std::size_t>>& weights, std::size_t count);

}  // namespace tqf::bench
