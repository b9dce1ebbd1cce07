#include "tqf/bench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "json.hpp"
#include "tqf/core/ten_io.hpp"

namespace tqf::bench {
namespace {

using nlohmann::json;

struct Palette {
  const char* name;
  std::array<double, 3> rgb;
};

constexpr std::array<Palette, 6> kColors{{{"red", {0.90, 0.15, 0.15}},
                                          {"green", {0.15, 0.80, 0.20}},
                                          {"blue", {0.20, 0.30, 0.95}},
                                          {"yellow", {0.95, 0.85, 0.15}},
                                          {"purple", {0.65, 0.20, 0.80}},
                                          {"orange", {0.95, 0.55, 0.10}}}};
constexpr std::array<const char*, 3> kShapes{"circle", "square", "triangle"};
constexpr std::array<Motion, 4> kMotions{Motion::kStatic, Motion::kLinear, Motion::kCircular, Motion::kFall};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed ^ 0x5DEECE66DULL) {}
  double uniform(double a, double b) { return a + (b - a) * static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

 private:
  std::mt19937_64 gen_;
};

bool covers(const ObjectRecord& o, double cx, double cy, double x, double y) {
  const double dx = x - cx, dy = y - cy, r = o.radius;
  if (o.shape == "circle") return dx * dx + dy * dy <= r * r;
  if (o.shape == "square") return std::fabs(dx) <= 0.85 * r && std::fabs(dy) <= 0.85 * r;
  if (dy < -r || dy > 0.8 * r) return false;
  return std::fabs(dx) <= 0.55 * (dy + r);
}

void fill_motion(ObjectRecord& o, Rng& rng) {
  o.motion_params.clear();
  o.direction.clear();
  switch (o.motion) {
    case Motion::kStatic:
      break;
    case Motion::kLinear: {
      static constexpr std::array<const char*, 4> dirs{"left", "right", "up", "down"};
      const std::size_t d = rng.index(4);
      const double speed = rng.uniform(1.5, 2.5);
      const double vx = d == 0 ? -speed : d == 1 ? speed : 0.0;
      const double vy = d == 2 ? -speed : d == 3 ? speed : 0.0;
      o.motion_params = {vx, vy};
      o.direction = dirs[d];
      break;
    }
    case Motion::kCircular:
      o.motion_params = {rng.uniform(6.0, 9.0), rng.index(2) ? 0.45 : -0.45, rng.uniform(0.0, 2 * std::numbers::pi)};
      break;
    case Motion::kFall:
      o.motion_params = {rng.uniform(0.3, 0.8), rng.uniform(0.4, 0.6)};
      break;
  }
}

void motion_words(const ObjectRecord& o, std::vector<std::string>& tokens, std::vector<text::Tag>& tags) {
  using text::Tag;
  switch (o.motion) {
    case Motion::kStatic:
      tokens.insert(tokens.end(), {"staying", "still"});
      break;
    case Motion::kLinear:
      tokens.insert(tokens.end(), {"moving", o.direction});
      break;
    case Motion::kCircular:
      tokens.insert(tokens.end(), {"circling", "around"});
      break;
    case Motion::kFall:
      tokens.insert(tokens.end(), {"falling", "down"});
      break;
  }
  tags.insert(tags.end(), {Tag::kVerbIntrans, Tag::kAdv});
}

json object_json(const ObjectRecord& o) {
  return json{{"shape", o.shape},           {"color", o.color},   {"rgb", o.rgb},
              {"motion", motion_name(o.motion)}, {"motion_params", o.motion_params},
              {"direction", o.direction},   {"radius", o.radius}, {"centers", o.centers}};
}

}  // namespace

SceneMode parse_mode(const std::string& name) {
  if (name == "appearance_twin") return SceneMode::kAppearanceTwin;
  if (name == "motion_twin") return SceneMode::kMotionTwin;
  if (name == "mixed") return SceneMode::kMixed;
  throw ValidationError("unknown scene mode '" + name + "'");
}

const char* mode_name(SceneMode mode) {
  switch (mode) {
    case SceneMode::kAppearanceTwin: return "appearance_twin";
    case SceneMode::kMotionTwin: return "motion_twin";
    case SceneMode::kMixed: return "mixed";
  }
  return "?";
}

const char* motion_name(Motion m) {
  switch (m) {
    case Motion::kStatic: return "static";
    case Motion::kLinear: return "linear";
    case Motion::kCircular: return "circular";
    case Motion::kFall: return "fall";
  }
  return "?";
}

Motion parse_motion(const std::string& name) {
  for (Motion m : kMotions) {
    if (name == motion_name(m)) return m;
  }
  throw ValidationError("unknown motion '" + name + "'");
}

void SceneConfig::validate() const {
  if (objects < 2 || objects > 6) throw ValidationError("scene object count must be in [2, 6]");
  if (mode == SceneMode::kMixed && objects < 3) throw ValidationError("mixed scenes need at least 3 objects");
  if (frames < 1) throw ValidationError("scenes need at least one frame");
  if (height < 24 || width < 24) throw ValidationError("scene frames must be at least 24x24");
  if (track_points < 1) throw ValidationError("track_points must be at least 1");
}

std::array<double, 2> displacement(const ObjectRecord& o, std::size_t t) {
  const double s = static_cast<double>(t);
  const auto& p = o.motion_params;
  switch (o.motion) {
    case Motion::kStatic:
      return {0, 0};
    case Motion::kLinear:
      return {p[0] * s, p[1] * s};
    case Motion::kCircular:
      return {p[0] * (std::cos(p[2] + p[1] * s) - std::cos(p[2])), p[0] * (std::sin(p[2] + p[1] * s) - std::sin(p[2]))};
    case Motion::kFall:
      return {0, p[0] * s + 0.5 * p[1] * s * s};
  }
  return {0, 0};
}

int SceneClip::object_at(std::size_t t, std::size_t x, std::size_t y) const {
  const std::size_t p = t * area() + y * config.width + x;
  for (std::size_t k = 0; k < gt_masks.size(); ++k) {
    if (gt_masks[k][p]) return static_cast<int>(k);
  }
  return -1;
}

SceneClip generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  SceneClip clip;
  clip.config = config;
  clip.seed = seed;
  const std::size_t tcount = config.frames, h = config.height, w = config.width, area = h * w;
  const double radius_hi = config.objects > 4 ? 6.5 : 8.0;

  for (int attempt = 0;; ++attempt) {
    if (attempt == 200) throw ValidationError("could not place the scene objects without collisions");
    std::vector<ObjectRecord> objs(config.objects);
    const std::size_t target_color = rng.index(kColors.size());
    const std::size_t target_shape = rng.index(kShapes.size());
    auto& target = objs[0];
    target.color = kColors[target_color].name;
    target.rgb = kColors[target_color].rgb;
    target.shape = kShapes[target_shape];
    target.motion = kMotions[rng.index(kMotions.size())];
    fill_motion(target, rng);

    auto other_color = [&](std::size_t avoid) {
      std::size_t c = rng.index(kColors.size() - 1);
      return c >= avoid ? c + 1 : c;
    };
    auto other_motion = [&](Motion avoid) {
      Motion m;
      do m = kMotions[rng.index(kMotions.size())];
      while (m == avoid);
      return m;
    };
    std::size_t next = 1;
    if (config.mode != SceneMode::kMotionTwin) {
      auto& twin = objs[next++];
      twin.color = target.color;
      twin.rgb = target.rgb;
      twin.shape = target.shape;
      twin.motion = other_motion(target.motion);
      fill_motion(twin, rng);
    }
    if (config.mode != SceneMode::kAppearanceTwin) {
      auto& twin = objs[next++];
      const std::size_t c = other_color(target_color);
      twin.color = kColors[c].name;
      twin.rgb = kColors[c].rgb;
      twin.shape = target.shape;
      twin.motion = target.motion;
      twin.motion_params = target.motion_params;
      twin.direction = target.direction;
    }
    for (; next < objs.size(); ++next) {
      auto& o = objs[next];
      const std::size_t c = other_color(target_color);
      o.color = kColors[c].name;
      o.rgb = kColors[c].rgb;
      o.shape = kShapes[rng.index(kShapes.size())];
      o.motion = kMotions[rng.index(kMotions.size())];
      fill_motion(o, rng);
    }

    bool placed = true;
    for (std::size_t k = 0; k < objs.size() && placed; ++k) {
      auto& o = objs[k];
      o.radius = rng.uniform(5.5, radius_hi);
      double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
      for (std::size_t t = 0; t < tcount; ++t) {
        const auto d = displacement(o, t);
        lo_x = std::min(lo_x, d[0]);
        hi_x = std::max(hi_x, d[0]);
        lo_y = std::min(lo_y, d[1]);
        hi_y = std::max(hi_y, d[1]);
      }
      const double margin = o.radius + 1.0;
      const double x_min = margin - lo_x, x_max = static_cast<double>(w) - 1 - margin - hi_x;
      const double y_min = margin - lo_y, y_max = static_cast<double>(h) - 1 - margin - hi_y;
      if (x_min > x_max || y_min > y_max) {
        placed = false;
        break;
      }
      bool ok = false;
      for (int tries = 0; tries < 60 && !ok; ++tries) {
        const double x0 = rng.uniform(x_min, x_max), y0 = rng.uniform(y_min, y_max);
        ok = true;
        for (std::size_t j = 0; j < k && ok; ++j) {
          for (std::size_t t = 0; t < tcount && ok; ++t) {
            const auto d = displacement(o, t);
            const double dx = x0 + d[0] - objs[j].centers[2 * t];
            const double dy = y0 + d[1] - objs[j].centers[2 * t + 1];
            ok = std::sqrt(dx * dx + dy * dy) >= 0.9 * (o.radius + objs[j].radius);
          }
        }
        if (ok) {
          o.centers.resize(2 * tcount);
          for (std::size_t t = 0; t < tcount; ++t) {
            const auto d = displacement(o, t);
            o.centers[2 * t] = x0 + d[0];
            o.centers[2 * t + 1] = y0 + d[1];
          }
        }
      }
      placed = ok;
    }
    if (!placed) continue;

    // Shuffle so the target is not always object 0; draw order follows index.
    std::vector<std::size_t> order(objs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);
    clip.objects.clear();
    for (std::size_t k : order) clip.objects.push_back(objs[k]);
    clip.target_id = static_cast<std::size_t>(std::find(order.begin(), order.end(), 0) - order.begin());
    break;
  }

  const std::array<double, 3> background{0.08, 0.08, 0.10};
  clip.frames.assign(tcount * 3 * area, 0.0f);
  clip.gt_masks.assign(clip.objects.size(), std::vector<std::uint8_t>(tcount * area, 0));
  for (std::size_t t = 0; t < tcount; ++t) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        int top = -1;
        for (std::size_t k = 0; k < clip.objects.size(); ++k) {
          const auto& o = clip.objects[k];
          if (covers(o, o.centers[2 * t], o.centers[2 * t + 1], static_cast<double>(x), static_cast<double>(y))) {
            top = static_cast<int>(k);
          }
        }
        const auto& rgb = top < 0 ? background : clip.objects[static_cast<std::size_t>(top)].rgb;
        for (std::size_t c = 0; c < 3; ++c) {
          clip.frames[(t * 3 + c) * area + y * w + x] = static_cast<float>(rgb[c]);
        }
        if (top >= 0) clip.gt_masks[static_cast<std::size_t>(top)][t * area + y * w + x] = 1;
      }
    }
  }

  using text::Tag;
  const auto& target = clip.objects[clip.target_id];
  auto& ex = clip.expression;
  ex.tokens = {"the", target.color, target.shape};
  ex.tags = {Tag::kDet, Tag::kAdj, Tag::kNoun};
  motion_words(target, ex.tokens, ex.tags);
  if (config.mode == SceneMode::kMixed) {
    for (std::size_t k = 0; k < clip.objects.size(); ++k) {
      const auto& o = clip.objects[k];
      if (k == clip.target_id || o.color == target.color || o.motion != target.motion) continue;
      ex.tokens.insert(ex.tokens.end(), {"passing", "the", o.color, o.shape});
      ex.tags.insert(ex.tags.end(), {Tag::kVerbTrans, Tag::kDet, Tag::kAdj, Tag::kNoun});
      break;
    }
  }

  // Tracks start on evenly spaced visible target pixels of frame 0.
  const auto& mask = clip.gt_masks[clip.target_id];
  std::vector<std::size_t> pixels;
  for (std::size_t p = 0; p < area; ++p) {
    if (mask[p]) pixels.push_back(p);
  }
  auto& tr = clip.gt_tracks;
  tr.tracks = config.track_points;
  tr.frames = tcount;
  tr.coords.assign(tr.tracks * tcount * 2, 0.0);
  tr.valid.assign(tr.tracks * tcount, 0);
  for (std::size_t k = 0; k < tr.tracks && !pixels.empty(); ++k) {
    const std::size_t p = pixels[(k * pixels.size()) / tr.tracks];
    const double x0 = static_cast<double>(p % w), y0 = static_cast<double>(p / w);
    for (std::size_t t = 0; t < tcount; ++t) {
      const auto d = displacement(target, t);
      const double x = x0 + d[0], y = y0 + d[1];
      tr.coords[(k * tcount + t) * 2] = x;
      tr.coords[(k * tcount + t) * 2 + 1] = y;
      const long rx = std::lround(x), ry = std::lround(y);
      const bool inside = rx >= 0 && ry >= 0 && rx < static_cast<long>(w) && ry < static_cast<long>(h);
      tr.valid[k * tcount + t] =
          inside && mask[t * area + static_cast<std::size_t>(ry) * w + static_cast<std::size_t>(rx)];
    }
  }
  return clip;
}

void write_scene(const std::filesystem::path& dir, const SceneClip& clip) {
  const auto& cfg = clip.config;
  json objects = json::array();
  for (const auto& o : clip.objects) objects.push_back(object_json(o));
  std::vector<std::string> tags;
  for (auto t : clip.expression.tags) tags.push_back(text::tag_name(t));
  json doc{{"seed", clip.seed},
           {"mode", mode_name(cfg.mode)},
           {"frames", cfg.frames},
           {"height", cfg.height},
           {"width", cfg.width},
           {"track_points", cfg.track_points},
           {"objects", objects},
           {"expression", {{"tokens", clip.expression.tokens}, {"tags", tags}, {"target_id", clip.target_id}}},
           {"target_id", clip.target_id},
           {"tracks_valid", clip.gt_tracks.valid}};
  io::write_file(dir / "scene.json", doc.dump(2) + "\n");
  io::write_ten(dir / "frames.ten", Tensor<float>({cfg.frames, 3, cfg.height, cfg.width}, clip.frames));
  std::vector<float> masks;
  for (const auto& m : clip.gt_masks) masks.insert(masks.end(), m.begin(), m.end());
  io::write_ten(dir / "gt_masks.ten",
                Tensor<float>({clip.gt_masks.size(), cfg.frames, cfg.height, cfg.width}, std::move(masks)));
  io::write_ten(dir / "tracks" / "coords.ten",
                Tensor<double>({clip.gt_tracks.tracks, cfg.frames, 2}, clip.gt_tracks.coords));
}

SceneClip read_scene(const std::filesystem::path& dir) {
  json doc;
  try {
    doc = json::parse(io::read_file(dir / "scene.json"));
  } catch (const json::exception& e) {
    throw ValidationError("bad scene.json in " + dir.string() + ": " + e.what());
  }
  SceneClip clip;
  try {
    auto& cfg = clip.config;
    cfg.mode = parse_mode(doc.at("mode").get<std::string>());
    cfg.frames = doc.at("frames").get<std::size_t>();
    cfg.height = doc.at("height").get<std::size_t>();
    cfg.width = doc.at("width").get<std::size_t>();
    cfg.track_points = doc.at("track_points").get<std::size_t>();
    cfg.objects = doc.at("objects").size();
    clip.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& j : doc.at("objects")) {
      ObjectRecord o;
      o.shape = j.at("shape").get<std::string>();
      o.color = j.at("color").get<std::string>();
      o.rgb = j.at("rgb").get<std::array<double, 3>>();
      o.motion = parse_motion(j.at("motion").get<std::string>());
      o.motion_params = j.at("motion_params").get<std::vector<double>>();
      o.direction = j.at("direction").get<std::string>();
      o.radius = j.at("radius").get<double>();
      o.centers = j.at("centers").get<std::vector<double>>();
      clip.objects.push_back(std::move(o));
    }
    const auto& ex = doc.at("expression");
    clip.expression.tokens = ex.at("tokens").get<std::vector<std::string>>();
    for (const auto& t : ex.at("tags")) clip.expression.tags.push_back(text::parse_tag(t.get<std::string>()));
    clip.expression.validate();
    clip.target_id = doc.at("target_id").get<std::size_t>();
    clip.gt_tracks.valid = doc.at("tracks_valid").get<std::vector<std::uint8_t>>();
  } catch (const json::exception& e) {
    throw ValidationError("bad scene.json in " + dir.string() + ": " + e.what());
  }
  if (clip.target_id >= clip.objects.size()) throw ValidationError("scene target_id out of range");
  const auto& cfg = clip.config;
  const auto frames = io::read_ten<float>(dir / "frames.ten");
  if (frames.shape() != Shape{cfg.frames, 3, cfg.height, cfg.width}) throw ValidationError("frames.ten shape mismatch");
  clip.frames.assign(frames.data().begin(), frames.data().end());
  const auto masks = io::read_ten<float>(dir / "gt_masks.ten");
  if (masks.shape() != Shape{clip.objects.size(), cfg.frames, cfg.height, cfg.width}) {
    throw ValidationError("gt_masks.ten shape mismatch");
  }
  const std::size_t per = cfg.frames * clip.area();
  for (std::size_t k = 0; k < clip.objects.size(); ++k) {
    std::vector<std::uint8_t> m(per);
    for (std::size_t p = 0; p < per; ++p) m[p] = masks[k * per + p] > 0.5f;
    clip.gt_masks.push_back(std::move(m));
  }
  const auto coords = io::read_ten<double>(dir / "tracks" / "coords.ten");
  if (coords.rank() != 3 || coords.dim(1) != cfg.frames || coords.dim(2) != 2) {
    throw ValidationError("tracks/coords.ten shape mismatch");
  }
  clip.gt_tracks.tracks = coords.dim(0);
  clip.gt_tracks.frames = cfg.frames;
  clip.gt_tracks.coords.assign(coords.data().begin(), coords.data().end());
  if (clip.gt_tracks.valid.size() != clip.gt_tracks.tracks * cfg.frames) {
    throw ValidationError("track validity does not match coords.ten");
  }
  return clip;
}

std::vector<SceneMode> mode_schedule(const std::vector<std::pair<SceneMode, std::size_t>>& weights,
                                     std::size_t count) {
  std::vector<SceneMode> pattern;
  for (const auto& [mode, n] : weights) pattern.insert(pattern.end(), n, mode);
  if (pattern.empty()) throw ValidationError("mode weights must not all be zero");
  std::vector<SceneMode> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = pattern[i % pattern.size()];
  return out;
}

}  // namespace tqf::bench
