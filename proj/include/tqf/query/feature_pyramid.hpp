#pragma once

#include <array>

#include "tqf/core/nn.hpp"

namespace tqf::query {

inline constexpr std::size_t kPyramidLevels = 4;

struct LevelDims {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t area() const { return h * w; }
};

/// Four feature levels for a clip. Each level is stored channels-last as a
/// [frames*h*w x C] matrix (frame-major, then row-major pixels) so that
/// per-pixel projections are single matrix products. Level i+1 has
/// ceil(h_i/2) x ceil(w_i/2) positions.
template <typename T>
struct FeaturePyramid {
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::array<Tensor<T>, kPyramidLevels> levels;
  std::array<LevelDims, kPyramidLevels> dims;

  // Rows of one frame at `level` (0-based), [h*w x C].
  Tensor<T> frame(std::size_t level, std::size_t t) const;
  // Mean over frames, [h*w x C].
  Tensor<T> clip_mean(std::size_t level) const;
  void validate() const;
};

/// Per-pixel periodic encoding of (x, y) normalized to the frame size:
/// sin/cos at 1, 2, 4, 8 cycles per frame for each axis (16 values).
std::array<double, 16> pixel_position_code(std::size_t x, std::size_t y, std::size_t h, std::size_t w);

/// Stand-in visual backbone: a per-pixel MLP over RGB and the position code
/// gives level 1 at full resolution; each coarser level is a 2x2 average pool
/// of the previous one plus a residual GELU projection.
template <typename T>
class PyramidEncoder {
 public:
  PyramidEncoder() = default;
  PyramidEncoder(ParamStore<T>& store, const std::string& name, std::size_t channels);

  // frames: [T x 3 x H x W], values in [0,1].
  FeaturePyramid<T> encode(const Tensor<T>& frames) const;

 private:
  std::size_t channels_ = 0;
  nn::Mlp<T> stem_;
  std::array<nn::Linear<T>, kPyramidLevels - 1> lifts_;
};

}  // namespace tqf::query
