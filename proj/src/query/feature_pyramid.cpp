#include "tqf/query/feature_pyramid.hpp"

#include <cmath>
#include <numbers>

namespace tqf::query {

template <typename T>
Tensor<T> FeaturePyramid<T>::frame(std::size_t level, std::size_t t) const {
  const std::size_t area = dims.at(level).area();
  if (t >= frames) throw ValidationError("frame index out of range");
  std::vector<std::size_t> rows(area);
  for (std::size_t i = 0; i < area; ++i) rows[i] = t * area + i;
  return ops::gather_rows(levels[level], rows);
}

template <typename T>
Tensor<T> FeaturePyramid<T>::clip_mean(std::size_t level) const {
  const std::size_t area = dims.at(level).area();
  auto stacked = ops::reshape(levels[level], {frames, area * channels});
  return ops::reshape(ops::mean_rows(stacked), {area, channels});
}

template <typename T>
void FeaturePyramid<T>::validate() const {
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    if (!levels[i].defined() || levels[i].shape() != Shape{frames * dims[i].area(), channels}) {
      throw ValidationError("feature level " + std::to_string(i + 1) + " has the wrong shape");
    }
    if (i > 0 && (dims[i].h != (dims[i - 1].h + 1) / 2 || dims[i].w != (dims[i - 1].w + 1) / 2)) {
      throw ValidationError("feature level " + std::to_string(i + 1) + " is not half the previous level");
    }
  }
}

std::array<double, 16> pixel_position_code(std::size_t x, std::size_t y, std::size_t h, std::size_t w) {
  std::array<double, 16> code{};
  const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
  const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
  for (int k = 0; k < 4; ++k) {
    const double f = 2.0 * std::numbers::pi * static_cast<double>(1 << k);
    code[2 * k] = std::sin(f * u);
    code[2 * k + 1] = std::cos(f * u);
    code[8 + 2 * k] = std::sin(f * v);
    code[8 + 2 * k + 1] = std::cos(f * v);
  }
  return code;
}

template <typename T>
PyramidEncoder<T>::PyramidEncoder(ParamStore<T>& store, const std::string& name, std::size_t channels)
    : channels_(channels), stem_(store, name + ".stem", 3 + 16, channels, channels) {
  for (std::size_t i = 0; i + 1 < kPyramidLevels; ++i) {
    lifts_[i] = nn::Linear<T>(store, name + ".lift" + std::to_string(i + 2), channels, channels);
  }
}

template <typename T>
FeaturePyramid<T> PyramidEncoder<T>::encode(const Tensor<T>& frames) const {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw ValidationError("frames must be [T x 3 x H x W], got " + shape_str(frames.shape()));
  }
  const std::size_t t_count = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  const std::size_t plane = h * w;
  std::vector<T> input(t_count * plane * 19);
  for (std::size_t t = 0; t < t_count; ++t) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        T* row = input.data() + (t * plane + p) * 19;
        for (std::size_t c = 0; c < 3; ++c) row[c] = frames[(t * 3 + c) * plane + p];
        const auto code = pixel_position_code(x, y, h, w);
        for (std::size_t k = 0; k < 16; ++k) row[3 + k] = static_cast<T>(code[k]);
      }
    }
  }
  FeaturePyramid<T> out;
  out.frames = t_count;
  out.channels = channels_;
  out.dims[0] = {h, w};
  out.levels[0] = stem_(Tensor<T>({t_count * plane, 19}, std::move(input)));
  for (std::size_t i = 1; i < kPyramidLevels; ++i) {
    const LevelDims prev = out.dims[i - 1];
    out.dims[i] = {(prev.h + 1) / 2, (prev.w + 1) / 2};
    auto pooled = ops::avg_pool2x2(out.levels[i - 1], t_count, prev.h, prev.w);
    out.levels[i] = ops::add(pooled, ops::gelu(lifts_[i - 1](pooled)));
  }
  return out;
}

template struct FeaturePyramid<float>;
template struct FeaturePyramid<double>;
template class PyramidEncoder<float>;
template class PyramidEncoder<double>;

}  // namespace tqf::query
