#include "tqf/decoder/frame_decoder.hpp"

#include <algorithm>
#include <limits>

namespace tqf::decoder {

template <typename T>
Box box_from_mask(const T* mask, std::size_t h, std::size_t w) {
  Box box;
  double sx = 0, sy = 0;
  std::size_t count = 0;
  std::size_t x0 = std::numeric_limits<std::size_t>::max(), y0 = x0, x1 = 0, y1 = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!(mask[y * w + x] > T(0.5))) continue;
      sx += static_cast<double>(x);
      sy += static_cast<double>(y);
      ++count;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (count == 0) return box;
  box.cx = sx / static_cast<double>(count);
  box.cy = sy / static_cast<double>(count);
  box.w = static_cast<double>(x1 - x0 + 1);
  box.h = static_cast<double>(y1 - y0 + 1);
  box.degenerate = false;
  return box;
}

template <typename T>
Tensor<T> ObjectTokens<T>::frame_tokens(std::size_t t) const {
  std::vector<std::size_t> rows(tokens);
  for (std::size_t i = 0; i < tokens; ++i) rows[i] = t * tokens + i;
  return ops::gather_rows(o, rows);
}

template <typename T>
Tensor<T> ObjectTokens<T>::frame_pixel_embed(std::size_t t) const {
  const std::size_t area = height * width;
  std::vector<std::size_t> rows(area);
  for (std::size_t p = 0; p < area; ++p) rows[p] = t * area + p;
  return ops::gather_rows(pixel_embed, rows);
}

template <typename T>
FrameDecoder<T>::FrameDecoder(ParamStore<T>& store, const std::string& name, const FrameDecoderOptions& opts)
    : opts_(opts) {
  const std::size_t c = opts.channels;
  for (std::size_t r = 0; r < opts.rounds; ++r) {
    const std::string p = name + ".round" + std::to_string(r);
    rounds_.push_back({nn::CrossAttention<T>(store, p + ".cross", c), nn::CrossAttention<T>(store, p + ".self", c),
                       nn::Mlp<T>(store, p + ".mlp", c, c)});
  }
  pixel_proj_ = nn::Linear<T>(store, name + ".pixel_proj", c, opts.embed_channels);
  token_proj_ = nn::Linear<T>(store, name + ".token_proj", c, opts.embed_channels);
}

template <typename T>
typename FrameDecoder<T>::FrameResult FrameDecoder<T>::decode_frame(const Tensor<T>& q_app, const Tensor<T>& memory,
                                                                    const Tensor<T>& pixels) const {
  if (q_app.rank() != 2 || memory.rank() != 2 || pixels.rank() != 2 || q_app.dim(1) != opts_.channels ||
      memory.dim(1) != opts_.channels || pixels.dim(1) != opts_.channels) {
    throw ValidationError("decode_frame: inputs must be matrices of width " + std::to_string(opts_.channels));
  }
  nn::AttentionOptions<T> attn;
  attn.scale_logits = opts_.scale_logits;
  Tensor<T> x = q_app;
  for (const auto& round : rounds_) {
    x = ops::add(x, round.cross(x, memory, attn));
    x = ops::add(x, round.self(x, x, attn));
    x = ops::add(x, round.mlp(x));
  }
  FrameResult out;
  out.tokens = x;
  out.pixel_embed = pixel_proj_(pixels);
  out.mask_logits = ops::matmul_nt(token_proj_(x), out.pixel_embed);
  return out;
}

template <typename T>
ObjectTokens<T> FrameDecoder<T>::decode_clip(const Tensor<T>& q_app, const Tensor<T>& memory,
                                             std::size_t memory_area, const Tensor<T>& pixels, std::size_t height,
                                             std::size_t width, std::size_t frames) const {
  const std::size_t area = height * width;
  if (memory.rank() != 2 || memory.dim(0) != frames * memory_area || pixels.rank() != 2 ||
      pixels.dim(0) != frames * area) {
    throw ValidationError("decode_clip: feature rows do not match the frame count");
  }
  ObjectTokens<T> out;
  out.tokens = q_app.dim(0);
  out.frames = frames;
  out.height = height;
  out.width = width;
  std::vector<Tensor<T>> toks, logits, embeds;
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<std::size_t> mem_rows(memory_area), pix_rows(area);
    for (std::size_t i = 0; i < memory_area; ++i) mem_rows[i] = t * memory_area + i;
    for (std::size_t i = 0; i < area; ++i) pix_rows[i] = t * area + i;
    auto r = decode_frame(q_app, ops::gather_rows(memory, mem_rows), ops::gather_rows(pixels, pix_rows));
    toks.push_back(r.tokens);
    logits.push_back(r.mask_logits);
    embeds.push_back(r.pixel_embed);
  }
  out.o = ops::concat_rows(toks);
  out.mask_logits = ops::concat_rows(logits);
  out.pixel_embed = ops::concat_rows(embeds);
  const auto masks = out.coarse_masks();
  out.boxes.reserve(frames * out.tokens);
  for (std::size_t r = 0; r < frames * out.tokens; ++r) {
    out.boxes.push_back(box_from_mask(masks.data().data() + r * area, height, width));
  }
  return out;
}

template Box box_from_mask(const float*, std::size_t, std::size_t);
template Box box_from_mask(const double*, std::size_t, std::size_t);
template struct ObjectTokens<float>;
template struct ObjectTokens<double>;
template class FrameDecoder<float>;
template class FrameDecoder<double>;

}  // namespace tqf::decoder
