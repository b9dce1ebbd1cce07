#pragma once

#include <vector>

#include "tqf/core/nn.hpp"

namespace tqf::decoder {

struct Box {
  double cx = 0;
  double cy = 0;
  double w = 0;
  double h = 0;
  bool degenerate = true;
};

/// Binarizes at 0.5. Centroid is the mean (x, y) of the set pixels; w and h
/// are the tight extents. An empty region gives (0, 0, 0, 0) and the flag.
template <typename T>
Box box_from_mask(const T* mask, std::size_t h, std::size_t w);

/// Per-clip decoder output. Token rows are frame-major: row t*N + i is query
/// slot i at frame t. Mask logits share that row order with one column per
/// pixel; pixel embeddings are [frames*H*W x C1].
template <typename T>
struct ObjectTokens {
  std::size_t tokens = 0;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor<T> o;
  Tensor<T> mask_logits;
  Tensor<T> pixel_embed;
  std::vector<Box> boxes;

  Tensor<T> coarse_masks() const { return ops::sigmoid(mask_logits); }
  Tensor<T> frame_tokens(std::size_t t) const;
  Tensor<T> frame_pixel_embed(std::size_t t) const;
};

struct FrameDecoderOptions {
  std::size_t channels = 32;
  std::size_t embed_channels = 16;  // C1
  std::size_t rounds = 3;
  bool scale_logits = true;
};

template <typename T>
class FrameDecoder {
 public:
  FrameDecoder() = default;
  FrameDecoder(ParamStore<T>& store, const std::string& name, const FrameDecoderOptions& opts);

  struct FrameResult {
    Tensor<T> tokens;       // [N x C]
    Tensor<T> mask_logits;  // [N x H*W]
    Tensor<T> pixel_embed;  // [H*W x C1]
  };

  /// memory: the frame's decoder-resolution features [m x C];
  /// pixels: full-resolution features [H*W x C].
  FrameResult decode_frame(const Tensor<T>& q_app, const Tensor<T>& memory, const Tensor<T>& pixels) const;

  /// Runs decode_frame on every frame and stacks the results.
  ObjectTokens<T> decode_clip(const Tensor<T>& q_app, const Tensor<T>& memory, std::size_t memory_area,
                              const Tensor<T>& pixels, std::size_t height, std::size_t width,
                              std::size_t frames) const;

 private:
  struct Round {
    nn::CrossAttention<T> cross;
    nn::CrossAttention<T> self;
    nn::Mlp<T> mlp;
  };
  FrameDecoderOptions opts_;
  std::vector<Round> rounds_;
  nn::Linear<T> pixel_proj_;
  nn::Linear<T> token_proj_;
};

}  // namespace tqf::decoder
