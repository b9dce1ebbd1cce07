#pragma once

// Intra-frame relation aggregation and inter-frame motion aggregation over
// decoder object tokens.

#include <array>
#include <vector>

#include "tqf/aggregation/hungarian.hpp"
#include "tqf/decoder/frame_decoder.hpp"

namespace tqf::aggregation {

using decoder::Box;

/// [log(|dx|/w_i + 1), log(|dy|/h_i + 1), IoU] with w_i, h_i clamped to >= 1.
/// Masks are binarized at 0.5.
template <typename T>
std::array<double, 3> rel_pos(const Box& bi, const Box& bj, const T* mask_i, const T* mask_j, std::size_t area);

/// Each scalar becomes 8 (sin, cos) pairs at periods 2, 4, ..., 256.
std::vector<double> sine_cos_encode(const std::array<double, 3>& v);

template <typename T>
struct RelationalFeatures {
  std::size_t n = 0;
  std::vector<double> relpos;  // [n*n x 3]
  Tensor<T> phi;               // [n*n x C]
  Tensor<T> bias;              // [n x n]
  Tensor<T> weights;           // [n x n], zero diagonal
  Tensor<T> r;                 // [n*n x C], row i*n + j is R_{i->j}
};

template <typename T>
struct TokenTimeline {
  std::size_t tokens = 0;
  std::size_t frames = 0;
  Tensor<T> linked;                            // [tokens*frames x C], row i*frames + t
  std::vector<std::vector<std::size_t>> perm;  // perm[t][i] = decoder slot of identity i at frame t
};

struct AggregationOptions {
  std::size_t channels = 32;
  std::size_t window = 3;
  bool scale_logits = true;
};

template <typename T>
struct InterFrameResult {
  Tensor<T> o_hat;     // [N*T x C], identity-major
  Tensor<T> selected;  // CA(Q_Inter, O_hat) before the FFN, [N_E x C]
  Tensor<T> v;         // [N_E x C]
};

/// Chains Hungarian matches frame to frame with cost 1 - cosine between each
/// identity's current token and the next frame's slots. Input rows are
/// frame-major (t*N + slot).
template <typename T>
TokenTimeline<T> link_tokens(const Tensor<T>& o_prime, std::size_t tokens, std::size_t frames);

/// Block mask letting row (i, t) see rows (i, k) with |t - k| <= radius.
ops::Mask temporal_mask(std::size_t tokens, std::size_t frames, std::size_t radius);

template <typename T>
class Aggregator {
 public:
  Aggregator() = default;
  Aggregator(ParamStore<T>& store, const std::string& name, const AggregationOptions& opts);

  /// Without `use_rpe` the relational bias is zero.
  RelationalFeatures<T> relations(const Tensor<T>& o_t, const std::vector<Box>& boxes, const Tensor<T>& masks_t,
                                  std::size_t area, bool use_rpe = true) const;

  /// O' for one frame. N = 1 passes the tokens through unchanged.
  Tensor<T> intra_frame(const Tensor<T>& o_t, const RelationalFeatures<T>& rel, const Tensor<T>& q_intra) const;

  /// Runs relations + intra_frame on every frame; output is frame-major.
  Tensor<T> intra_clip(const decoder::ObjectTokens<T>& tokens, const Tensor<T>& q_intra, bool use_rpe = true,
                       std::vector<RelationalFeatures<T>>* relations_out = nullptr) const;

  /// Per-identity attention over the clipped window; no residual.
  Tensor<T> local_temporal(const TokenTimeline<T>& timeline, Tensor<T>* weights = nullptr) const;

  /// `key_mask` optionally restricts which of the N*T refined tokens the
  /// selector may attend to ([N_E x N*T]).
  InterFrameResult<T> inter_frame(const Tensor<T>& o_tilde, std::size_t tokens, std::size_t frames,
                                  const Tensor<T>& q_inter, const ops::Mask* key_mask = nullptr) const;

  /// Video tokens straight from a timeline, skipping the motion refinement.
  InterFrameResult<T> select_only(const Tensor<T>& o_hat, const Tensor<T>& q_inter) const;

  const AggregationOptions& options() const { return opts_; }

 private:
  AggregationOptions opts_;
  nn::Mlp<T> rel_mlp_;
  nn::Linear<T> rel_bias_;
  nn::CrossAttention<T> intra_attn_;
  nn::Mlp<T> intra_mlp_;
  nn::CrossAttention<T> window_attn_;
  nn::CrossAttention<T> motion_attn_;
  nn::CrossAttention<T> temporal_attn_;
  nn::CrossAttention<T> select_attn_;
  nn::Mlp<T> select_ffn_;
};

}  // namespace tqf::aggregation
