#pragma once

#include <vector>

#include "tqf/core/nn.hpp"

namespace tqf::head {

/// Class column 0 is "referred", column 1 is "not referred".
template <typename T>
struct Prediction {
  std::size_t frames = 0;
  std::size_t area = 0;
  Tensor<T> class_logits;  // [N_E x 2]
  Tensor<T> mask_coeffs;   // [N_E x C1]
  Tensor<T> mask_logits;   // [N_E x frames*area], frame-major columns
  std::vector<std::size_t> ranking;

  Tensor<T> video_masks() const { return ops::sigmoid(mask_logits); }
  /// Binary T*area mask of the top-ranked token.
  std::vector<std::uint8_t> top_mask() const;
};

/// Indices sorted by descending referred-class probability, ties to the
/// smaller index.
template <typename T>
std::vector<std::size_t> rank_tokens(const Tensor<T>& class_logits);

template <typename T>
class PredictionHead {
 public:
  PredictionHead() = default;
  PredictionHead(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t embed_channels);

  /// pixel_embed: [frames*area x C1].
  Prediction<T> operator()(const Tensor<T>& v, const Tensor<T>& pixel_embed, std::size_t frames,
                           std::size_t area) const;

 private:
  nn::Linear<T> class_proj_;
  nn::Linear<T> coeff_proj_;
};

struct LossWeights {
  double video = 1.0;
  double frame = 1.0;
  double consistency = 0.5;
};

template <typename T>
struct LossBundle {
  Tensor<T> l_f;
  Tensor<T> l_v;
  Tensor<T> l_con;
  Tensor<T> l_total;
};

/// Mean of (1 - cos) between consecutive steps of each identity, rows
/// identity-major (i*frames + t). The literal variant divides by T instead of
/// T - 1. A single frame gives 0.
template <typename T>
Tensor<T> consistency_loss(const Tensor<T>& o_hat, std::size_t tokens, std::size_t frames, bool literal = false);

/// Slot-to-object matching for the frame loss: Hungarian on mean Dice cost
/// over the clip, padded square with zero-cost dummies. Returns, for each
/// ground-truth object, its slot.
template <typename T>
std::vector<std::size_t> match_slots(const Tensor<T>& mask_logits, std::size_t slots, std::size_t frames,
                                     std::size_t area, const std::vector<std::vector<T>>& gt_masks);

/// mask_logits rows are frame-major (t*slots + i); gt_masks[g] holds
/// frames*area values. Mean over matched pairs of (Dice + BCE) over the clip.
template <typename T>
Tensor<T> frame_loss(const Tensor<T>& mask_logits, std::size_t slots, std::size_t frames, std::size_t area,
                     const std::vector<std::vector<T>>& gt_masks, const std::vector<std::size_t>& assignment);

/// The token with the lowest clip Dice against the target gets Dice + BCE,
/// plus class cross-entropy with that token labelled referred.
template <typename T>
Tensor<T> video_loss(const Prediction<T>& pred, const std::vector<T>& target, std::size_t* matched = nullptr);

template <typename T>
LossBundle<T> combine(const Tensor<T>& l_f, const Tensor<T>& l_v, const Tensor<T>& l_con, const LossWeights& w);

}  // namespace tqf::head
