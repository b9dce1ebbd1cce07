#include "tqf/head/head_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tqf/aggregation/hungarian.hpp"

namespace tqf::head {
namespace {

template <typename T>
double soft_dice(const T* logits, const T* target, std::size_t n) {
  double inter = 0, ps = 0, gs = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[k])));
    inter += p * target[k];
    ps += p;
    gs += target[k];
  }
  return 1.0 - (2.0 * inter + 1e-6) / (ps + gs + 1e-6);
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> Prediction<T>::top_mask() const {
  const std::size_t n = frames * area;
  std::vector<std::uint8_t> out(n);
  const T* row = mask_logits.data().data() + ranking.at(0) * n;
  for (std::size_t k = 0; k < n; ++k) out[k] = row[k] > T(0);
  return out;
}

template <typename T>
std::vector<std::size_t> rank_tokens(const Tensor<T>& class_logits) {
  const std::size_t n = class_logits.dim(0);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(class_logits[i * 2 + 1]) - class_logits[i * 2];
    p[i] = 1.0 / (1.0 + std::exp(d));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  return order;
}

template <typename T>
PredictionHead<T>::PredictionHead(ParamStore<T>& store, const std::string& name, std::size_t channels,
                                  std::size_t embed_channels)
    : class_proj_(store, name + ".class", channels, 2), coeff_proj_(store, name + ".coeff", channels, embed_channels) {}

template <typename T>
Prediction<T> PredictionHead<T>::operator()(const Tensor<T>& v, const Tensor<T>& pixel_embed, std::size_t frames,
                                            std::size_t area) const {
  if (pixel_embed.rank() != 2 || pixel_embed.dim(0) != frames * area) {
    throw ValidationError("prediction head: pixel embeddings must be [frames*area x C1]");
  }
  Prediction<T> out;
  out.frames = frames;
  out.area = area;
  out.class_logits = class_proj_(v);
  out.mask_coeffs = coeff_proj_(v);
  out.mask_logits = ops::matmul_nt(out.mask_coeffs, pixel_embed);
  out.ranking = rank_tokens(out.class_logits);
  return out;
}

template <typename T>
Tensor<T> consistency_loss(const Tensor<T>& o_hat, std::size_t tokens, std::size_t frames, bool literal) {
  if (o_hat.rank() != 2 || o_hat.dim(0) != tokens * frames) {
    throw ValidationError("consistency_loss: expected " + std::to_string(tokens * frames) + " rows");
  }
  if (frames < 2) return Tensor<T>::scalar(T(0));
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < tokens; ++i) {
    for (std::size_t t = 0; t + 1 < frames; ++t) {
      a.push_back(i * frames + t);
      b.push_back(i * frames + t + 1);
    }
  }
  auto cos = ops::cosine_rows(ops::gather_rows(o_hat, a), ops::gather_rows(o_hat, b));
  auto gap = ops::sum(ops::add_scalar(ops::scale(cos, T(-1)), T(1)));
  const double denom = static_cast<double>(tokens) * static_cast<double>(literal ? frames : frames - 1);
  return ops::scale(gap, static_cast<T>(1.0 / denom));
}

template <typename T>
std::vector<std::size_t> match_slots(const Tensor<T>& mask_logits, std::size_t slots, std::size_t frames,
                                     std::size_t area, const std::vector<std::vector<T>>& gt_masks) {
  const std::size_t g = gt_masks.size();
  if (g > slots) throw ValidationError("more ground-truth objects than decoder slots");
  const T* logits = mask_logits.data().data();
  std::vector<double> cost(slots * slots, 0.0);
  std::vector<T> clip(frames * area);
  for (std::size_t s = 0; s < slots; ++s) {
    for (std::size_t t = 0; t < frames; ++t) {
      std::copy_n(logits + (t * slots + s) * area, area, clip.begin() + static_cast<std::ptrdiff_t>(t * area));
    }
    for (std::size_t k = 0; k < g; ++k) {
      if (gt_masks[k].size() != frames * area) throw ValidationError("ground-truth mask has the wrong size");
      cost[s * slots + k] = soft_dice(clip.data(), gt_masks[k].data(), frames * area);
    }
  }
  const auto assign = aggregation::hungarian(cost, slots);
  std::vector<std::size_t> slot_of(g);
  for (std::size_t s = 0; s < slots; ++s) {
    if (assign.row_to_col[s] < g) slot_of[assign.row_to_col[s]] = s;
  }
  return slot_of;
}

template <typename T>
Tensor<T> frame_loss(const Tensor<T>& mask_logits, std::size_t slots, std::size_t frames, std::size_t area,
                     const std::vector<std::vector<T>>& gt_masks, const std::vector<std::size_t>& assignment) {
  if (mask_logits.rank() != 2 || mask_logits.dim(0) != slots * frames || mask_logits.dim(1) != area) {
    throw ValidationError("frame_loss: mask logits must be [frames*slots x area]");
  }
  if (assignment.size() != gt_masks.size() || gt_masks.empty()) {
    throw ValidationError("frame_loss: one slot per ground-truth object is required");
  }
  Tensor<T> total;
  for (std::size_t k = 0; k < gt_masks.size(); ++k) {
    std::vector<std::size_t> rows(frames);
    for (std::size_t t = 0; t < frames; ++t) rows[t] = t * slots + assignment[k];
    auto pred = ops::gather_rows(mask_logits, rows);
    auto term = ops::add(ops::dice_loss(pred, gt_masks[k]), ops::bce_with_logits(pred, gt_masks[k]));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return ops::scale(total, static_cast<T>(1.0 / static_cast<double>(gt_masks.size())));
}

template <typename T>
Tensor<T> video_loss(const Prediction<T>& pred, const std::vector<T>& target, std::size_t* matched) {
  const std::size_t n = pred.mask_logits.dim(0), cols = pred.mask_logits.dim(1);
  if (target.size() != cols) throw ValidationError("video_loss: target size differs from the mask size");
  const T* logits = pred.mask_logits.data().data();
  std::size_t best = 0;
  double best_cost = 0;
  for (std::size_t e = 0; e < n; ++e) {
    const double c = soft_dice(logits + e * cols, target.data(), cols);
    if (e == 0 || c < best_cost) {
      best = e;
      best_cost = c;
    }
  }
  if (matched) *matched = best;
  auto row = ops::gather_rows(pred.mask_logits, {best});
  std::vector<std::size_t> labels(n, 1);
  labels[best] = 0;
  return ops::add(ops::add(ops::dice_loss(row, target), ops::bce_with_logits(row, target)),
                  ops::cross_entropy(pred.class_logits, labels));
}

template <typename T>
LossBundle<T> combine(const Tensor<T>& l_f, const Tensor<T>& l_v, const Tensor<T>& l_con, const LossWeights& w) {
  LossBundle<T> out{l_f, l_v, l_con, {}};
  out.l_total = ops::add(ops::add(ops::scale(l_v, static_cast<T>(w.video)), ops::scale(l_f, static_cast<T>(w.frame))),
                         ops::scale(l_con, static_cast<T>(w.consistency)));
  return out;
}

#define TQF_INSTANTIATE_HEAD(T)                                                                                \
  template struct Prediction<T>;                                                                               \
  template std::vector<std::size_t> rank_tokens(const Tensor<T>&);                                             \
  template class PredictionHead<T>;                                                                            \
  template Tensor<T> consistency_loss(const Tensor<T>&, std::size_t, std::size_t, bool);                       \
  template std::vector<std::size_t> match_slots(const Tensor<T>&, std::size_t, std::size_t, std::size_t,       \
                                                const std::vector<std::vector<T>>&);                           \
  template Tensor<T> frame_loss(const Tensor<T>&, std::size_t, std::size_t, std::size_t,                       \
                                const std::vector<std::vector<T>>&, const std::vector<std::size_t>&);          \
  template Tensor<T> video_loss(const Prediction<T>&, const std::vector<T>&, std::size_t*);                    \
  template LossBundle<T> combine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossWeights&);

TQF_INSTANTIATE_HEAD(float)
TQF_INSTANTIATE_HEAD(double)

}  // namespace tqf::head
