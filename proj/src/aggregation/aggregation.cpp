#include "tqf/aggregation/aggregation.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace tqf::aggregation {

template <typename T>
std::array<double, 3> rel_pos(const Box& bi, const Box& bj, const T* mask_i, const T* mask_j, std::size_t area) {
  const double wi = std::max(1.0, bi.w), hi = std::max(1.0, bi.h);
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < area; ++p) {
    const bool a = mask_i[p] > T(0.5), b = mask_j[p] > T(0.5);
    inter += a && b;
    uni += a || b;
  }
  return {std::log(std::fabs(bi.cx - bj.cx) / wi + 1.0), std::log(std::fabs(bi.cy - bj.cy) / hi + 1.0),
          uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni)};
}

std::vector<double> sine_cos_encode(const std::array<double, 3>& v) {
  std::vector<double> out(48);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < 8; ++k) {
      const double f = 2.0 * std::numbers::pi / std::pow(2.0, static_cast<double>(k + 1));
      out[s * 16 + 2 * k] = std::sin(f * v[s]);
      out[s * 16 + 2 * k + 1] = std::cos(f * v[s]);
    }
  }
  return out;
}

ops::Mask temporal_mask(std::size_t tokens, std::size_t frames, std::size_t radius) {
  const std::size_t m = tokens * frames;
  ops::Mask mask(m * m, 0);
  for (std::size_t i = 0; i < tokens; ++i) {
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < frames; ++k) {
        const std::size_t d = t > k ? t - k : k - t;
        if (d <= radius) mask[(i * frames + t) * m + i * frames + k] = 1;
      }
    }
  }
  return mask;
}

template <typename T>
TokenTimeline<T> link_tokens(const Tensor<T>& o_prime, std::size_t tokens, std::size_t frames) {
  if (frames == 0 || tokens == 0) throw ValidationError("link_tokens: need at least one frame and token");
  if (o_prime.rank() != 2 || o_prime.dim(0) != tokens * frames) {
    throw ValidationError("link_tokens: expected " + std::to_string(tokens * frames) + " token rows");
  }
  const std::size_t c = o_prime.dim(1);
  const auto vals = o_prime.data();
  auto row_cos = [&](std::size_t a, std::size_t b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const double x = vals[a * c + k], y = vals[b * c + k];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    return (na > 0 && nb > 0) ? dot / std::sqrt(na * nb) : 0.0;
  };

  TokenTimeline<T> out;
  out.tokens = tokens;
  out.frames = frames;
  out.perm.assign(frames, std::vector<std::size_t>(tokens));
  for (std::size_t i = 0; i < tokens; ++i) out.perm[0][i] = i;
  std::vector<double> cost(tokens * tokens);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t a = 0; a < tokens; ++a) {
      const std::size_t prev = (t - 1) * tokens + out.perm[t - 1][a];
      for (std::size_t b = 0; b < tokens; ++b) cost[a * tokens + b] = 1.0 - row_cos(prev, t * tokens + b);
    }
    out.perm[t] = hungarian(cost, tokens).row_to_col;
  }
  std::vector<std::size_t> rows(tokens * frames);
  for (std::size_t i = 0; i < tokens; ++i) {
    for (std::size_t t = 0; t < frames; ++t) rows[i * frames + t] = t * tokens + out.perm[t][i];
  }
  out.linked = ops::gather_rows(o_prime, rows);
  return out;
}

template <typename T>
Aggregator<T>::Aggregator(ParamStore<T>& store, const std::string& name, const AggregationOptions& opts)
    : opts_(opts) {
  if (opts.window % 2 == 0) throw ValidationError("temporal window must be odd");
  const std::size_t c = opts.channels;
  rel_mlp_ = nn::Mlp<T>(store, name + ".rel.mlp", 48, c);
  rel_bias_ = nn::Linear<T>(store, name + ".rel.bias", c, 1);
  intra_attn_ = nn::CrossAttention<T>(store, name + ".intra.attn", c);
  intra_mlp_ = nn::Mlp<T>(store, name + ".intra.mlp", c, c);
  window_attn_ = nn::CrossAttention<T>(store, name + ".window", c);
  motion_attn_ = nn::CrossAttention<T>(store, name + ".motion", c);
  temporal_attn_ = nn::CrossAttention<T>(store, name + ".temporal", c);
  select_attn_ = nn::CrossAttention<T>(store, name + ".select.attn", c);
  select_ffn_ = nn::Mlp<T>(store, name + ".select.ffn", c, c);
}

template <typename T>
RelationalFeatures<T> Aggregator<T>::relations(const Tensor<T>& o_t, const std::vector<Box>& boxes,
                                               const Tensor<T>& masks_t, std::size_t area, bool use_rpe) const {
  const std::size_t n = o_t.dim(0), c = opts_.channels;
  if (boxes.size() != n || masks_t.shape() != Shape{n, area}) {
    throw ValidationError("relations: boxes/masks do not match the token count");
  }
  RelationalFeatures<T> rel;
  rel.n = n;
  rel.relpos.resize(n * n * 3);
  const T* m = masks_t.data().data();
  const std::size_t words = (area + 63) / 64;
  std::vector<std::uint64_t> bits(n * words, 0);
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < area; ++p) {
      if (m[i * area + p] > T(0.5)) {
        bits[i * words + p / 64] |= std::uint64_t{1} << (p % 64);
        ++counts[i];
      }
    }
  }
  std::vector<T> enc(n * n * 48);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t inter = 0;
      for (std::size_t k = 0; k < words; ++k) inter += std::popcount(bits[i * words + k] & bits[j * words + k]);
      const std::size_t uni = counts[i] + counts[j] - inter;
      const double wi = std::max(1.0, boxes[i].w), hi = std::max(1.0, boxes[i].h);
      const std::array<double, 3> rp{std::log(std::fabs(boxes[i].cx - boxes[j].cx) / wi + 1.0),
                                     std::log(std::fabs(boxes[i].cy - boxes[j].cy) / hi + 1.0),
                                     uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni)};
      const auto e = sine_cos_encode(rp);
      for (std::size_t k = 0; k < 3; ++k) rel.relpos[(i * n + j) * 3 + k] = rp[k];
      for (std::size_t k = 0; k < 48; ++k) enc[(i * n + j) * 48 + k] = static_cast<T>(e[k]);
    }
  }
  if (use_rpe) {
    rel.phi = ops::relu(rel_mlp_(Tensor<T>({n * n, 48}, std::move(enc))));
    rel.bias = ops::reshape(rel_bias_(rel.phi), {n, n});
  } else {
    rel.bias = Tensor<T>({n, n}, T(0));
  }
  auto logits = ops::matmul_nt(o_t, o_t);
  if (opts_.scale_logits) logits = ops::scale(logits, static_cast<T>(1.0 / std::sqrt(static_cast<double>(c))));
  ops::Mask off_diag(n * n, 1);
  for (std::size_t i = 0; i < n; ++i) off_diag[i * n + i] = 0;
  rel.weights = ops::softmax_rows(ops::add(logits, rel.bias), &off_diag);

  std::vector<std::size_t> target(n * n);
  for (std::size_t i = 0; i < n * n; ++i) target[i] = i % n;
  const auto spread = ops::matmul(ops::reshape(rel.weights, {n * n, 1}), Tensor<T>({1, c}, T(1)));
  rel.r = ops::mul(spread, ops::gather_rows(o_t, target));
  return rel;
}

template <typename T>
Tensor<T> Aggregator<T>::intra_frame(const Tensor<T>& o_t, const RelationalFeatures<T>& rel,
                                     const Tensor<T>& q_intra) const {
  const std::size_t n = o_t.dim(0);
  if (n < 2) return o_t;
  const std::size_t nq = q_intra.dim(0);
  std::vector<std::size_t> qrows(n * nq);
  for (std::size_t k = 0; k < n * nq; ++k) qrows[k] = k % nq;
  ops::Mask mask(n * nq * n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < nq; ++q) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) mask[(i * nq + q) * n * n + i * n + j] = 1;
      }
    }
  }
  nn::AttentionOptions<T> attn;
  attn.scale_logits = opts_.scale_logits;
  attn.mask = &mask;
  auto fused = intra_mlp_(intra_attn_(ops::gather_rows(q_intra, qrows), rel.r, attn));
  std::vector<T> avg(n * n * nq, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < nq; ++q) avg[i * n * nq + i * nq + q] = static_cast<T>(1.0 / static_cast<double>(nq));
  }
  return ops::add(o_t, ops::matmul(Tensor<T>({n, n * nq}, std::move(avg)), fused));
}

template <typename T>
Tensor<T> Aggregator<T>::intra_clip(const decoder::ObjectTokens<T>& tokens, const Tensor<T>& q_intra, bool use_rpe,
                                    std::vector<RelationalFeatures<T>>* relations_out) const {
  const std::size_t n = tokens.tokens, area = tokens.height * tokens.width;
  Tensor<T> masks;
  {
    NoGradGuard guard;
    masks = tokens.coarse_masks();
  }
  std::vector<Tensor<T>> frames;
  for (std::size_t t = 0; t < tokens.frames; ++t) {
    const auto o_t = tokens.frame_tokens(t);
    std::vector<T> m(masks.data().begin() + static_cast<std::ptrdiff_t>(t * n * area),
                     masks.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * n * area));
    std::vector<Box> boxes(tokens.boxes.begin() + static_cast<std::ptrdiff_t>(t * n),
                           tokens.boxes.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
    auto rel = relations(o_t, boxes, Tensor<T>({n, area}, std::move(m)), area, use_rpe);
    frames.push_back(intra_frame(o_t, rel, q_intra));
    if (relations_out) relations_out->push_back(std::move(rel));
  }
  return ops::concat_rows(frames);
}

template <typename T>
Tensor<T> Aggregator<T>::local_temporal(const TokenTimeline<T>& timeline, Tensor<T>* weights) const {
  const auto mask = temporal_mask(timeline.tokens, timeline.frames, opts_.window / 2);
  nn::AttentionOptions<T> attn;
  attn.scale_logits = opts_.scale_logits;
  attn.mask = &mask;
  attn.weights_out = weights;
  return window_attn_(timeline.linked, timeline.linked, attn);
}

template <typename T>
InterFrameResult<T> Aggregator<T>::inter_frame(const Tensor<T>& o_tilde, std::size_t tokens, std::size_t frames,
                                               const Tensor<T>& q_inter, const ops::Mask* key_mask) const {
  if (o_tilde.rank() != 2 || o_tilde.dim(0) != tokens * frames || q_inter.rank() != 2 ||
      q_inter.dim(1) != o_tilde.dim(1)) {
    throw ValidationError("inter_frame: token and query shapes do not agree");
  }
  nn::AttentionOptions<T> attn;
  attn.scale_logits = opts_.scale_logits;
  auto x = ops::add(o_tilde, motion_attn_(o_tilde, q_inter, attn));
  const auto full = temporal_mask(tokens, frames, frames);
  auto tattn = attn;
  tattn.mask = &full;
  InterFrameResult<T> out;
  out.o_hat = ops::add(x, temporal_attn_(x, x, tattn));
  auto sattn = attn;
  sattn.mask = key_mask;
  out.selected = select_attn_(q_inter, out.o_hat, sattn);
  out.v = select_ffn_(out.selected);
  return out;
}

template <typename T>
InterFrameResult<T> Aggregator<T>::select_only(const Tensor<T>& o_hat, const Tensor<T>& q_inter) const {
  nn::AttentionOptions<T> attn;
  attn.scale_logits = opts_.scale_logits;
  InterFrameResult<T> out;
  out.o_hat = o_hat;
  out.selected = select_attn_(q_inter, o_hat, attn);
  out.v = select_ffn_(out.selected);
  return out;
}

template std::array<double, 3> rel_pos(const Box&, const Box&, const float*, const float*, std::size_t);
template std::array<double, 3> rel_pos(const Box&, const Box&, const double*, const double*, std::size_t);
template TokenTimeline<float> link_tokens(const Tensor<float>&, std::size_t, std::size_t);
template TokenTimeline<double> link_tokens(const Tensor<double>&, std::size_t, std::size_t);
template class Aggregator<float>;
template class Aggregator<double>;

}  // namespace tqf::aggregation
