#include "tqf/query/query_former.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace tqf::query {

std::size_t suppression_radius(std::size_t h) { return std::max<std::size_t>(2, h / 8); }

template <typename T>
std::vector<PixelPoint> select_seed_points(const Tensor<T>& frame_feats, LevelDims dims, const Tensor<T>& static_rows,
                                           std::size_t n, std::size_t radius) {
  const std::size_t area = dims.area();
  if (n == 0) throw ValidationError("select_seed_points: n must be at least 1");
  if (n > area) {
    throw ValidationError("select_seed_points: " + std::to_string(n) + " points requested from " +
                          std::to_string(area) + " pixels");
  }
  if (frame_feats.rank() != 2 || frame_feats.dim(0) != area || static_rows.rank() != 2 ||
      static_rows.dim(1) != frame_feats.dim(1)) {
    throw ValidationError("select_seed_points: feature shapes do not agree");
  }
  const std::size_t c = frame_feats.dim(1);
  std::vector<double> score(area, -2.0);
  for (std::size_t p = 0; p < area; ++p) {
    double fn = 0;
    for (std::size_t j = 0; j < c; ++j) fn += static_cast<double>(frame_feats[p * c + j]) * frame_feats[p * c + j];
    fn = std::sqrt(fn);
    for (std::size_t r = 0; r < static_rows.dim(0); ++r) {
      double dot = 0, rn = 0;
      for (std::size_t j = 0; j < c; ++j) {
        dot += static_cast<double>(frame_feats[p * c + j]) * static_rows[r * c + j];
        rn += static_cast<double>(static_rows[r * c + j]) * static_rows[r * c + j];
      }
      rn = std::sqrt(rn);
      const double cosv = (fn > 0 && rn > 0) ? dot / (fn * rn) : 0.0;
      score[p] = std::max(score[p], cosv);
    }
  }
  std::vector<std::size_t> order(area);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  std::vector<PixelPoint> picks;
  std::vector<std::uint8_t> taken(area, 0);
  auto suppressed = [&](std::size_t p) {
    const auto px = static_cast<long>(p % dims.w), py = static_cast<long>(p / dims.w);
    for (const auto& q : picks) {
      const long d = std::max(std::labs(px - static_cast<long>(q.x)), std::labs(py - static_cast<long>(q.y)));
      if (d < static_cast<long>(radius)) return true;
    }
    return false;
  };
  for (std::size_t p : order) {
    if (picks.size() == n) break;
    if (suppressed(p)) continue;
    picks.push_back({p % dims.w, p / dims.w});
    taken[p] = 1;
  }
  for (std::size_t p : order) {
    if (picks.size() == n) break;
    if (taken[p]) continue;
    picks.push_back({p % dims.w, p / dims.w});
    taken[p] = 1;
  }
  return picks;
}

std::vector<std::size_t> child_positions(const std::vector<std::size_t>& coarse_idx, LevelDims coarse, LevelDims fine) {
  std::vector<std::size_t> out;
  for (std::size_t idx : coarse_idx) {
    if (idx >= coarse.area()) throw ValidationError("coarse position out of range");
    const std::size_t y = idx / coarse.w, x = idx % coarse.w;
    for (std::size_t dy = 0; dy < 2; ++dy) {
      for (std::size_t dx = 0; dx < 2; ++dx) {
        const std::size_t fy = 2 * y + dy, fx = 2 * x + dx;
        if (fy < fine.h && fx < fine.w) out.push_back(fy * fine.w + fx);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename T>
TopKResult topk_positions(const Tensor<T>& alignment, const Tensor<T>& level_feats, LevelDims dims, std::size_t k,
                          const std::vector<std::size_t>* prev_idx, LevelDims prev_dims, bool scale_logits) {
  TopKResult out;
  if (prev_idx) {
    out.candidates = child_positions(*prev_idx, prev_dims, dims);
  } else {
    out.candidates.resize(dims.area());
    std::iota(out.candidates.begin(), out.candidates.end(), 0);
  }
  if (out.candidates.empty()) throw ValidationError("topk_positions: empty candidate set");
  const std::size_t c = alignment.dim(1);
  if (level_feats.rank() != 2 || level_feats.dim(0) != dims.area() || level_feats.dim(1) != c) {
    throw ValidationError("topk_positions: level features do not match alignment width");
  }
  const std::size_t m = out.candidates.size();
  const double s = scale_logits ? 1.0 / std::sqrt(static_cast<double>(c)) : 1.0;
  out.relevance.assign(m, 0.0);
  std::vector<double> logits(m);
  for (std::size_t r = 0; r < alignment.dim(0); ++r) {
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0;
      const std::size_t p = out.candidates[j];
      for (std::size_t q = 0; q < c; ++q) dot += static_cast<double>(alignment[r * c + q]) * level_feats[p * c + q];
      logits[j] = dot * s;
      mx = std::max(mx, logits[j]);
    }
    double total = 0;
    for (auto& l : logits) {
      l = std::exp(l - mx);
      total += l;
    }
    for (std::size_t j = 0; j < m; ++j) out.relevance[j] += logits[j] / total;
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.relevance[a] > out.relevance[b]; });
  const std::size_t take = std::min(k, m);
  for (std::size_t i = 0; i < take; ++i) out.indices.push_back(out.candidates[order[i]]);
  return out;
}

template <typename T>
void TrajectorySet<T>::validate(std::size_t height, std::size_t width, std::size_t channels) const {
  if (tracks == 0 || frames == 0) throw ValidationError("trajectory set is empty");
  if (coords.size() != tracks * frames * 2 || valid.size() != tracks * frames) {
    throw ValidationError("trajectory coords/validity have the wrong size");
  }
  if (!embeddings.defined() || embeddings.shape() != Shape{tracks * frames, channels}) {
    throw ValidationError("trajectory embeddings must be [tracks*frames x C]");
  }
  for (std::size_t i = 0; i < tracks * frames; ++i) {
    if (!valid[i]) continue;
    const double x = coords[2 * i], y = coords[2 * i + 1];
    if (x < 0 || y < 0 || x > static_cast<double>(width - 1) || y > static_cast<double>(height - 1)) {
      throw ValidationError("valid trajectory point outside the frame");
    }
  }
}

std::vector<double> trajectory_code(double x, double y, std::size_t h, std::size_t w) {
  std::vector<double> code(32);
  const double top = static_cast<double>(std::max(h, w));
  for (int k = 0; k < 8; ++k) {
    const double period = 2.0 * std::pow(top, static_cast<double>(k) / 7.0);
    const double f = 2.0 * std::numbers::pi / period;
    code[2 * k] = std::sin(f * x);
    code[2 * k + 1] = std::cos(f * x);
    code[16 + 2 * k] = std::sin(f * y);
    code[16 + 2 * k + 1] = std::cos(f * y);
  }
  return code;
}

template <typename T>
QueryFormer<T>::QueryFormer(ParamStore<T>& store, const std::string& name, const QueryFormerOptions& opts)
    : opts_(opts) {
  const std::size_t c = opts.channels;
  const InitSpec query_init{InitSpec::Kind::kUniform, 1.0, 0};
  text_proj_ = nn::Linear<T>(store, name + ".text_proj", opts.text_width, c);
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    const std::string lvl = name + ".app.level" + std::to_string(i + 1);
    level_attn_[i] = nn::CrossAttention<T>(store, lvl + ".attn", c);
    level_mlp_[i] = nn::Mlp<T>(store, lvl + ".mlp", c, c);
  }
  app_init_ = store.create(name + ".app.init", {opts.n_app, c}, query_init);
  app_attn_ = nn::CrossAttention<T>(store, name + ".app.attn", c);
  app_mlp_ = nn::Mlp<T>(store, name + ".app.mlp", c, c);

  intra_init_ = store.create(name + ".intra.init", {opts.n_intra, c}, query_init);
  intra_attn_ = nn::CrossAttention<T>(store, name + ".intra.attn", c);
  intra_mlp_ = nn::Mlp<T>(store, name + ".intra.mlp", 2 * c, c);

  inter_init_ = store.create(name + ".inter.init", {opts.n_inter, c}, query_init);
  inter_attn_ = nn::CrossAttention<T>(store, name + ".inter.attn", c);
  inter_mlp_ = nn::Mlp<T>(store, name + ".inter.mlp", c, c);
  inter_embed_ = store.create(name + ".inter.embed", {opts.n_inter, c}, query_init);
  query_pos_mlp_ = nn::Mlp<T>(store, name + ".inter.query_pos", c, c);
  coord_proj_ = nn::Linear<T>(store, name + ".inter.coord_proj", 32, c);
  traj_pos_mlp_ = nn::Mlp<T>(store, name + ".inter.traj_pos", c, c);
}

template <typename T>
Tensor<T> QueryFormer<T>::appearance(const Tensor<T>& static_rows, const FeaturePyramid<T>& pyramid,
                                     AppearanceTrace* trace) const {
  pyramid.validate();
  if (pyramid.channels != opts_.channels) throw ValidationError("pyramid width differs from the query width");
  nn::AttentionOptions<T> attn;
  attn.scale_logits = opts_.scale_logits;

  std::array<Tensor<T>, kPyramidLevels> feats;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) feats[i] = pyramid.clip_mean(i);

  const std::size_t top = kPyramidLevels - 1;
  Tensor<T> h = ops::add(static_rows, level_mlp_[top](level_attn_[top](static_rows, feats[top], attn)));
  TopKResult sel;
  {
    NoGradGuard guard;
    sel = topk_positions(h, feats[top], pyramid.dims[top], opts_.topk, nullptr, {}, opts_.scale_logits);
  }
  if (trace) {
    trace->attended_keys[top] = pyramid.dims[top].area();
    trace->selected[top] = sel.indices;
  }
  for (std::size_t lvl = top; lvl-- > 0;) {
    const auto keys_idx = child_positions(sel.indices, pyramid.dims[lvl + 1], pyramid.dims[lvl]);
    const auto keys = ops::gather_rows(feats[lvl], keys_idx);
    h = ops::add(h, level_mlp_[lvl](level_attn_[lvl](h, keys, attn)));
    if (trace) trace->attended_keys[lvl] = keys_idx.size();
    if (lvl > 0) {
      NoGradGuard guard;
      sel = topk_positions(h, feats[lvl], pyramid.dims[lvl], opts_.topk, &sel.indices, pyramid.dims[lvl + 1],
                           opts_.scale_logits);
      if (trace) trace->selected[lvl] = sel.indices;
    }
  }
  return ops::add(app_init_, app_mlp_(app_attn_(app_init_, h, attn)));
}

template <typename T>
Tensor<T> QueryFormer<T>::intra(const Tensor<T>& relational_rows, const Tensor<T>& sentence) const {
  nn::AttentionOptions<T> attn;
  attn.scale_logits = opts_.scale_logits;
  auto attended = intra_attn_(intra_init_, relational_rows, attn);
  auto context = ops::repeat_rows(text_proj_(ops::mean_rows(sentence)), opts_.n_intra);
  return ops::add(intra_init_, intra_mlp_(ops::concat_cols(attended, context)));
}

template <typename T>
Tensor<T> QueryFormer<T>::inter(const TrajectorySet<T>& traj, const Tensor<T>& temporal_rows, std::size_t height,
                                std::size_t width, Tensor<T>* pool_weights) const {
  traj.validate(height, width, opts_.channels);
  if (std::none_of(traj.valid.begin(), traj.valid.end(), [](std::uint8_t v) { return v != 0; })) {
    throw ValidationError("every trajectory step is invalid");
  }
  if (opts_.pool_scope == PoolScope::kPerTrack && traj.tracks != opts_.n_inter) {
    throw ValidationError("per-track pooling needs one track per inter-frame query");
  }
  nn::AttentionOptions<T> attn;
  attn.scale_logits = opts_.scale_logits;
  auto semantic = ops::add(inter_init_, inter_mlp_(inter_attn_(inter_init_, temporal_rows, attn)));
  auto query_pos = ops::add(inter_embed_, query_pos_mlp_(semantic));

  const std::size_t tokens = traj.tracks * traj.frames;
  std::vector<T> code(tokens * 32);
  for (std::size_t i = 0; i < tokens; ++i) {
    const auto c = trajectory_code(traj.coords[2 * i], traj.coords[2 * i + 1], height, width);
    std::copy(c.begin(), c.end(), code.begin() + static_cast<std::ptrdiff_t>(i * 32));
  }
  auto traj_pos = ops::add(coord_proj_(Tensor<T>({tokens, 32}, std::move(code))), traj_pos_mlp_(traj.embeddings));

  ops::Mask mask(opts_.n_inter * tokens);
  for (std::size_t q = 0; q < opts_.n_inter; ++q) {
    for (std::size_t i = 0; i < tokens; ++i) {
      const bool same_track = (i / traj.frames) == q;
      mask[q * tokens + i] = traj.valid[i] && (opts_.pool_scope == PoolScope::kGlobal || same_track);
    }
  }
  nn::AttentionOptions<T> pool;
  pool.scale_logits = opts_.scale_logits;
  pool.mask = &mask;
  pool.weights_out = pool_weights;
  return nn::scaled_dot_attention(ops::add(semantic, query_pos), ops::add(traj.embeddings, traj_pos), traj.embeddings,
                                  pool);
}

template std::vector<PixelPoint> select_seed_points(const Tensor<float>&, LevelDims, const Tensor<float>&, std::size_t,
                                                    std::size_t);
template std::vector<PixelPoint> select_seed_points(const Tensor<double>&, LevelDims, const Tensor<double>&,
                                                    std::size_t, std::size_t);
template TopKResult topk_positions(const Tensor<float>&, const Tensor<float>&, LevelDims, std::size_t,
                                   const std::vector<std::size_t>*, LevelDims, bool);
template TopKResult topk_positions(const Tensor<double>&, const Tensor<double>&, LevelDims, std::size_t,
                                   const std::vector<std::size_t>*, LevelDims, bool);
template struct TrajectorySet<float>;
template struct TrajectorySet<double>;
template class QueryFormer<float>;
template class QueryFormer<double>;

}  // namespace tqf::query
