#include "tqf/model/model.hpp"

#include <cmath>

namespace tqf::model {

template <typename T>
Tensor<T> frames_tensor(const bench::SceneClip& clip) {
  const auto& c = clip.config;
  return Tensor<T>({c.frames, 3, c.height, c.width}, std::vector<T>(clip.frames.begin(), clip.frames.end()));
}

template <typename T>
query::TrajectorySet<T> track_seeds(const bench::SceneClip& clip, const std::vector<query::PixelPoint>& seeds,
                                    const Tensor<T>& level1, std::size_t channels) {
  const std::size_t frames = clip.config.frames, h = clip.config.height, w = clip.config.width, area = h * w;
  query::TrajectorySet<T> out;
  out.tracks = seeds.size();
  out.frames = frames;
  out.coords.resize(out.tracks * frames * 2);
  out.valid.resize(out.tracks * frames);
  std::vector<std::size_t> rows(out.tracks * frames);
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const int owner = clip.object_at(0, seeds[k].x, seeds[k].y);
    for (std::size_t t = 0; t < frames; ++t) {
      std::array<double, 2> d{0, 0};
      if (owner >= 0) d = bench::displacement(clip.objects[static_cast<std::size_t>(owner)], t);
      const double x = static_cast<double>(seeds[k].x) + d[0], y = static_cast<double>(seeds[k].y) + d[1];
      const long rx = std::lround(x), ry = std::lround(y);
      const bool inside = rx >= 0 && ry >= 0 && rx < static_cast<long>(w) && ry < static_cast<long>(h);
      const std::size_t px = static_cast<std::size_t>(std::clamp<long>(rx, 0, static_cast<long>(w) - 1));
      const std::size_t py = static_cast<std::size_t>(std::clamp<long>(ry, 0, static_cast<long>(h) - 1));
      const std::size_t i = k * frames + t;
      out.valid[i] = inside && clip.object_at(t, px, py) == owner;
      out.coords[2 * i] = std::clamp(x, 0.0, static_cast<double>(w - 1));
      out.coords[2 * i + 1] = std::clamp(y, 0.0, static_cast<double>(h - 1));
      rows[i] = t * area + py * w + px;
    }
  }
  if (level1.dim(1) != channels) throw ValidationError("track_seeds: feature width mismatch");
  out.embeddings = ops::gather_rows(level1, rows);
  return out;
}

template <typename T>
Model<T>::Model(const RunConfig& config) : config_(config), store_(config.seed) {
  config.validate();
  const std::size_t c = config.channels;
  text_ = text::TextEncoder<T>(store_, "text", config.text_width);
  pyramid_ = query::PyramidEncoder<T>(store_, "pyramid", c);
  query::QueryFormerOptions qo;
  qo.channels = c;
  qo.text_width = config.text_width;
  qo.n_app = config.n_app;
  qo.n_intra = config.n_intra;
  qo.n_inter = config.n_inter;
  qo.topk = config.topk;
  qo.scale_logits = config.scale_logits;
  qo.pool_scope = config.pool_scope;
  queries_ = query::QueryFormer<T>(store_, "query", qo);
  decoder::FrameDecoderOptions dopts{c, config.embed_channels, config.decoder_rounds, config.scale_logits};
  decoder_ = decoder::FrameDecoder<T>(store_, "decoder", dopts);
  aggregation::AggregationOptions aopts{c, config.window, config.scale_logits};
  aggregator_ = aggregation::Aggregator<T>(store_, "aggregation", aopts);
  head_ = head::PredictionHead<T>(store_, "head", c, config.embed_channels);
}

template <typename T>
void Model<T>::register_tokens(const std::vector<bench::SceneClip>& clips) {
  for (const auto& clip : clips) {
    for (const auto& tok : clip.expression.tokens) vocab_.slot(tok);
  }
}

template <typename T>
ForwardResult<T> Model<T>::forward(const bench::SceneClip& clip, const Ablations& ablations) {
  const auto& sc = clip.config;
  const std::size_t area = sc.height * sc.width;
  ForwardResult<T> r;
  r.phrases = text::decompose(clip.expression);
  r.text = text_.embed(clip.expression, r.phrases, vocab_);
  r.pyramid = pyramid_.encode(frames_tensor<T>(clip));

  const auto s_rows = queries_.project_text(r.text.f_s);
  r.q_app = queries_.appearance(s_rows, r.pyramid, &r.trace);
  r.q_intra = queries_.intra(queries_.project_text(r.text.f_r), r.text.f_l);

  {
    NoGradGuard guard;
    r.seeds = query::select_seed_points(r.pyramid.frame(0, 0), r.pyramid.dims[0], s_rows, config_.n_inter,
                                        query::suppression_radius(sc.height));
  }
  r.trajectories = track_seeds(clip, r.seeds, r.pyramid.levels[0], config_.channels);
  if (!ablations.traj) {
    std::fill(r.trajectories.coords.begin(), r.trajectories.coords.end(), 0.0);
    r.trajectories.embeddings = Tensor<T>(r.trajectories.embeddings.shape(), T(0));
  }
  r.q_inter = queries_.inter(r.trajectories, queries_.project_text(r.text.f_e), sc.height, sc.width,
                                &r.pool_weights);

  r.tokens = decoder_.decode_clip(r.q_app, r.pyramid.levels[2], r.pyramid.dims[2].area(), r.pyramid.levels[0],
                                  sc.height, sc.width, sc.frames);
  r.o_prime = ablations.iia ? aggregator_.intra_clip(r.tokens, r.q_intra, ablations.rpe, &r.relations) : r.tokens.o;
  r.timeline = aggregation::link_tokens(r.o_prime, config_.n_app, sc.frames);
  if (ablations.ima) {
    r.o_tilde = aggregator_.local_temporal(r.timeline, &r.window_weights);
    r.inter = aggregator_.inter_frame(r.o_tilde, config_.n_app, sc.frames, r.q_inter);
  } else {
    r.o_tilde = r.timeline.linked;
    r.inter = aggregator_.select_only(r.timeline.linked, r.q_inter);
  }
  r.prediction = head_(r.inter.v, r.tokens.pixel_embed, sc.frames, area);
  return r;
}

template <typename T>
head::LossBundle<T> Model<T>::loss(const ForwardResult<T>& fwd, const bench::SceneClip& clip) const {
  const auto& sc = clip.config;
  const std::size_t area = sc.height * sc.width;
  std::vector<std::vector<T>> gt;
  for (const auto& m : clip.gt_masks) gt.emplace_back(m.begin(), m.end());
  const auto assignment = head::match_slots(fwd.tokens.mask_logits, config_.n_app, sc.frames, area, gt);
  auto l_f = head::frame_loss(fwd.tokens.mask_logits, config_.n_app, sc.frames, area, gt, assignment);
  auto l_v = head::video_loss(fwd.prediction, gt[clip.target_id]);
  auto l_con =
      head::consistency_loss(fwd.inter.o_hat, config_.n_app, sc.frames, config_.consistency_divide_by_frames);
  return head::combine(l_f, l_v, l_con, head::LossWeights{config_.lambda_v, config_.lambda_f, config_.lambda_con});
}

template <typename T>
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> clip_masks(Model<T>& model,
                                                                            const bench::SceneClip& clip,
                                                                            const Ablations& ablations) {
  NoGradGuard guard;
  const auto fwd = model.forward(clip, ablations);
  return {fwd.prediction.top_mask(), clip.gt_masks[clip.target_id]};
}

template Tensor<float> frames_tensor(const bench::SceneClip&);
template Tensor<double> frames_tensor(const bench::SceneClip&);
template query::TrajectorySet<float> track_seeds(const bench::SceneClip&, const std::vector<query::PixelPoint>&,
                                                 const Tensor<float>&, std::size_t);
template query::TrajectorySet<double> track_seeds(const bench::SceneClip&, const std::vector<query::PixelPoint>&,
                                                  const Tensor<double>&, std::size_t);
template class Model<float>;
template class Model<double>;
template std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> clip_masks(Model<float>&,
                                                                                     const bench::SceneClip&,
                                                                                     const Ablations&);
template std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> clip_masks(Model<double>&,
                                                                                     const bench::SceneClip&,
                                                                                     const Ablations&);

}  // namespace tqf::model
