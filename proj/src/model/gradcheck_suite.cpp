#include "tqf/model/gradcheck_suite.hpp"

#include <chrono>
#include <random>

#include "tqf/model/model.hpp"

namespace tqf::model {
namespace {

using D = double;

Tensor<D> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::vector<D> v(numel(shape));
  for (auto& x : v) x = scale * (2.0 * static_cast<double>(gen() >> 11) * 0x1.0p-53 - 1.0);
  return Tensor<D>(std::move(shape), std::move(v));
}

// Scalar read-out that keeps every entry of x in play with its own weight.
Tensor<D> probe(const Tensor<D>& x, std::uint64_t seed) {
  const auto flat = ops::reshape(x, {1, x.size()});
  return ops::sum(ops::mul(ops::gelu(flat), random_tensor({1, x.size()}, seed)));
}

Tensor<D> with_bug(Tensor<D> loss, ParamStore<D>& store, bool inject) {
  if (!inject) return loss;
  const auto& p = store.params().front().tensor;
  const auto flat = ops::reshape(p, {1, p.size()});
  return ops::add(loss, ops::sum(ops::mul(flat, flat.detach())));
}

bench::SceneClip micro_scene() {
  bench::SceneClip clip;
  clip.config.frames = 2;
  clip.config.height = 4;
  clip.config.width = 4;
  clip.config.objects = 2;
  clip.config.track_points = 2;
  const std::size_t area = 16;
  clip.frames.resize(2 * 3 * area);
  std::mt19937_64 gen(11);
  for (auto& v : clip.frames) v = static_cast<float>(static_cast<double>(gen() >> 11) * 0x1.0p-53);
  bench::ObjectRecord a, b;
  a.shape = b.shape = "square";
  a.color = "red";
  b.color = "blue";
  a.motion = bench::Motion::kLinear;
  a.motion_params = {1.0, 0.0};
  a.direction = "right";
  b.motion = bench::Motion::kStatic;
  a.radius = b.radius = 1;
  a.centers = {0.5, 0.5, 1.5, 0.5};
  b.centers = {2.5, 2.5, 2.5, 2.5};
  clip.objects = {a, b};
  clip.gt_masks.assign(2, std::vector<std::uint8_t>(2 * area, 0));
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t y = 0; y < 2; ++y) {
      for (std::size_t x = 0; x < 2; ++x) clip.gt_masks[0][t * area + y * 4 + x + t] = 1;
    }
    for (std::size_t y = 2; y < 4; ++y) {
      for (std::size_t x = 2; x < 4; ++x) clip.gt_masks[1][t * area + y * 4 + x] = 1;
    }
  }
  using text::Tag;
  clip.expression.tokens = {"the", "red", "square", "moving", "right", "passing", "the", "blue", "square"};
  clip.expression.tags = {Tag::kDet, Tag::kAdj, Tag::kNoun, Tag::kVerbIntrans, Tag::kAdv,
                          Tag::kVerbTrans, Tag::kDet, Tag::kAdj, Tag::kNoun};
  clip.target_id = 0;
  return clip;
}

template <typename Build>
ModuleCheck timed(const std::string& module, Build&& build, const GradCheckOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  ModuleCheck out;
  out.module = module;
  out.report = build(opts);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

std::vector<ModuleCheck> run_gradcheck_suite(const GradCheckOptions& opts, bool inject_bug) {
  std::vector<ModuleCheck> out;

  out.push_back(timed("text", [&](const GradCheckOptions& o) {
    ParamStore<D> store(101);
    text::TextEncoder<D> enc(store, "text", 6, 64);
    text::Vocabulary vocab(64);
    const auto clip = micro_scene();
    const auto masks = text::decompose(clip.expression);
    text::TokenizedExpression bare;
    bare.tokens = {"quietly"};
    bare.tags = {text::Tag::kOther};
    const auto bare_masks = text::decompose(bare);
    return grad_check([&] {
      const auto f = enc.embed(clip.expression, masks, vocab);
      const auto g = enc.embed(bare, bare_masks, vocab);
      auto l = ops::add(ops::add(probe(f.f_l, 1), probe(f.f_s, 2)), ops::add(probe(f.f_r, 3), probe(f.f_e, 4)));
      l = ops::add(l, ops::add(probe(g.f_s, 5), ops::add(probe(g.f_r, 6), probe(g.f_e, 7))));
      return with_bug(l, store, inject_bug);
    }, store, o);
  }, opts));

  out.push_back(timed("pyramid", [&](const GradCheckOptions& o) {
    ParamStore<D> store(102);
    query::PyramidEncoder<D> enc(store, "pyramid", 4);
    const auto frames = random_tensor({2, 3, 8, 8}, 21, 0.5);
    return grad_check([&] {
      const auto p = enc.encode(frames);
      Tensor<D> l = probe(p.levels[0], 10);
      for (std::size_t i = 1; i < query::kPyramidLevels; ++i) l = ops::add(l, probe(p.levels[i], 10 + i));
      return with_bug(l, store, inject_bug);
    }, store, o);
  }, opts));

  out.push_back(timed("query_former", [&](const GradCheckOptions& o) {
    ParamStore<D> store(103);
    query::QueryFormerOptions qo;
    qo.channels = 4;
    qo.text_width = 6;
    qo.n_app = 2;
    qo.n_intra = 2;
    qo.n_inter = 2;
    qo.topk = 2;
    query::QueryFormer<D> qf(store, "query", qo);
    query::FeaturePyramid<D> pyr;
    pyr.frames = 2;
    pyr.channels = 4;
    std::size_t h = 8;
    for (std::size_t i = 0; i < query::kPyramidLevels; ++i, h = (h + 1) / 2) {
      pyr.dims[i] = {h, h};
      pyr.levels[i] = random_tensor({2 * h * h, 4}, 30 + i);
    }
    const auto f_s = random_tensor({2, 6}, 40), f_r = random_tensor({1, 6}, 41), f_e = random_tensor({2, 6}, 42);
    const auto f_l = random_tensor({5, 6}, 43);
    query::TrajectorySet<D> traj;
    traj.tracks = 2;
    traj.frames = 2;
    traj.coords = {1, 1, 2, 1, 5, 6, 5, 7};
    traj.valid = {1, 1, 1, 0};
    traj.embeddings = random_tensor({4, 4}, 44);
    return grad_check([&] {
      auto l = probe(qf.appearance(qf.project_text(f_s), pyr), 50);
      l = ops::add(l, probe(qf.intra(qf.project_text(f_r), f_l), 51));
      l = ops::add(l, probe(qf.inter(traj, qf.project_text(f_e), 8, 8), 52));
      return with_bug(l, store, inject_bug);
    }, store, o);
  }, opts));

  out.push_back(timed("frame_decoder", [&](const GradCheckOptions& o) {
    ParamStore<D> store(104);
    decoder::FrameDecoder<D> dec(store, "decoder", {4, 3, 2, true});
    const auto q = random_tensor({3, 4}, 60), mem = random_tensor({2 * 4, 4}, 61), pix = random_tensor({2 * 16, 4}, 62);
    return grad_check([&] {
      const auto tok = dec.decode_clip(q, mem, 4, pix, 4, 4, 2);
      auto l = ops::add(probe(tok.o, 63), probe(tok.mask_logits, 64));
      return with_bug(l, store, inject_bug);
    }, store, o);
  }, opts));

  out.push_back(timed("aggregation", [&](const GradCheckOptions& o) {
    ParamStore<D> store(105);
    aggregation::Aggregator<D> agg(store, "aggregation", {4, 3, true});
    decoder::ObjectTokens<D> tok;
    tok.tokens = 3;
    tok.frames = 3;
    tok.height = 4;
    tok.width = 4;
    tok.o = random_tensor({9, 4}, 70);
    tok.mask_logits = random_tensor({9, 16}, 71, 3.0);
    const auto masks = tok.coarse_masks();
    for (std::size_t r = 0; r < 9; ++r) tok.boxes.push_back(decoder::box_from_mask(masks.data().data() + r * 16, 4, 4));
    const auto q_intra = random_tensor({2, 4}, 72), q_inter = random_tensor({2, 4}, 73);
    return grad_check([&] {
      const auto o_prime = agg.intra_clip(tok, q_intra);
      const auto timeline = aggregation::link_tokens(o_prime, 3, 3);
      const auto res = agg.inter_frame(agg.local_temporal(timeline), 3, 3, q_inter);
      auto l = ops::add(probe(res.o_hat, 74), probe(res.v, 75));
      return with_bug(l, store, inject_bug);
    }, store, o);
  }, opts));

  out.push_back(timed("head_loss", [&](const GradCheckOptions& o) {
    ParamStore<D> store(106);
    head::PredictionHead<D> hd(store, "head", 4, 3);
    auto v = store.create("probe.v", {2, 4}, InitSpec{InitSpec::Kind::kUniform, 1.0, 0});
    auto pe = store.create("probe.pixel_embed", {2 * 9, 3}, InitSpec{InitSpec::Kind::kUniform, 1.0, 0});
    auto o_hat = store.create("probe.o_hat", {2 * 3, 4}, InitSpec{InitSpec::Kind::kUniform, 1.0, 0});
    auto masks = store.create("probe.mask_logits", {3 * 2, 9}, InitSpec{InitSpec::Kind::kUniform, 2.0, 0});
    std::vector<D> target(18, 0.0), other(18, 0.0);
    for (std::size_t k = 0; k < 18; k += 3) target[k] = 1;
    for (std::size_t k = 1; k < 18; k += 4) other[k] = 1;
    const std::vector<std::vector<D>> gt{target, other};
    std::vector<std::size_t> assign;
    {
      NoGradGuard guard;
      assign = head::match_slots(masks, 3, 2, 9, gt);
    }
    return grad_check([&] {
      const auto pred = hd(v, pe, 2, 9);
      const auto bundle = head::combine(head::frame_loss(masks, 3, 2, 9, gt, assign), head::video_loss(pred, target),
                                        head::consistency_loss(o_hat, 2, 3), head::LossWeights{});
      return with_bug(bundle.l_total, store, inject_bug);
    }, store, o);
  }, opts));

  out.push_back(timed("pipeline", [&](const GradCheckOptions& o) {
    RunConfig cfg;
    cfg.channels = 4;
    cfg.text_width = 4;
    cfg.embed_channels = 3;
    cfg.n_app = 2;
    cfg.n_intra = 2;
    cfg.n_inter = 2;
    cfg.topk = 2;
    cfg.decoder_rounds = 1;
    cfg.seed = 107;
    cfg.precision = Precision::kF64;
    Model<D> model(cfg);
    const auto clip = micro_scene();
    model.register_tokens({clip});
    return grad_check([&] {
      const auto fwd = model.forward(clip, Ablations{});
      return with_bug(model.loss(fwd, clip).l_total, model.store(), inject_bug);
    }, model.store(), o);
  }, opts));

  return out;
}

}  // namespace tqf::model
