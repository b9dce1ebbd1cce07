#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tqf/model/checkpoint.hpp"
#include "tqf/model/gradcheck_suite.hpp"
#include "tqf/model/trainer.hpp"

namespace tqf::model {
namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.channels = 8;
  c.text_width = 8;
  c.embed_channels = 4;
  c.n_app = 4;
  c.n_intra = 2;
  c.n_inter = 2;
  c.topk = 2;
  c.decoder_rounds = 1;
  c.seed = 5;
  return c;
}

bench::SceneClip tiny_scene(std::uint64_t seed = 3) {
  bench::SceneConfig sc;
  sc.frames = 4;
  sc.height = 32;
  sc.width = 32;
  return bench::generate_scene(sc, seed);
}

template <typename T>
std::vector<std::vector<T>> snapshot(Model<T>& m) {
  std::vector<std::vector<T>> out;
  for (const auto& p : m.store().params()) out.push_back(p.tensor.values());
  return out;
}

TEST(Model, ForwardShapes) {
  const auto cfg = tiny_config();
  Model<double> model(cfg);
  const auto clip = tiny_scene();
  const auto r = model.forward(clip, Ablations{});
  const std::size_t t = clip.config.frames, area = clip.area();
  EXPECT_EQ(r.q_app.shape(), (std::vector<std::size_t>{cfg.n_app, cfg.channels}));
  EXPECT_EQ(r.q_intra.shape(), (std::vector<std::size_t>{cfg.n_intra, cfg.channels}));
  EXPECT_EQ(r.q_inter.shape(), (std::vector<std::size_t>{cfg.n_inter, cfg.channels}));
  EXPECT_EQ(r.tokens.o.shape(), (std::vector<std::size_t>{t * cfg.n_app, cfg.channels}));
  EXPECT_EQ(r.o_prime.shape(), r.tokens.o.shape());
  EXPECT_EQ(r.relations.size(), t);
  EXPECT_EQ(r.seeds.size(), cfg.n_inter);
  EXPECT_EQ(r.trajectories.tracks, cfg.n_inter);
  EXPECT_EQ(r.prediction.mask_logits.shape(), (std::vector<std::size_t>{cfg.n_inter, t * area}));
  for (double v : r.prediction.mask_logits.values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Model, AblationsChangeTheRightStages) {
  Model<double> model(tiny_config());
  const auto clip = tiny_scene();
  const auto full = model.forward(clip, Ablations{});

  Ablations no_iia;
  no_iia.iia = false;
  const auto a = model.forward(clip, no_iia);
  EXPECT_TRUE(a.relations.empty());
  EXPECT_EQ(a.o_prime.values(), a.tokens.o.values());
  EXPECT_EQ(a.tokens.o.values(), full.tokens.o.values());

  Ablations no_traj;
  no_traj.traj = false;
  const auto b = model.forward(clip, no_traj);
  for (double v : b.trajectories.coords) EXPECT_EQ(v, 0.0);
  for (double v : b.trajectories.embeddings.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(b.o_prime.values(), full.o_prime.values());

  Ablations no_ima;
  no_ima.ima = false;
  const auto c = model.forward(clip, no_ima);
  EXPECT_EQ(c.o_tilde.values(), c.timeline.linked.values());
  EXPECT_NE(c.prediction.mask_logits.values(), full.prediction.mask_logits.values());
}

TEST(Model, TrackSeedsStayOnTheirObject) {
  Model<double> model(tiny_config());
  const auto clip = tiny_scene(9);
  const auto r = model.forward(clip, Ablations{});
  const auto& tr = r.trajectories;
  const std::size_t w = clip.config.width;
  for (std::size_t k = 0; k < tr.tracks; ++k) {
    const int owner = clip.object_at(0, r.seeds[k].x, r.seeds[k].y);
    for (std::size_t t = 0; t < tr.frames; ++t) {
      const std::size_t i = k * tr.frames + t;
      if (!tr.valid[i]) continue;
      const auto x = static_cast<std::size_t>(std::lround(tr.coords[2 * i]));
      const auto y = static_cast<std::size_t>(std::lround(tr.coords[2 * i + 1]));
      ASSERT_LT(x, w);
      EXPECT_EQ(clip.object_at(t, x, y), owner) << "track " << k << " frame " << t;
    }
  }
}

TEST(Model, TotalLossIsWeightedSum) {
  auto cfg = tiny_config();
  cfg.precision = Precision::kF64;
  Model<double> model(cfg);
  const auto clip = tiny_scene();
  const auto l = model.loss(model.forward(clip, Ablations{}), clip);
  const double expect = (1.0 * l.l_v.item() + 1.0 * l.l_f.item()) + 0.5 * l.l_con.item();
  EXPECT_EQ(l.l_total.item(), expect);
  EXPECT_GE(l.l_con.item(), 0.0);
  EXPECT_LE(l.l_con.item(), 2.0);
}

TEST(Trainer, ZeroLearningRateKeepsParameters) {
  auto cfg = tiny_config();
  cfg.lr = 0;
  Model<float> model(cfg);
  const auto before = snapshot(model);
  train(model, {tiny_scene()}, 3);
  EXPECT_EQ(snapshot(model), before);
}

TEST(Trainer, DeterministicRuns) {
  const auto clip = tiny_scene();
  Model<float> a(tiny_config()), b(tiny_config());
  const auto ra = train(a, {clip}, 5), rb = train(b, {clip}, 5);
  for (std::size_t s = 0; s < ra.size(); ++s) EXPECT_EQ(ra[s].l_total, rb[s].l_total);
  EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(Trainer, LossWindowsDecreaseOnOneClip) {
  auto cfg = tiny_config();
  cfg.lr = 1e-3;
  Model<float> model(cfg);
  std::ostringstream log;
  const auto rec = train(model, {tiny_scene()}, 500, &log);
  ASSERT_EQ(rec.size(), 500u);
  double prev = INFINITY;
  for (std::size_t w = 0; w < 5; ++w) {
    double mean = 0;
    for (std::size_t s = w * 100; s < (w + 1) * 100; ++s) mean += rec[s].l_total;
    mean /= 100;
    EXPECT_LT(mean, prev) << "window " << w;
    prev = mean;
  }
  std::istringstream lines(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<std::size_t>(), n++);
  }
  EXPECT_EQ(n, 500u);
}

TEST(Checkpoint, RoundTripReproducesForward) {
  const auto dir = std::filesystem::temp_directory_path() / "tqf_model_ckpt";
  std::filesystem::remove_all(dir);
  const auto clip = tiny_scene();
  Model<float> model(tiny_config());
  train(model, {clip}, 2);
  save_checkpoint(dir, model, 2);

  const auto info = read_checkpoint_info(dir);
  EXPECT_EQ(info.steps, 2u);
  EXPECT_EQ(info.config.to_json(), tiny_config().to_json());
  Model<float> copy(info.config);
  load_checkpoint(dir, copy);
  EXPECT_EQ(snapshot(copy), snapshot(model));
  EXPECT_EQ(copy.forward(clip, Ablations{}).prediction.mask_logits.values(),
            model.forward(clip, Ablations{}).prediction.mask_logits.values());

  auto other = tiny_config();
  other.channels = 6;
  Model<float> wrong(other);
  EXPECT_THROW(load_checkpoint(dir, wrong), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST(Config, DefaultsAndValidation) {
  const RunConfig c;
  EXPECT_EQ(c.channels, 32u);
  EXPECT_EQ(c.text_width, 64u);
  EXPECT_EQ(c.embed_channels, 16u);
  EXPECT_EQ(c.n_app, 16u);
  EXPECT_EQ(c.n_intra, 8u);
  EXPECT_EQ(c.n_inter, 8u);
  EXPECT_EQ(c.topk, 8u);
  EXPECT_EQ(c.window, 3u);
  EXPECT_EQ(c.lambda_con, 0.5);
  EXPECT_EQ(c.lr, 5e-5);
  EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(RunConfig::from_json({{"chanels", 4}}), ValidationError);
  EXPECT_THROW(RunConfig::from_json({{"window", 4}}), ValidationError);
  EXPECT_THROW(RunConfig::from_json({{"lr", -1.0}}), ValidationError);
  EXPECT_THROW(RunConfig::from_json({{"precision", "f16"}}), ValidationError);
}

TEST(GradcheckSuite, PassesAndCatchesInjectedBug) {
  const auto ok = run_gradcheck_suite();
  ASSERT_GE(ok.size(), 6u);
  for (const auto& m : ok) EXPECT_TRUE(m.report.pass) << m.module;
  const auto bad = run_gradcheck_suite({}, true);
  for (const auto& m : bad) EXPECT_FALSE(m.report.pass) << m.module;
}

}  // namespace
}  // namespace tqf::model
