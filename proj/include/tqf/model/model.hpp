#pragma once

// The full clip pipeline: text features, feature pyramid, the three query
// sets, frame decoding, intra/inter-frame aggregation and the prediction head.

#include "tqf/aggregation/aggregation.hpp"
#include "tqf/bench/synth.hpp"
#include "tqf/head/head_loss.hpp"
#include "tqf/model/config.hpp"
#include "tqf/query/query_former.hpp"
#include "tqf/text/decomposer.hpp"

namespace tqf::model {

struct Ablations {
  bool iia = true;
  bool ima = true;
  bool traj = true;
  bool rpe = true;

  static Ablations from_config(const RunConfig& c) { return {!c.no_iia, !c.no_ima, !c.no_traj, !c.no_rpe}; }
};

template <typename T>
struct ForwardResult {
  text::PhraseMasks phrases;
  text::TextFeatures<T> text;
  query::FeaturePyramid<T> pyramid;
  query::AppearanceTrace trace;
  std::vector<query::PixelPoint> seeds;
  query::TrajectorySet<T> trajectories;
  Tensor<T> q_app, q_intra, q_inter;
  Tensor<T> pool_weights;
  decoder::ObjectTokens<T> tokens;
  std::vector<aggregation::RelationalFeatures<T>> relations;  // per frame, empty without IIA
  Tensor<T> o_prime;
  aggregation::TokenTimeline<T> timeline;
  Tensor<T> o_tilde;
  Tensor<T> window_weights;
  aggregation::InterFrameResult<T> inter;
  head::Prediction<T> prediction;
};

/// Stand-in point tracker: each seed follows the object that covers it in the
/// first frame (background seeds stay put). A step is valid while the point
/// is still on that object's visible region (or on background).
template <typename T>
query::TrajectorySet<T> track_seeds(const bench::SceneClip& clip, const std::vector<query::PixelPoint>& seeds,
                                    const Tensor<T>& level1, std::size_t channels);

template <typename T>
Tensor<T> frames_tensor(const bench::SceneClip& clip);

template <typename T>
class Model {
 public:
  explicit Model(const RunConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ForwardResult<T> forward(const bench::SceneClip& clip, const Ablations& ablations);
  head::LossBundle<T> loss(const ForwardResult<T>& fwd, const bench::SceneClip& clip) const;

  /// Registers every token of the clips so later forwards do not touch the
  /// vocabulary (needed before concurrent evaluation).
  void register_tokens(const std::vector<bench::SceneClip>& clips);

  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }
  text::Vocabulary& vocab() { return vocab_; }
  const RunConfig& config() const { return config_; }

 private:
  RunConfig config_;
  ParamStore<T> store_;
  text::Vocabulary vocab_;
  text::TextEncoder<T> text_;
  query::PyramidEncoder<T> pyramid_;
  query::QueryFormer<T> queries_;
  decoder::FrameDecoder<T> decoder_;
  aggregation::Aggregator<T> aggregator_;
  head::PredictionHead<T> head_;
};

/// Binary prediction (top-ranked token) and ground truth for a clip.
template <typename T>
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> clip_masks(Model<T>& model,
                                                                            const bench::SceneClip& clip,
                                                                            const Ablations& ablations);

}  // namespace tqf::model
