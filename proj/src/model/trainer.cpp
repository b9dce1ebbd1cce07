#include "tqf/model/trainer.hpp"

#include <cmath>

namespace tqf::model {

nlohmann::json step_json(const StepRecord& r) {
  return {{"step", r.step}, {"l_f", r.l_f}, {"l_v", r.l_v}, {"l_con", r.l_con}, {"l_total", r.l_total}};
}

template <typename T>
Trainer<T>::Trainer(Model<T>& model)
    : model_(model),
      optimizer_(model.store(), head::AdamWOptions{model.config().lr, 0.9, 0.999, 1e-8, model.config().weight_decay}),
      ablations_(Ablations::from_config(model.config())) {}

template <typename T>
StepRecord Trainer<T>::step(const bench::SceneClip& clip) {
  model_.store().zero_grad();
  const auto fwd = model_.forward(clip, ablations_);
  const auto losses = model_.loss(fwd, clip);
  StepRecord rec;
  rec.step = optimizer_.steps();
  rec.l_f = losses.l_f.item();
  rec.l_v = losses.l_v.item();
  rec.l_con = losses.l_con.item();
  rec.l_total = losses.l_total.item();
  if (!std::isfinite(rec.l_total)) {
    const char* which = !std::isfinite(rec.l_f) ? "l_f" : !std::isfinite(rec.l_v) ? "l_v" : "l_con";
    throw NumericError("non-finite loss at step " + std::to_string(rec.step) + " (first non-finite term: " + which + ")");
  }
  backward(losses.l_total);
  optimizer_.step();
  return rec;
}

template <typename T>
std::vector<StepRecord> train(Model<T>& model, const std::vector<bench::SceneClip>& clips, std::size_t steps,
                              std::ostream* log) {
  if (clips.empty() && steps > 0) throw ValidationError("training needs at least one scene");
  Trainer<T> trainer(model);
  std::vector<StepRecord> records;
  records.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    records.push_back(trainer.step(clips[s % clips.size()]));
    if (log) *log << step_json(records.back()).dump() << "\n";
  }
  return records;
}

template class Trainer<float>;
template class Trainer<double>;
template std::vector<StepRecord> train(Model<float>&, const std::vector<bench::SceneClip>&, std::size_t, std::ostream*);
template std::vector<StepRecord> train(Model<double>&, const std::vector<bench::SceneClip>&, std::size_t,
                                       std::ostream*);

}  // namespace tqf::model
