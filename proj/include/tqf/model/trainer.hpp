#pragma once

#include <functional>
#include <ostream>

#include "tqf/head/optimizer.hpp"
#include "tqf/model/model.hpp"

namespace tqf::model {

struct StepRecord {
  std::size_t step = 0;
  double l_f = 0;
  double l_v = 0;
  double l_con = 0;
  double l_total = 0;
};

nlohmann::json step_json(const StepRecord& r);

template <typename T>
class Trainer {
 public:
  explicit Trainer(Model<T>& model);

  /// Forward, backward and one AdamW update on `clip`. The returned losses
  /// are from before the update.
  StepRecord step(const bench::SceneClip& clip);
  std::size_t steps_done() const { return optimizer_.steps(); }

 private:
  Model<T>& model_;
  head::AdamW<T> optimizer_;
  Ablations ablations_;
};

/// Runs `steps` updates cycling through the clips in order; every record is
/// written as one JSON line to `log` when given.
template <typename T>
std::vector<StepRecord> train(Model<T>& model, const std::vector<bench::SceneClip>& clips, std::size_t steps,
                              std::ostream* log = nullptr);

}  // namespace tqf::model
