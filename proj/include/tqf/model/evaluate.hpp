#pragma once

#include <filesystem>

#include "tqf/bench/metrics.hpp"
#include "tqf/model/checkpoint.hpp"

namespace tqf::model {

/// Worker count for scene-parallel commands: TQF_THREADS if set (>= 1),
/// otherwise the OpenMP default.
std::size_t scene_threads();

/// Metrics of the top-ranked tracklet against each clip's target. Every
/// worker owns a model copy loaded from `checkpoint`; results do not depend
/// on the worker count.
template <typename T>
bench::MetricReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                        const std::vector<bench::SceneClip>& clips, const Ablations& ablations,
                                        std::size_t threads = 1);

/// Same metrics for an in-memory model, evaluated serially.
template <typename T>
bench::MetricReport evaluate_model(Model<T>& model, const std::vector<bench::SceneClip>& clips,
                                   const Ablations& ablations);

nlohmann::json report_json(const bench::MetricReport& r);

}  // namespace tqf::model
