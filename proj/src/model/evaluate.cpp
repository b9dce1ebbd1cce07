#include "tqf/model/evaluate.hpp"

#include <cstdlib>
#include <exception>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tqf::model {

std::size_t scene_threads() {
  if (const char* env = std::getenv("TQF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ValidationError(std::string("TQF_THREADS must be >= 1, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
#ifdef _OPENMP
  return static_cast<std::size_t>(omp_get_max_threads());
#else
  return 1;
#endif
}

namespace {

bench::MetricReport score(const std::vector<bench::BinaryClip>& preds, const std::vector<bench::BinaryClip>& gts,
                          const std::vector<bench::SceneClip>& clips) {
  if (clips.empty()) throw ValidationError("evaluation needs at least one scene");
  const auto& c0 = clips.front().config;
  for (const auto& c : clips) {
    if (c.config.frames != c0.frames || c.config.height != c0.height || c.config.width != c0.width) {
      throw ValidationError("all evaluated scenes must share frame count and size");
    }
  }
  return bench::eval_dataset(preds, gts, c0.frames, c0.height, c0.width);
}

}  // namespace

template <typename T>
bench::MetricReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                        const std::vector<bench::SceneClip>& clips, const Ablations& ablations,
                                        std::size_t threads) {
  const auto info = read_checkpoint_info(checkpoint);
  threads = std::max<std::size_t>(1, std::min(threads, clips.size()));
  std::vector<std::unique_ptr<Model<T>>> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.push_back(std::make_unique<Model<T>>(info.config));
    load_checkpoint(checkpoint, *workers.back());
    workers.back()->register_tokens(clips);
  }

  std::vector<bench::BinaryClip> preds(clips.size()), gts(clips.size());
  std::exception_ptr failure;
  const long n = static_cast<long>(clips.size());
#pragma omp parallel for schedule(static, 1) num_threads(static_cast<int>(threads)) if (threads > 1)
  for (long i = 0; i < n; ++i) {
    int w = 0;
#ifdef _OPENMP
    w = omp_get_thread_num();
#endif
    try {
      auto [p, g] = clip_masks(*workers[static_cast<std::size_t>(w)], clips[static_cast<std::size_t>(i)], ablations);
      preds[static_cast<std::size_t>(i)] = std::move(p);
      gts[static_cast<std::size_t>(i)] = std::move(g);
    } catch (...) {
#pragma omp critical(tqf_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return score(preds, gts, clips);
}

template <typename T>
bench::MetricReport evaluate_model(Model<T>& model, const std::vector<bench::SceneClip>& clips,
                                   const Ablations& ablations) {
  model.register_tokens(clips);
  std::vector<bench::BinaryClip> preds, gts;
  for (const auto& clip : clips) {
    auto [p, g] = clip_masks(model, clip, ablations);
    preds.push_back(std::move(p));
    gts.push_back(std::move(g));
  }
  return score(preds, gts, clips);
}

nlohmann::json report_json(const bench::MetricReport& r) {
  return {{"j", r.j},       {"f", r.f},       {"jf", r.jf},          {"oiou", r.oiou},
          {"miou", r.miou}, {"map", r.map},   {"samples", r.samples}};
}

template bench::MetricReport evaluate_checkpoint<float>(const std::filesystem::path&,
                                                        const std::vector<bench::SceneClip>&, const Ablations&,
                                                        std::size_t);
template bench::MetricReport evaluate_checkpoint<double>(const std::filesystem::path&,
                                                         const std::vector<bench::SceneClip>&, const Ablations&,
                                                         std::size_t);
template bench::MetricReport evaluate_model(Model<float>&, const std::vector<bench::SceneClip>&, const Ablations&);
template bench::MetricReport evaluate_model(Model<double>&, const std::vector<bench::SceneClip>&, const Ablations&);

}  // namespace tqf::model
