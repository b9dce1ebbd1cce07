// tqf: data generation, training, evaluation, gradient checking and
// attention inspection for the triple-query segmentation model.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "tqf/bench/metrics.hpp"
#include "tqf/core/ten_io.hpp"
#include "tqf/model/checkpoint.hpp"
#include "tqf/model/evaluate.hpp"
#include "tqf/model/gradcheck_suite.hpp"
#include "tqf/model/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tqf;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct AblationFlags {
  bool no_iia = false;
  bool no_ima = false;
  bool no_traj = false;
  bool no_rpe = false;

  void add_to(CLI::App* cmd) {
    cmd->add_flag("--no-iia", no_iia, "Disable intra-frame interaction aggregation");
    cmd->add_flag("--no-ima", no_ima, "Disable inter-frame motion aggregation");
    cmd->add_flag("--no-traj", no_traj, "Feed zeros instead of trajectories to the inter-frame queries");
    cmd->add_flag("--no-rpe", no_rpe, "Drop the relative-position bias");
  }
  void apply(model::RunConfig& c) const {
    c.no_iia = c.no_iia || no_iia;
    c.no_ima = c.no_ima || no_ima;
    c.no_traj = c.no_traj || no_traj;
    c.no_rpe = c.no_rpe || no_rpe;
  }
  json to_json(const model::Ablations& a) const {
    return {{"iia", a.iia}, {"ima", a.ima}, {"traj", a.traj}, {"rpe", a.rpe}};
  }
};

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------- data sets

struct DataSpec {
  bench::SceneConfig scene;
  std::vector<std::pair<bench::SceneMode, std::size_t>> modes{{bench::SceneMode::kMixed, 1}};
  std::size_t count = 1;
};

DataSpec load_data_spec(const std::optional<fs::path>& path) {
  DataSpec spec;
  if (!path) return spec;
  const auto j = parse_json_file(*path);
  if (!j.is_object()) throw ValidationError("data config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "frames") spec.scene.frames = value.get<std::size_t>();
      else if (key == "height") spec.scene.height = value.get<std::size_t>();
      else if (key == "width") spec.scene.width = value.get<std::size_t>();
      else if (key == "objects") spec.scene.objects = value.get<std::size_t>();
      else if (key == "track_points") spec.scene.track_points = value.get<std::size_t>();
      else if (key == "count") spec.count = value.get<std::size_t>();
      else if (key == "modes") {
        spec.modes.clear();
        if (value.is_string()) {
          spec.modes.emplace_back(bench::parse_mode(value.get<std::string>()), 1);
        } else {
          // Fixed mode order so the schedule does not depend on key order in the file.
          for (auto m : {bench::SceneMode::kAppearanceTwin, bench::SceneMode::kMotionTwin, bench::SceneMode::kMixed}) {
            if (value.contains(bench::mode_name(m))) spec.modes.emplace_back(m, value.at(bench::mode_name(m)).get<std::size_t>());
          }
          for (const auto& [name, _] : value.items()) bench::parse_mode(name);
        }
      } else {
        throw ValidationError("unknown data config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError("bad data config " + path->string() + ": " + e.what());
  }
  return spec;
}

json data_spec_json(const DataSpec& spec) {
  json modes = json::object();
  for (const auto& [m, w] : spec.modes) modes[bench::mode_name(m)] = w;
  return {{"frames", spec.scene.frames},
          {"height", spec.scene.height},
          {"width", spec.scene.width},
          {"objects", spec.scene.objects},
          {"track_points", spec.scene.track_points},
          {"count", spec.count},
          {"modes", modes}};
}

struct DataSet {
  std::vector<bench::SceneClip> clips;
  std::vector<std::string> names;
};

DataSet load_data(const fs::path& dir, std::optional<std::string> mode, std::size_t limit) {
  const auto manifest = parse_json_file(dir / "manifest.json");
  DataSet ds;
  try {
    for (const auto& entry : manifest.at("scenes")) {
      const auto m = entry.at("mode").get<std::string>();
      if (mode && m != *mode) continue;
      if (limit && ds.clips.size() == limit) break;
      const auto path = entry.at("path").get<std::string>();
      ds.clips.push_back(bench::read_scene(dir / path));
      ds.names.push_back(path);
    }
  } catch (const json::exception& e) {
    throw ValidationError("bad data manifest in " + dir.string() + ": " + e.what());
  }
  if (ds.clips.empty()) throw ValidationError("no scenes selected from " + dir.string());
  return ds;
}

int cmd_gen_data(const std::optional<fs::path>& config, const fs::path& out, std::uint64_t seed,
                 std::optional<std::size_t> count, std::optional<std::string> mode) {
  auto spec = load_data_spec(config);
  if (count) spec.count = *count;
  if (mode) spec.modes = {{bench::parse_mode(*mode), 1}};
  const auto schedule = bench::mode_schedule(spec.modes, spec.count);

  fs::create_directories(out);
  json scenes = json::array();
  for (std::size_t i = 0; i < spec.count; ++i) {
    auto sc = spec.scene;
    sc.mode = schedule[i];
    const std::uint64_t s = seed + i;
    char name[32];
    std::snprintf(name, sizeof name, "scene_%05zu", i);
    bench::write_scene(out / name, bench::generate_scene(sc, s));
    scenes.push_back({{"path", name}, {"mode", bench::mode_name(sc.mode)}, {"seed", s}});
  }
  write_json(out / "manifest.json", {{"config", data_spec_json(spec)}, {"seed", seed}, {"scenes", scenes}});
  std::cout << json{{"scenes", spec.count}, {"out", out.string()}}.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- training

struct TrainArgs {
  fs::path data, out;
  std::optional<std::string> mode;
  std::size_t scenes = 0;
  double stop_at_j = 0;
  std::size_t eval_every = 100;
};

template <typename T>
int run_train(const model::RunConfig& config, const TrainArgs& args) {
  const auto ds = load_data(args.data, args.mode, args.scenes);
  model::Model<T> net(config);
  net.register_tokens(ds.clips);
  fs::create_directories(args.out);

  std::ofstream log(args.out / "train_log.jsonl", std::ios::binary);
  if (!log) throw ValidationError("cannot write " + (args.out / "train_log.jsonl").string());
  log << json{{"config", config.to_json()}, {"data", args.data.string()}, {"scenes", ds.names}}.dump() << "\n";

  const auto ablations = model::Ablations::from_config(config);
  model::Trainer<T> trainer(net);
  model::StepRecord last;
  bool have_last = false;
  std::size_t done = 0;
  for (; done < config.steps; ++done) {
    last = trainer.step(ds.clips[done % ds.clips.size()]);
    have_last = true;
    log << model::step_json(last).dump() << "\n";
    const bool check = args.stop_at_j > 0 && (done + 1) % args.eval_every == 0;
    if (check) {
      const auto rep = model::evaluate_model(net, ds.clips, ablations);
      log << json{{"step", done + 1}, {"eval_j", rep.j}, {"eval_jf", rep.jf}}.dump() << "\n";
      if (rep.j >= args.stop_at_j) {
        ++done;
        break;
      }
    }
  }
  log.flush();
  model::save_checkpoint(args.out, net, done);

  json summary{{"steps", done}, {"checkpoint", args.out.string()}};
  if (have_last) summary["final"] = model::step_json(last);
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluation

template <typename T>
int run_eval(const fs::path& checkpoint, const fs::path& data, std::optional<std::string> mode, std::size_t scenes,
             const AblationFlags& flags, const std::optional<fs::path>& out) {
  auto info = model::read_checkpoint_info(checkpoint);
  auto cfg = info.config;
  cfg.no_iia = cfg.no_ima = cfg.no_traj = cfg.no_rpe = false;
  flags.apply(cfg);
  const auto ablations = model::Ablations::from_config(cfg);
  const auto ds = load_data(data, mode, scenes);
  const auto rep = model::evaluate_checkpoint<T>(checkpoint, ds.clips, ablations, model::scene_threads());
  auto j = model::report_json(rep);
  j["ablations"] = flags.to_json(ablations);
  j["checkpoint_steps"] = info.steps;
  if (out) write_json(*out, j);
  std::cout << j.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- attention dumps

template <typename T>
int run_inspect(const fs::path& checkpoint, const fs::path& data, std::size_t scene, const AblationFlags& flags,
                const fs::path& out) {
  auto cfg = model::read_checkpoint_info(checkpoint).config;
  cfg.no_iia = cfg.no_ima = cfg.no_traj = cfg.no_rpe = false;
  flags.apply(cfg);
  const auto ds = load_data(data, std::nullopt, 0);
  if (scene >= ds.clips.size()) {
    throw ValidationError("scene index " + std::to_string(scene) + " out of range (" +
                          std::to_string(ds.clips.size()) + " scenes)");
  }
  model::Model<T> net(cfg);
  model::load_checkpoint(checkpoint, net);
  net.register_tokens(ds.clips);
  NoGradGuard guard;
  const auto fwd = net.forward(ds.clips[scene], model::Ablations::from_config(cfg));

  fs::create_directories(out);
  json files = json::array();
  auto dump = [&](const std::string& name, const Tensor<T>& t) {
    if (!t.defined() || t.size() == 0) return;
    io::write_ten(out / (name + ".ten"), t);
    files.push_back(name + ".ten");
  };
  dump("pool_weights", fwd.pool_weights);
  dump("window_weights", fwd.window_weights);
  for (std::size_t t = 0; t < fwd.relations.size(); ++t) {
    dump("iia_weights_t" + std::to_string(t), fwd.relations[t].weights);
    dump("iia_bias_t" + std::to_string(t), fwd.relations[t].bias);
  }
  dump("video_tokens", fwd.inter.v);

  json topk = json::array();
  for (std::size_t l = 0; l < fwd.trace.selected.size(); ++l) {
    topk.push_back({{"level", l + 1}, {"selected", fwd.trace.selected[l]}, {"attended_keys", fwd.trace.attended_keys[l]}});
  }
  json seeds = json::array();
  for (const auto& p : fwd.seeds) seeds.push_back({p.x, p.y});
  json summary{{"scene", ds.names[scene]}, {"topk", topk}, {"seeds", seeds}, {"files", files},
               {"ranking", fwd.prediction.ranking}};
  write_json(out / "attention.json", summary);
  std::cout << json{{"out", out.string()}, {"files", files.size()}}.dump() << "\n";
  return 0;
}

int cmd_gradcheck(const std::optional<fs::path>& config, bool inject_bug, const std::optional<fs::path>& out) {
  GradCheckOptions opts;  // eps 1e-6, tol 1e-5
  if (config) {
    const auto j = parse_json_file(*config);
    if (j.contains("eps")) opts.eps = j.at("eps").get<double>();
    if (j.contains("tol")) opts.tol = j.at("tol").get<double>();
  }
  const auto checks = model::run_gradcheck_suite(opts, inject_bug);
  json entries = json::array();
  bool all = true;
  for (const auto& c : checks) {
    all = all && c.report.pass;
    entries.push_back({{"module", c.module},
                       {"passed", c.report.pass},
                       {"params", c.report.entries.size()},
                       {"max_rel_error", c.report.max_rel_error},
                       {"seconds", c.seconds}});
  }
  const json report{{"precision", "f64"}, {"eps", opts.eps}, {"tol", opts.tol}, {"passed", all}, {"modules", entries}};
  if (out) write_json(*out, report);
  std::cout << report.dump(2) << "\n";
  return all ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triple-query video object segmentation: data, training and evaluation"};
  app.require_subcommand(1);

  std::optional<fs::path> config, out_file;
  fs::path out, data, checkpoint;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> count, steps;
  std::optional<std::string> mode, precision;
  std::size_t scenes = 0, scene_index = 0;
  bool inject_bug = false;
  AblationFlags flags;
  TrainArgs targs;

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic scenes");
  gen->add_option("--config", config, "Data config JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Seed of the first scene");
  gen->add_option("--count", count, "Number of scenes (overrides the config)");
  gen->add_option("--mode", mode, "Single scene mode (overrides the config)");

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
  train->add_option("--data", targs.data, "Scene directory")->required();
  train->add_option("--out", targs.out, "Checkpoint directory")->required();
  train->add_option("--seed", seed_override, "Model seed (overrides the config)");
  train->add_option("--precision", precision, "f32 or f64");
  train->add_option("--steps", steps, "Optimizer steps (overrides the config)");
  train->add_option("--mode", targs.mode, "Only use scenes of this mode");
  train->add_option("--scenes", targs.scenes, "Use at most this many scenes");
  train->add_option("--stop-at-j", targs.stop_at_j, "Stop once the training-set J reaches this value");
  train->add_option("--eval-every", targs.eval_every, "Steps between early-stop evaluations")->check(CLI::PositiveNumber);
  flags.add_to(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a scene set");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--data", data, "Scene directory")->required();
  eval->add_option("--mode", mode, "Only evaluate scenes of this mode");
  eval->add_option("--scenes", scenes, "Evaluate at most this many scenes");
  eval->add_option("--out", out_file, "Also write the report to this file");
  flags.add_to(eval);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks in double precision");
  grad->add_option("--config", config, "JSON with optional eps and tol")->check(CLI::ExistingFile);
  grad->add_option("--out", out_file, "Also write the report to this file");
  grad->add_flag("--inject-bug", inject_bug)->group("");

  auto* inspect = app.add_subcommand("inspect-attn", "Dump attention weights and Top-K picks for one scene");
  inspect->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  inspect->add_option("--data", data, "Scene directory")->required();
  inspect->add_option("--scene", scene_index, "Scene index in the manifest");
  inspect->add_option("--out", out, "Output directory")->required();
  flags.add_to(inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_data(config, out, seed, count, mode);
    if (*train) {
      auto cfg = config ? model::RunConfig::load(config->string()) : model::RunConfig{};
      if (seed_override) cfg.seed = *seed_override;
      if (precision) cfg.precision = model::parse_precision(*precision);
      if (steps) cfg.steps = *steps;
      flags.apply(cfg);
      cfg.validate();
      return cfg.precision == model::Precision::kF64 ? run_train<double>(cfg, targs) : run_train<float>(cfg, targs);
    }
    if (*eval || *inspect) {
      const auto p = model::read_checkpoint_info(checkpoint).config.precision;
      if (*eval) {
        return p == model::Precision::kF64 ? run_eval<double>(checkpoint, data, mode, scenes, flags, out_file)
                                           : run_eval<float>(checkpoint, data, mode, scenes, flags, out_file);
      }
      return p == model::Precision::kF64 ? run_inspect<double>(checkpoint, data, scene_index, flags, out)
                                         : run_inspect<float>(checkpoint, data, scene_index, flags, out);
    }
    if (*grad) return cmd_gradcheck(config, inject_bug, out_file);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
