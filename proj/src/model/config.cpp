#include "tqf/model/config.hpp"

#include <set>

#include "tqf/core/ten_io.hpp"

namespace tqf::model {

using nlohmann::json;

Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::kF32;
  if (name == "f64") return Precision::kF64;
  throw ValidationError("precision must be f32 or f64, got '" + name + "'");
}

const char* precision_name(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

void RunConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ValidationError(std::string(name) + " must be positive");
  };
  positive(channels, "channels");
  positive(text_width, "text_width");
  positive(embed_channels, "embed_channels");
  positive(n_app, "n_app");
  positive(n_intra, "n_intra");
  positive(n_inter, "n_inter");
  positive(topk, "topk");
  positive(decoder_rounds, "decoder_rounds");
  if (window % 2 == 0) throw ValidationError("window must be odd");
  for (double l : {lambda_v, lambda_f, lambda_con}) {
    if (!(l >= 0) || !std::isfinite(l)) throw ValidationError("loss weights must be finite and non-negative");
  }
  if (!(lr >= 0) || !std::isfinite(lr)) throw ValidationError("lr must be finite and non-negative");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) throw ValidationError("weight_decay must be >= 0");
}

json RunConfig::to_json() const {
  return json{{"channels", channels},
              {"text_width", text_width},
              {"embed_channels", embed_channels},
              {"n_app", n_app},
              {"n_intra", n_intra},
              {"n_inter", n_inter},
              {"topk", topk},
              {"window", window},
              {"decoder_rounds", decoder_rounds},
              {"lambda_v", lambda_v},
              {"lambda_f", lambda_f},
              {"lambda_con", lambda_con},
              {"lr", lr},
              {"weight_decay", weight_decay},
              {"steps", steps},
              {"seed", seed},
              {"precision", precision_name(precision)},
              {"scale_logits", scale_logits},
              {"pool_scope", pool_scope == query::PoolScope::kGlobal ? "global" : "per_track"},
              {"consistency_divide_by_frames", consistency_divide_by_frames},
              {"no_iia", no_iia},
              {"no_ima", no_ima},
              {"no_traj", no_traj},
              {"no_rpe", no_rpe}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("channels", c.channels);
    get("text_width", c.text_width);
    get("embed_channels", c.embed_channels);
    get("n_app", c.n_app);
    get("n_intra", c.n_intra);
    get("n_inter", c.n_inter);
    get("topk", c.topk);
    get("window", c.window);
    get("decoder_rounds", c.decoder_rounds);
    get("lambda_v", c.lambda_v);
    get("lambda_f", c.lambda_f);
    get("lambda_con", c.lambda_con);
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("steps", c.steps);
    get("seed", c.seed);
    get("scale_logits", c.scale_logits);
    get("consistency_divide_by_frames", c.consistency_divide_by_frames);
    get("no_iia", c.no_iia);
    get("no_ima", c.no_ima);
    get("no_traj", c.no_traj);
    get("no_rpe", c.no_rpe);
    if (j.contains("precision")) c.precision = parse_precision(j.at("precision").get<std::string>());
    if (j.contains("pool_scope")) {
      const auto s = j.at("pool_scope").get<std::string>();
      if (s == "global") {
        c.pool_scope = query::PoolScope::kGlobal;
      } else if (s == "per_track") {
        c.pool_scope = query::PoolScope::kPerTrack;
      } else {
        throw ValidationError("pool_scope must be global or per_track");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  try {
    return from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw ValidationError("cannot parse config " + path + ": " + e.what());
  }
}

}  // namespace tqf::model
