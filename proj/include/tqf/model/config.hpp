#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "tqf/query/query_former.hpp"

namespace tqf::model {

enum class Precision { kF32, kF64 };
Precision parse_precision(const std::string& name);
const char* precision_name(Precision p);

struct RunConfig {
  std::size_t channels = 32;        // C
  std::size_t text_width = 64;      // D
  std::size_t embed_channels = 16;  // C1
  std::size_t n_app = 16;
  std::size_t n_intra = 8;
  std::size_t n_inter = 8;
  std::size_t topk = 8;
  std::size_t window = 3;
  std::size_t decoder_rounds = 3;
  double lambda_v = 1.0;
  double lambda_f = 1.0;
  double lambda_con = 0.5;
  double lr = 5e-5;
  double weight_decay = 1e-4;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF32;
  bool scale_logits = true;
  query::PoolScope pool_scope = query::PoolScope::kGlobal;
  bool consistency_divide_by_frames = false;

  // Ablations, applied at forward time.
  bool no_iia = false;
  bool no_ima = false;
  bool no_traj = false;
  bool no_rpe = false;

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

}  // namespace tqf::model
