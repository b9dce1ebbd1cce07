#include "tqf/model/checkpoint.hpp"

#include <algorithm>

#include "tqf/core/ten_io.hpp"

namespace tqf::model {

using nlohmann::json;

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, Model<T>& model, std::size_t steps) {
  json names = json::array();
  for (const auto& p : model.store().params()) {
    io::write_ten(dir / (p.name + ".ten"), p.tensor.detach());
    names.push_back(p.name);
  }
  json vocab = json::array();
  for (const auto& [slot, token] : model.vocab().entries()) vocab.push_back({slot, token});
  json manifest{{"config", model.config().to_json()},
                {"seed", model.config().seed},
                {"steps", steps},
                {"params", names},
                {"vocab", vocab}};
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) {
  try {
    const auto manifest = json::parse(io::read_file(dir / "manifest.json"));
    return {RunConfig::from_json(manifest.at("config")), manifest.at("steps").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw ValidationError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
}

template <typename T>
void load_checkpoint(const std::filesystem::path& dir, Model<T>& model) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw ValidationError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  const auto names = manifest.at("params").get<std::vector<std::string>>();
  auto& store = model.store();
  if (names.size() != store.size()) {
    throw ValidationError("checkpoint has " + std::to_string(names.size()) + " parameters, model has " +
                          std::to_string(store.size()));
  }
  for (auto& p : store.params()) {
    if (std::find(names.begin(), names.end(), p.name) == names.end()) {
      throw ValidationError("checkpoint is missing parameter " + p.name);
    }
    const auto loaded = io::read_ten<T>(dir / (p.name + ".ten"));
    if (loaded.shape() != p.tensor.shape()) {
      throw ValidationError("parameter " + p.name + " has shape " + shape_str(loaded.shape()) + " in the checkpoint, " +
                            shape_str(p.tensor.shape()) + " in the model");
    }
    std::copy(loaded.data().begin(), loaded.data().end(), p.tensor.mutable_data().begin());
  }
  std::vector<std::pair<std::size_t, std::string>> entries;
  for (const auto& e : manifest.at("vocab")) entries.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::string>());
  model.vocab().restore(entries);
}

template void save_checkpoint(const std::filesystem::path&, Model<float>&, std::size_t);
template void save_checkpoint(const std::filesystem::path&, Model<double>&, std::size_t);
template void load_checkpoint(const std::filesystem::path&, Model<float>&);
template void load_checkpoint(const std::filesystem::path&, Model<double>&);

}  // namespace tqf::model
