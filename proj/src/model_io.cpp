#include "gridgp/model_io.hpp"

#include <fstream>
#include <stdexcept>

#include "gridgp/dataset_io.hpp"

namespace gridgp {

namespace fs = std::filesystem;

nlohmann::json save_model(const GPModel& model, const fs::path& manifest_path) {
  const auto& c = model.cache();
  auto manifest = save_dataset(model.data(), manifest_path);
  const auto dir = manifest_path.parent_path();
  const auto stem = manifest_path.stem().string();

  nlohmann::json block = {{"hyperparameters", hyperparams_to_json(model.hyper())},
                          {"solver", to_json(c.solver)},
                          {"alpha", stem + ".alpha.bin"}};
  write_vector_file(dir / (stem + ".alpha.bin"), c.alpha);
  if (c.y_z) {
    block["y_z"] = stem + ".yz.bin";
    write_vector_file(dir / (stem + ".yz.bin"), *c.y_z);
  }
  manifest["model"] = block;
  write_text_atomic(manifest_path, manifest.dump(2) + "\n");
  return manifest;
}

GPModel load_model(const fs::path& manifest_path) {
  auto data = load_dataset(manifest_path);
  std::ifstream in(manifest_path);
  const auto manifest = nlohmann::json::parse(in);
  if (!manifest.contains("model") || !manifest["model"].contains("alpha"))
    throw IoError("no trained weights in " + manifest_path.string() + " (run reconstruct first)");
  const auto& block = manifest["model"];

  GPModel model(hyperparams_from_json(block.at("hyperparameters")), std::move(data));
  Vector alpha = read_vector_file(manifest_path.parent_path() / block["alpha"].get<std::string>());
  if (static_cast<std::size_t>(alpha.size()) != model.data().grid.size())
    throw IoError("stale weights: alpha length does not match the grid");
  model.restore_weights(std::move(alpha), solver_config_from_json(block.value("solver", nlohmann::json::object())));
  return model;
}

} // namespace gridgp
