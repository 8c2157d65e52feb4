#pragma once

// Trained model artifacts: a dataset manifest with an extra "model" block
//
//   "model": {"hyperparameters": {...}, "solver": {...},
//             "alpha": "<stem>.alpha.bin", "y_z": "<stem>.yz.bin"}
//
// alpha has one float64 per grid cell (zeros on gaps); y_z is present only
// for fill-gaps fits.

#include <filesystem>

#include "gridgp/gp_model.hpp"

namespace gridgp {

nlohmann::json save_model(const GPModel& model, const std::filesystem::path& manifest_path);
/// Restores data, hyperparameters and cached weights. Throws if the
/// manifest has no weights.
GPModel load_model(const std::filesystem::path& manifest_path);

} // namespace gridgp
