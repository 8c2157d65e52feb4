#pragma once

// On-disk dataset format.
//
// A dataset is a JSON manifest plus raw binary payloads stored next to it:
//
//   {
//     "format": "gridgp-dataset", "version": 1, "d": 2,
//     "axes": [[x0...], [x1...]],
//     "mask_encoding": "u8",            one byte per cell, 1 = observed, 0 = gap
//     "paths": {"responses": "<stem>.y.bin", "mask": "<stem>.mask.bin",
//               "truth": "<stem>.truth.bin"}          (truth is optional)
//   }
//
// Responses and truth are little-endian IEEE-754 float64 in grid order
// (row-major, last axis fastest) with a quiet NaN written at every gap.
// Payload paths are relative to the manifest's directory.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridgp/grid_data.hpp"

namespace gridgp {

inline constexpr int kDatasetFormatVersion = 1;

/// Unreadable, unwritable or malformed files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_f64le(const Vector& v);
Vector decode_f64le(const std::vector<std::uint8_t>& bytes);

/// Writes via a temporary sibling file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

void write_vector_file(const std::filesystem::path& path, const Vector& v);
Vector read_vector_file(const std::filesystem::path& path);

nlohmann::json grid_to_json(const GridSpec& grid);
GridSpec grid_from_json(const nlohmann::json& j);

/// Writes `manifest_path` and its payloads. Returns the manifest JSON.
nlohmann::json save_dataset(const GappyDataset& data, const std::filesystem::path& manifest_path);
GappyDataset load_dataset(const std::filesystem::path& manifest_path);

} // namespace gridgp
