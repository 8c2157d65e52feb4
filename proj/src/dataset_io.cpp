#include "gridgp/dataset_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace gridgp {

namespace fs = std::filesystem;

std::vector<std::uint8_t> encode_f64le(const Vector& v) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(v.size()) * 8);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(v[i]);
    for (int b = 0; b < 8; ++b)
      out[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(b)] =
          static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

Vector decode_f64le(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 8 != 0) throw IoError("float64 payload length is not a multiple of 8");
  Vector v(static_cast<Eigen::Index>(bytes.size() / 8));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(b)])
              << (8 * b);
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_vector_file(const fs::path& path, const Vector& v) {
  write_file_atomic(path, encode_f64le(v));
}

Vector read_vector_file(const fs::path& path) { return decode_f64le(read_file_bytes(path)); }

nlohmann::json grid_to_json(const GridSpec& grid) { return grid.axes(); }

GridSpec grid_from_json(const nlohmann::json& j) {
  return GridSpec(j.get<std::vector<std::vector<double>>>());
}

nlohmann::json save_dataset(const GappyDataset& data, const fs::path& manifest_path) {
  data.validate();
  const auto dir = manifest_path.parent_path();
  const auto stem = manifest_path.stem().string();

  nlohmann::json paths = {{"responses", stem + ".y.bin"}, {"mask", stem + ".mask.bin"}};
  if (data.y_full_oracle) paths["truth"] = stem + ".truth.bin";

  write_vector_file(dir / paths["responses"].get<std::string>(),
                    data.y_on_grid(std::numeric_limits<double>::quiet_NaN()));
  write_file_atomic(dir / paths["mask"].get<std::string>(), data.idx.mask());
  if (data.y_full_oracle) write_vector_file(dir / paths["truth"].get<std::string>(), *data.y_full_oracle);

  nlohmann::json manifest = {
      {"format", "gridgp-dataset"},
      {"version", kDatasetFormatVersion},
      {"d", data.grid.dims()},
      {"axes", grid_to_json(data.grid)},
      {"mask_encoding", "u8"},
      {"paths", paths},
  };
  write_text_atomic(manifest_path, manifest.dump(2) + "\n");
  return manifest;
}

GappyDataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open dataset manifest " + manifest_path.string());
  const auto manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "gridgp-dataset")
    throw IoError("not a gridgp dataset manifest: " + manifest_path.string());
  if (manifest.at("version").get<int>() != kDatasetFormatVersion)
    throw IoError("unsupported dataset version");
  if (manifest.value("mask_encoding", "u8") != "u8")
    throw IoError("unsupported mask encoding");

  const auto dir = manifest_path.parent_path();
  GappyDataset data;
  data.grid = grid_from_json(manifest.at("axes"));
  if (manifest.at("d").get<std::size_t>() != data.grid.dims())
    throw IoError("manifest d does not match axis count");

  const auto& paths = manifest.at("paths");
  const auto mask = read_file_bytes(dir / paths.at("mask").get<std::string>());
  if (mask.size() != data.grid.size()) throw IoError("mask payload has wrong length");
  data.idx = IndexSets::from_mask(mask);

  const Vector y = read_vector_file(dir / paths.at("responses").get<std::string>());
  if (static_cast<std::size_t>(y.size()) != data.grid.size())
    throw IoError("response payload has wrong length");
  data.y_obs = select(y, data.idx.observed());

  if (paths.contains("truth")) {
    Vector truth = read_vector_file(dir / paths.at("truth").get<std::string>());
    if (static_cast<std::size_t>(truth.size()) != data.grid.size())
      throw IoError("truth payload has wrong length");
    data.y_full_oracle = std::move(truth);
  }
  data.validate();
  return data;
}

} // namespace gridgp
