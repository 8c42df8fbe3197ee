#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace faceswap {

struct TensorRecord {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> values;
};

/// Named tensors stored as a JSON manifest (`manifest.json`: name, shape,
/// dtype, byte offset) next to one flat little-endian binary (`tensors.bin`).
/// An optional `architecture.json` carries model metadata.
struct TensorArchive {
  std::vector<TensorRecord> tensors;
  nlohmann::json architecture;  // null when absent

  const TensorRecord* find(const std::string& name) const;
  const TensorRecord& at(const std::string& name) const;
};

enum class StorageType { Float32, Float64 };

/// Writes to a sibling temporary directory and renames it into place.
void write_tensor_archive(const std::filesystem::path& dir, const TensorArchive& archive,
                          StorageType dtype = StorageType::Float32);

/// Throws ValidationError for a missing or corrupt archive.
TensorArchive read_tensor_archive(const std::filesystem::path& dir);

}  // namespace faceswap
