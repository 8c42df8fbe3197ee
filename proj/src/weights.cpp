#include "faceswap/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "faceswap/error.hpp"

namespace faceswap {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "tensor archives are little-endian; big-endian hosts need byte swapping");

constexpr const char* kManifest = "manifest.json";
constexpr const char* kData = "tensors.bin";
constexpr const char* kArchitecture = "architecture.json";

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("corrupt " + path.string() + ": " + e.what());
  }
}

}  // namespace

const TensorRecord* TensorArchive::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const TensorRecord& TensorArchive::at(const std::string& name) const {
  const TensorRecord* t = find(name);
  if (!t) throw ValidationError("tensor archive has no tensor named " + name);
  return *t;
}

void write_tensor_archive(const fs::path& dir, const TensorArchive& archive, StorageType dtype) {
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  std::random_device rd;
  const fs::path tmp = parent / (dir.filename().string() + ".tmp-" + std::to_string(rd()));
  fs::create_directories(tmp);

  json manifest;
  manifest["format"] = "faceswap-tensors";
  manifest["version"] = 1;
  manifest["data"] = kData;
  manifest["tensors"] = json::array();
  {
    std::ofstream bin(tmp / kData, std::ios::binary);
    if (!bin) throw NumericalError("cannot write " + (tmp / kData).string());
    std::uint64_t offset = 0;
    for (const auto& t : archive.tensors) {
      if (element_count(t.shape) != static_cast<std::int64_t>(t.values.size()))
        throw ValidationError("tensor " + t.name + ": shape does not match value count");
      std::uint64_t nbytes = 0;
      if (dtype == StorageType::Float32) {
        std::vector<float> buf(t.values.begin(), t.values.end());
        nbytes = buf.size() * sizeof(float);
        bin.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(nbytes));
      } else {
        nbytes = t.values.size() * sizeof(double);
        bin.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(nbytes));
      }
      manifest["tensors"].push_back({{"name", t.name},
                                     {"shape", t.shape},
                                     {"dtype", dtype == StorageType::Float32 ? "float32" : "float64"},
                                     {"offset", offset},
                                     {"nbytes", nbytes}});
      offset += nbytes;
    }
    if (!bin) throw NumericalError("short write to " + (tmp / kData).string());
  }
  {
    std::ofstream out(tmp / kManifest);
    out << manifest.dump(2) << "\n";
  }
  if (!archive.architecture.is_null()) {
    std::ofstream out(tmp / kArchitecture);
    out << archive.architecture.dump(2) << "\n";
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::rename(tmp, dir);
}

TensorArchive read_tensor_archive(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("weight archive not found: " + dir.string());
  const json manifest = read_json_file(dir / kManifest);
  TensorArchive archive;
  try {
    const fs::path data_path = dir / manifest.value("data", std::string(kData));
    std::ifstream bin(data_path, std::ios::binary | std::ios::ate);
    if (!bin) throw ValidationError("missing " + data_path.string());
    const auto file_size = static_cast<std::uint64_t>(bin.tellg());
    for (const auto& entry : manifest.at("tensors")) {
      TensorRecord t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const std::string dtype = entry.at("dtype").get<std::string>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::int64_t n = element_count(t.shape);
      if (n < 0) throw ValidationError("tensor " + t.name + ": negative shape");
      std::size_t width = 0;
      if (dtype == "float32")
        width = sizeof(float);
      else if (dtype == "float64")
        width = sizeof(double);
      else
        throw ValidationError("tensor " + t.name + ": unsupported dtype " + dtype);
      const std::uint64_t nbytes = static_cast<std::uint64_t>(n) * width;
      if (offset + nbytes > file_size)
        throw ValidationError("tensor " + t.name + " extends past the end of " + data_path.string());
      bin.seekg(static_cast<std::streamoff>(offset));
      t.values.resize(static_cast<std::size_t>(n));
      if (width == sizeof(float)) {
        std::vector<float> buf(static_cast<std::size_t>(n));
        bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(nbytes));
        std::copy(buf.begin(), buf.end(), t.values.begin());
      } else {
        bin.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(nbytes));
      }
      if (!bin) throw ValidationError("short read for tensor " + t.name);
      archive.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ValidationError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  if (fs::exists(dir / kArchitecture)) archive.architecture = read_json_file(dir / kArchitecture);
  return archive;
}

}  // namespace faceswap
