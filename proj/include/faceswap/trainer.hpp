#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "faceswap/features.hpp"
#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"
#include "faceswap/lightnet.hpp"
#include "faceswap/losses.hpp"
#include "faceswap/optim.hpp"
#include "faceswap/transformnet.hpp"

namespace faceswap {

/// Aligned faces with their landmarks in the aligned frame.
struct FaceSet {
  std::vector<Image> images;
  std::vector<LandmarkSet> landmarks;

  std::size_t size() const { return images.size(); }
};

/// Reads every X.png with a sibling X.json (landmarks), sorted by name.
FaceSet load_face_dir(const std::filesystem::path& dir, int resolution);

class StyleSet {
 public:
  StyleSet() = default;
  StyleSet(FaceSet faces, bool add_flips);

  int resolution() const;
  std::size_t size() const { return faces_.size(); }
  const Image& image(std::size_t i) const { return faces_.images[i]; }
  const std::vector<LandmarkSet>& landmarks() const { return faces_.landmarks; }

  bool has_features() const { return !features_.empty(); }
  std::uint64_t feature_fingerprint() const { return fingerprint_; }
  int patch_size() const { return patch_size_; }
  const PatchList& patches(std::size_t i, const std::string& layer) const;
  std::size_t cached_patch_lists() const;

  /// Style targets for a subset; throws when the cache belongs to another extractor.
  StyleTargets targets(const std::vector<int>& subset, const FeatureExtractor& extractor,
                       const std::vector<std::string>& layers) const;

 private:
  friend StyleSet precompute_style_features(StyleSet styles, const FeatureExtractor& extractor,
                                            const std::vector<std::string>& layers, int k);
  FaceSet faces_;
  std::vector<std::map<std::string, PatchList>> features_;
  std::uint64_t fingerprint_ = 0;
  int patch_size_ = 0;
};

StyleSet precompute_style_features(StyleSet styles, const FeatureExtractor& extractor,
                                   const std::vector<std::string>& layers, int k);

struct TrainConfig {
  int stage = 1;
  int resolution = 128;
  int iterations = 10000;
  int batch_size = 16;
  std::uint64_t seed = 0;

  AdamConfig adam;
  double lr_start = 1e-3;
  double lr_end = 1e-4;

  double alpha = 20.0;         // style weight target
  double alpha_start = 0.0;    // style weight at iteration 0
  double alpha_warmup = 0.3;   // fraction of iterations spent ramping
  std::optional<double> beta;  // calibrated on the first batch when unset
  double gamma = 0.3;

  std::optional<int> n_best;  // min(16, N) when unset
  LossLayers layers;
  bool flip_styles = true;

  NetworkSpec network = NetworkSpec::standard();
  ExtractorSpec extractor;

  std::filesystem::path lightnet;  // empty: no lighting term
  std::filesystem::path content_dir;
  std::filesystem::path style_dir;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path loss_csv;         // defaults to checkpoint_dir/loss.csv
  std::filesystem::path init_checkpoint;  // start from these weights instead of a fresh build
  int checkpoint_every = 0;               // 0: final checkpoint only

  /// Strict parse: unknown keys and out-of-range values raise ValidationError.
  /// Relative paths resolve against `base_dir`.
  static TrainConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static TrainConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  int effective_n_best(std::size_t n_styles) const;
  void validate() const;
};

ExtractorSpec extractor_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json extractor_spec_to_json(const ExtractorSpec& spec);

double style_weight_schedule(int iteration, const TrainConfig& config);
double learning_rate_schedule(int iteration, const TrainConfig& config);

struct LossRecord {
  int iteration = 0;
  LossBreakdown loss;  // batch mean
  double alpha = 0.0;
  double lr = 0.0;
};

struct IterationInfo {
  int iteration = 0;
  std::vector<int> batch;                  // content indices
  std::vector<std::vector<int>> subsets;   // style subset per batch entry
  const LossRecord* record = nullptr;
};

struct TrainData {
  const FaceSet* content = nullptr;
  const StyleSet* styles = nullptr;  // features precomputed with `extractor`
  const FeatureExtractor* extractor = nullptr;
  const LightNet* lightnet = nullptr;
};

struct TrainResult {
  TransformNet net;
  std::vector<LossRecord> curve;
  double beta = 0.0;
};

using IterationObserver = std::function<void(const IterationInfo&)>;

/// Runs one training stage on in-memory data. Writes checkpoints and the loss
/// CSV only when the config names a checkpoint directory.
TrainResult train_stage(const TrainConfig& config, TransformNet net, const TrainData& data,
                        const IterationObserver& observer = {});

/// Loads corpus, styles, extractor and lighting network from the config paths.
TrainResult train_stage(const TrainConfig& config, std::optional<TransformNet> initial = std::nullopt);

void write_loss_csv(const std::vector<LossRecord>& curve, const std::filesystem::path& path);
std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path);

}  // namespace faceswap
