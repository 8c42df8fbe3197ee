#include "faceswap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "faceswap/error.hpp"

namespace faceswap {
namespace fs = std::filesystem;
using nlohmann::json;

FaceSet load_face_dir(const fs::path& dir, int resolution) {
  require(fs::is_directory(dir), "face directory not found: " + dir.string());
  std::vector<fs::path> pngs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") pngs.push_back(entry.path());
  std::sort(pngs.begin(), pngs.end());
  FaceSet set;
  for (const auto& png : pngs) {
    fs::path lm = png;
    lm.replace_extension(".json");
    if (!fs::exists(lm)) continue;
    Image img = load_image(png);
    require(img.height() == resolution && img.width() == resolution,
            png.string() + ": expected " + std::to_string(resolution) + "x" + std::to_string(resolution) +
                " aligned image");
    set.images.push_back(std::move(img));
    set.landmarks.push_back(load_landmarks(lm));
  }
  require(!set.images.empty(), "no image/landmark pairs in " + dir.string());
  return set;
}

StyleSet::StyleSet(FaceSet faces, bool add_flips) : faces_(std::move(faces)) {
  require(faces_.images.size() == faces_.landmarks.size(), "style images and landmarks differ in count");
  require(!faces_.images.empty(), "style set is empty");
  const int r = faces_.images.front().height();
  for (const auto& img : faces_.images)
    require(img.height() == r && img.width() == r, "style images must share one square resolution");
  if (!add_flips) return;
  const std::size_t n = faces_.images.size();
  for (std::size_t i = 0; i < n; ++i) {
    faces_.images.push_back(flip_horizontal(faces_.images[i]));
    faces_.landmarks.push_back(mirror_landmarks(faces_.landmarks[i], r));
  }
}

int StyleSet::resolution() const { return faces_.images.empty() ? 0 : faces_.images.front().height(); }

const PatchList& StyleSet::patches(std::size_t i, const std::string& layer) const {
  require(i < features_.size(), "style features not precomputed");
  const auto it = features_[i].find(layer);
  require(it != features_[i].end(), "no cached style features for layer " + layer);
  return it->second;
}

std::size_t StyleSet::cached_patch_lists() const {
  std::size_t n = 0;
  for (const auto& m : features_) n += m.size();
  return n;
}

StyleTargets StyleSet::targets(const std::vector<int>& subset, const FeatureExtractor& extractor,
                               const std::vector<std::string>& layers) const {
  require(has_features() && fingerprint_ == extractor.fingerprint(),
          "style feature cache does not match the current extractor");
  StyleTargets t;
  for (const auto& layer : layers) {
    StylePatches& list = t[layer];
    for (int j : subset) {
      require(j >= 0 && static_cast<std::size_t>(j) < size(), "style index out of range");
      list.push_back(&patches(j, layer));
    }
  }
  return t;
}

StyleSet precompute_style_features(StyleSet styles, const FeatureExtractor& extractor,
                                   const std::vector<std::string>& layers, int k) {
  require(styles.size() > 0, "style set is empty");
  require(k >= 1, "patch size must be at least 1");
  styles.features_.clear();
  styles.features_.reserve(styles.size());
  for (std::size_t i = 0; i < styles.size(); ++i) {
    const FeatureMaps maps = extractor.extract(styles.image(i), layers);
    std::map<std::string, PatchList> per_layer;
    for (const auto& layer : layers) per_layer.emplace(layer, extract_patches(maps.at(layer), k));
    styles.features_.push_back(std::move(per_layer));
  }
  styles.fingerprint_ = extractor.fingerprint();
  styles.patch_size_ = k;
  return styles;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    require(allowed.count(key) > 0, "unknown key '" + key + "' in " + where);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string path_string(const fs::path& p) { return p.empty() ? std::string() : p.string(); }

}  // namespace

ExtractorSpec extractor_spec_from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, {"type", "weights", "seed", "channels", "bias"}, "extractor");
  const std::string type = j.at("type").get<std::string>();
  if (type == "vgg19") {
    require(j.contains("weights"), "extractor type vgg19 needs 'weights'");
    return ExtractorSpec::vgg19(resolve(base_dir, j.at("weights").get<std::string>()));
  }
  require(type == "random", "extractor type must be 'vgg19' or 'random'");
  ExtractorSpec spec = ExtractorSpec::small_random(j.value("seed", std::uint64_t{0}), j.value("bias", true));
  if (j.contains("channels")) {
    const auto ch = j.at("channels").get<std::vector<int>>();
    require(ch.size() == 5, "extractor channels must list 5 stage widths");
    for (int c : ch) require(c >= 1, "extractor channels must be positive");
    std::copy(ch.begin(), ch.end(), spec.stage_channels.begin());
  }
  return spec;
}

json extractor_spec_to_json(const ExtractorSpec& spec) {
  if (spec.source == ExtractorSpec::Source::Pretrained)
    return {{"type", "vgg19"}, {"weights", spec.weights.string()}};
  return {{"type", "random"},
          {"seed", spec.seed},
          {"channels", std::vector<int>(spec.stage_channels.begin(), spec.stage_channels.end())},
          {"bias", spec.with_bias}};
}

TrainConfig TrainConfig::from_json(const json& j, const fs::path& base_dir) {
  TrainConfig c;
  try {
    check_keys(j,
               {"stage", "resolution", "iterations", "batch_size", "seed", "optimizer", "loss", "n_best",
                "patch_size", "content_layers", "style_layers", "flip_styles", "network", "extractor",
                "lightnet", "content_dir", "style_dir", "checkpoint_dir", "loss_csv", "init_checkpoint",
                "checkpoint_every"},
               "training config");
    c.stage = j.value("stage", c.stage);
    c.resolution = j.value("resolution", c.resolution);
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      check_keys(o, {"beta1", "beta2", "epsilon", "lr_start", "lr_end"}, "optimizer");
      c.adam.beta1 = o.value("beta1", c.adam.beta1);
      c.adam.beta2 = o.value("beta2", c.adam.beta2);
      c.adam.epsilon = o.value("epsilon", c.adam.epsilon);
      c.lr_start = o.value("lr_start", c.lr_start);
      c.lr_end = o.value("lr_end", c.lr_end);
    }
    if (c.stage == 2) c.alpha = 80.0;
    if (j.contains("loss")) {
      const json& l = j.at("loss");
      check_keys(l, {"alpha", "alpha_start", "alpha_warmup", "beta", "gamma"}, "loss");
      c.alpha = l.value("alpha", c.alpha);
      c.alpha_start = l.value("alpha_start", c.alpha_start);
      c.alpha_warmup = l.value("alpha_warmup", c.alpha_warmup);
      if (l.contains("beta") && !l.at("beta").is_null()) c.beta = l.at("beta").get<double>();
      c.gamma = l.value("gamma", c.gamma);
    }
    if (j.contains("n_best") && !j.at("n_best").is_null()) c.n_best = j.at("n_best").get<int>();
    c.layers.patch_size = j.value("patch_size", c.layers.patch_size);
    c.layers.content = j.value("content_layers", c.layers.content);
    c.layers.style = j.value("style_layers", c.layers.style);
    c.flip_styles = j.value("flip_styles", c.flip_styles);
    if (j.contains("network")) {
      const json& n = j.at("network");
      if (n.is_string()) {
        const std::string name = n.get<std::string>();
        if (name == "standard") c.network = NetworkSpec::standard();
        else if (name == "compact") c.network = NetworkSpec::compact();
        else throw ValidationError("network must be 'standard', 'compact' or a branch list");
      } else {
        c.network = NetworkSpec::from_json(n);
      }
    }
    if (j.contains("extractor")) c.extractor = extractor_spec_from_json(j.at("extractor"), base_dir);
    auto path_field = [&](const char* key) -> fs::path {
      if (!j.contains(key) || j.at(key).is_null()) return {};
      return resolve(base_dir, j.at(key).get<std::string>());
    };
    c.lightnet = path_field("lightnet");
    c.content_dir = path_field("content_dir");
    c.style_dir = path_field("style_dir");
    c.checkpoint_dir = path_field("checkpoint_dir");
    c.loss_csv = path_field("loss_csv");
    c.init_checkpoint = path_field("init_checkpoint");
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

json TrainConfig::to_json() const {
  json j = {{"stage", stage},
            {"resolution", resolution},
            {"iterations", iterations},
            {"batch_size", batch_size},
            {"seed", seed},
            {"optimizer",
             {{"beta1", adam.beta1},
              {"beta2", adam.beta2},
              {"epsilon", adam.epsilon},
              {"lr_start", lr_start},
              {"lr_end", lr_end}}},
            {"loss",
             {{"alpha", alpha},
              {"alpha_start", alpha_start},
              {"alpha_warmup", alpha_warmup},
              {"beta", beta ? json(*beta) : json(nullptr)},
              {"gamma", gamma}}},
            {"n_best", n_best ? json(*n_best) : json(nullptr)},
            {"patch_size", layers.patch_size},
            {"content_layers", layers.content},
            {"style_layers", layers.style},
            {"flip_styles", flip_styles},
            {"network", network.to_json()},
            {"extractor", extractor_spec_to_json(extractor)},
            {"checkpoint_every", checkpoint_every}};
  auto put = [&](const char* key, const fs::path& p) {
    if (!p.empty()) j[key] = path_string(p);
  };
  put("lightnet", lightnet);
  put("content_dir", content_dir);
  put("style_dir", style_dir);
  put("checkpoint_dir", checkpoint_dir);
  put("loss_csv", loss_csv);
  put("init_checkpoint", init_checkpoint);
  return j;
}

int TrainConfig::effective_n_best(std::size_t n_styles) const {
  require(n_styles >= 1, "style set is empty");
  const int n = static_cast<int>(n_styles);
  if (!n_best) return std::min(16, n);
  require(*n_best <= n, "n_best (" + std::to_string(*n_best) + ") exceeds the style set size (" +
                            std::to_string(n) + ")");
  return *n_best;
}

void TrainConfig::validate() const {
  require(stage == 1 || stage == 2, "stage must be 1 or 2");
  require(resolution >= 8 && (resolution & (resolution - 1)) == 0, "resolution must be a power of two >= 8");
  require(iterations >= 1, "iterations must be at least 1");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1,
          "Adam decay rates must lie in [0, 1)");
  require(adam.epsilon > 0, "Adam epsilon must be positive");
  require(std::isfinite(lr_start) && lr_end > 0 && lr_start >= lr_end,
          "learning rates must satisfy lr_start >= lr_end > 0");
  require(alpha >= 0 && alpha_start >= 0 && std::isfinite(alpha) && std::isfinite(alpha_start),
          "alpha must be finite and nonnegative");
  require(alpha_warmup >= 0 && alpha_warmup <= 1, "alpha_warmup must lie in [0, 1]");
  require(!beta || (*beta >= 0 && std::isfinite(*beta)), "beta must be finite and nonnegative");
  require(gamma >= 0 && std::isfinite(gamma), "gamma must be finite and nonnegative");
  require(!n_best || *n_best >= 1, "n_best must be at least 1");
  require(layers.patch_size >= 1 && layers.patch_size % 2 == 1, "patch_size must be a positive odd integer");
  require(!layers.content.empty(), "at least one content layer is required");
  require(!layers.style.empty(), "at least one style layer is required");
  for (const auto& l : layers.content) extractor.layer(l);
  for (const auto& l : layers.style) extractor.layer(l);
  require(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
  require(!network.branches.empty(), "network spec has no branches");
}

double style_weight_schedule(int iteration, const TrainConfig& config) {
  require(iteration >= 0, "iteration must be nonnegative");
  const double warm = config.alpha_warmup * config.iterations;
  if (warm <= 0 || iteration >= warm) return config.alpha;
  return config.alpha_start + (config.alpha - config.alpha_start) * (iteration / warm);
}

double learning_rate_schedule(int iteration, const TrainConfig& config) {
  if (config.iterations <= 1) return config.lr_start;
  const double t = std::clamp(static_cast<double>(iteration) / (config.iterations - 1), 0.0, 1.0);
  return config.lr_start + (config.lr_end - config.lr_start) * t;
}

// ---------------------------------------------------------------------------
// Loss curves

void write_loss_csv(const std::vector<LossRecord>& curve, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    require(out.good(), "cannot write " + tmp.string());
    out << "iteration,content,style,light,tv,total,alpha,lr\n";
    char line[512];
    for (const auto& r : curve) {
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration,
                    r.loss.content, r.loss.style, r.loss.light, r.loss.tv, r.loss.total, r.alpha, r.lr);
      out << line;
    }
    require(out.good(), "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<LossRecord> read_loss_csv(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "iteration,content,style,light,tv,total,alpha,lr", path.string() + ": unexpected header");
  std::vector<LossRecord> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRecord r;
    char comma;
    std::istringstream s(line);
    s >> r.iteration >> comma >> r.loss.content >> comma >> r.loss.style >> comma >> r.loss.light >> comma >>
        r.loss.tv >> comma >> r.loss.total >> comma >> r.alpha >> comma >> r.lr;
    require(!s.fail(), path.string() + ": malformed row '" + line + "'");
    curve.push_back(r);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::string iteration_dir(int it) {
  char name[32];
  std::snprintf(name, sizeof name, "iter_%06d", it);
  return name;
}

void write_state(const fs::path& dir, const TrainConfig& config, int iterations_done, double beta) {
  fs::create_directories(dir);
  const fs::path tmp = dir / "train_state.json.tmp";
  {
    std::ofstream out(tmp);
    require(out.good(), "cannot write " + tmp.string());
    out << json{{"iterations_done", iterations_done}, {"beta", beta}, {"config", config.to_json()}}.dump(2)
        << "\n";
  }
  fs::rename(tmp, dir / "train_state.json");
}

void check_finite(const LossBreakdown& b, int iteration) {
  if (std::isfinite(b.total)) return;
  char msg[256];
  std::snprintf(msg, sizeof msg,
                "non-finite loss at iteration %d (content=%g style=%g light=%g tv=%g)", iteration, b.content,
                b.style, b.light, b.tv);
  throw NumericalError(msg);
}

}  // namespace

TrainResult train_stage(const TrainConfig& config, TransformNet net, const TrainData& data,
                        const IterationObserver& observer) {
  config.validate();
  require(data.content && data.styles && data.extractor, "training data is incomplete");
  const FaceSet& content = *data.content;
  const StyleSet& styles = *data.styles;
  const FeatureExtractor& extractor = *data.extractor;
  require(content.size() > 0, "content corpus is empty");
  require(styles.size() > 0, "style set is empty");
  require(net.resolution() == config.resolution, "network resolution does not match the stage resolution");
  require(styles.resolution() == config.resolution, "style images do not match the stage resolution");
  for (const auto& img : content.images)
    require(img.height() == config.resolution && img.width() == config.resolution,
            "content images do not match the stage resolution");
  require(styles.has_features() && styles.patch_size() == config.layers.patch_size &&
              styles.feature_fingerprint() == extractor.fingerprint(),
          "style features must be precomputed with the training extractor and patch size");
  if (data.lightnet)
    require(data.lightnet->resolution() == config.resolution,
            "lighting network resolution does not match the stage resolution");
  require(!(config.beta && *config.beta > 0 && !data.lightnet), "beta > 0 requires a lighting network");
  const int n_best = config.effective_n_best(styles.size());

  // Content-layer features of the corpus never change during a stage.
  std::vector<FeatureMaps> content_features;
  content_features.reserve(content.size());
  for (const auto& img : content.images) content_features.push_back(extractor.extract(img, config.layers.content));

  std::mt19937_64 rng(config.seed);
  std::vector<int> order(content.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto next_index = [&] {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  LossContext ctx;
  ctx.extractor = &extractor;
  ctx.lightnet = data.lightnet;
  ctx.layers = config.layers;

  TrainResult result{std::move(net), {}, 0.0};
  TransformNet& model = result.net;
  bool beta_known = config.beta.has_value() || !data.lightnet;
  double beta = config.beta.value_or(0.0);
  if (!data.lightnet) beta = 0.0;

  Adam adam(config.adam);
  const bool persist = !config.checkpoint_dir.empty();
  const fs::path csv = config.loss_csv.empty() ? config.checkpoint_dir / "loss.csv" : config.loss_csv;
  const double inv_batch = 1.0 / config.batch_size;

  for (int it = 0; it < config.iterations; ++it) {
    IterationInfo info;
    info.iteration = it;
    for (int b = 0; b < config.batch_size; ++b) {
      const int idx = next_index();
      info.batch.push_back(idx);
      info.subsets.push_back(select_style_subset(content.landmarks[idx], styles.landmarks(), n_best));
    }

    std::vector<TransformNet::Trace> traces(info.batch.size());
    std::vector<Tensor> outputs(info.batch.size());
    for (std::size_t b = 0; b < info.batch.size(); ++b)
      outputs[b] = model.forward(content.images[info.batch[b]].tensor(), &traces[b]);

    if (!beta_known) {
      // Scale the lighting term to the content term on the first batch.
      double content_sum = 0, light_sum = 0;
      for (std::size_t b = 0; b < info.batch.size(); ++b) {
        const int idx = info.batch[b];
        ctx.content_features = &content_features[idx];
        const LossEvaluation ev = evaluate_loss(outputs[b], content.images[idx].tensor(),
                                                styles.targets(info.subsets[b], extractor, config.layers.style),
                                                {0.0, 1.0, 0.0}, ctx);
        content_sum += ev.breakdown.content;
        light_sum += ev.breakdown.light;
      }
      beta = light_sum > 0 && content_sum > 0 ? content_sum / light_sum : 1.0;
      require(std::isfinite(beta), "beta calibration produced a non-finite value");
      beta_known = true;
    }

    LossRecord rec;
    rec.iteration = it;
    rec.alpha = style_weight_schedule(it, config);
    rec.lr = learning_rate_schedule(it, config);
    const LossWeights weights{rec.alpha, beta, config.gamma};

    TransformNet::Gradients grads = model.zero_gradients();
    for (std::size_t b = 0; b < info.batch.size(); ++b) {
      const int idx = info.batch[b];
      ctx.content_features = &content_features[idx];
      LossEvaluation ev = evaluate_loss(outputs[b], content.images[idx].tensor(),
                                        styles.targets(info.subsets[b], extractor, config.layers.style), weights,
                                        ctx, GradientMode::Total);
      check_finite(ev.breakdown, it);
      rec.loss.content += inv_batch * ev.breakdown.content;
      rec.loss.style += inv_batch * ev.breakdown.style;
      rec.loss.light += inv_batch * ev.breakdown.light;
      rec.loss.tv += inv_batch * ev.breakdown.tv;
      ev.grad_total *= inv_batch;
      model.backward(traces[b], ev.grad_total, grads);
    }
    rec.loss.total = rec.loss.content + rec.alpha * rec.loss.style + beta * rec.loss.light +
                     config.gamma * rec.loss.tv;
    check_finite(rec.loss, it);

    auto grad_refs = model.gradient_refs(grads);
    for (const auto* g : grad_refs)
      for (double v : *g)
        if (!std::isfinite(v)) throw NumericalError("non-finite gradient at iteration " + std::to_string(it));
    adam.step(model.parameters(), grad_refs, rec.lr);

    result.curve.push_back(rec);
    info.record = &result.curve.back();
    if (observer) observer(info);

    const int done = it + 1;
    if (persist && config.checkpoint_every > 0 && done % config.checkpoint_every == 0 &&
        done != config.iterations) {
      model.save(config.checkpoint_dir / iteration_dir(done));
      write_loss_csv(result.curve, csv);
      write_state(config.checkpoint_dir, config, done, beta);
    }
  }

  result.beta = beta;
  if (persist) {
    model.save(config.checkpoint_dir / "final");
    write_loss_csv(result.curve, csv);
    write_state(config.checkpoint_dir, config, config.iterations, beta);
  }
  return result;
}

TrainResult train_stage(const TrainConfig& config, std::optional<TransformNet> initial) {
  config.validate();
  require(!config.content_dir.empty(), "config needs content_dir");
  require(!config.style_dir.empty(), "config needs style_dir");
  const FaceSet content = load_face_dir(config.content_dir, config.resolution);
  const FeatureExtractor extractor = FeatureExtractor::load(config.extractor);
  const StyleSet styles =
      precompute_style_features(StyleSet(load_face_dir(config.style_dir, config.resolution), config.flip_styles),
                                extractor, config.layers.style, config.layers.patch_size);
  std::optional<LightNet> lightnet;
  if (!config.lightnet.empty()) lightnet = LightNet::load(config.lightnet);

  TransformNet net = initial                            ? std::move(*initial)
                     : !config.init_checkpoint.empty() ? TransformNet::load(config.init_checkpoint)
                                                       : TransformNet::build(config.resolution, config.network,
                                                                             config.seed);
  TrainData data{&content, &styles, &extractor, lightnet ? &*lightnet : nullptr};
  return train_stage(config, std::move(net), data);
}

}  // namespace faceswap
