#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "faceswap/baseline.hpp"
#include "faceswap/error.hpp"
#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"
#include "faceswap/lightnet.hpp"
#include "faceswap/pipeline.hpp"
#include "faceswap/synthetic.hpp"
#include "faceswap/trainer.hpp"
#include "faceswap/transformnet.hpp"
#include "faceswap/verify.hpp"

namespace fs = std::filesystem;
using namespace faceswap;
using nlohmann::json;

namespace {

fs::path root_dir() { return verify::default_root(); }

ReferenceFace reference_or_default(const std::string& path) {
  return load_reference(path.empty() ? root_dir() / "fixtures" / "reference_face.json" : fs::path(path));
}

ReferenceFace at_resolution(const ReferenceFace& ref, int resolution) {
  return ref.resolution == resolution ? ref : ref.rescaled(resolution);
}

int cmd_align(const std::string& input, const std::string& landmarks, const std::string& reference,
              const std::string& out, const std::string& transform) {
  const AlignedFace aligned = align_face(load_image(input), load_landmarks(landmarks), load_reference(reference));
  save_image(aligned.image, out);
  if (!transform.empty()) save_transform(aligned.to_reference, transform);
  return 0;
}

struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::string checkpoint_dir;
  std::string loss_csv;
};

int cmd_train(const std::string& config_path, const std::string& resume, const TrainOverrides& over) {
  TrainConfig config = TrainConfig::load(config_path);
  if (over.seed) config.seed = *over.seed;
  if (over.iterations) config.iterations = *over.iterations;
  if (!over.checkpoint_dir.empty()) config.checkpoint_dir = over.checkpoint_dir;
  if (!over.loss_csv.empty()) config.loss_csv = over.loss_csv;
  config.validate();
  std::optional<TransformNet> initial;
  if (!resume.empty()) initial = TransformNet::load(resume);
  const TrainResult result = train_stage(config, std::move(initial));
  const auto& last = result.curve.back();
  std::printf("trained %d iterations; final total %.6g (content %.6g, style %.6g, light %.6g, tv %.6g); beta %.6g\n",
              config.iterations, last.loss.total, last.loss.content, last.loss.style, last.loss.light,
              last.loss.tv, result.beta);
  if (config.checkpoint_dir.empty())
    std::fprintf(stderr, "warning: no checkpoint_dir in config, nothing written\n");
  return 0;
}

int cmd_grow(const std::string& checkpoint, const std::string& out, int resolution, std::uint64_t seed) {
  const TransformNet net = TransformNet::load(checkpoint);
  const int target = resolution > 0 ? resolution : 2 * net.resolution();
  const TransformNet grown = net.grow(target, seed);
  grown.save(out);
  std::printf("grew %d -> %d: %zu parameters, %zu frozen\n", net.resolution(), target, grown.param_count(),
              grown.frozen_param_count());
  return 0;
}

int cmd_swap(const std::string& model, const std::string& input, const std::string& landmarks,
             const std::string& mask, const std::string& reference, const std::string& out) {
  const TransformNet net = TransformNet::load(model);
  const ReferenceFace ref = at_resolution(reference_or_default(reference), net.resolution());
  SwapDiagnostics diag;
  const Image result =
      swap(load_image(input), FixedLandmarks(load_landmarks(landmarks)), load_mask(mask), net, ref, &diag);
  save_image(result, out);
  if (diag.poisson.clamp_displacement > 0.05)
    std::fprintf(stderr, "warning: compositing clamp moved pixels by up to %.3f\n", diag.poisson.clamp_displacement);
  return 0;
}

int cmd_baseline(const std::string& styledir, const std::string& input, const std::string& landmarks,
                 const std::string& mask, const std::string& reference, const std::string& out, bool flips) {
  const ReferenceFace base = reference_or_default(reference);
  // Style images fix the working resolution.
  std::optional<int> res;
  for (const auto& e : fs::directory_iterator(styledir))
    if (e.path().extension() == ".png") {
      res = load_image(e.path()).height();
      break;
    }
  require(res.has_value(), "no style images in " + styledir);
  const StyleSet styles(load_face_dir(styledir, *res), flips);
  const BaselineResult r =
      baseline_swap(load_image(input), load_landmarks(landmarks), styles, load_mask(mask), at_resolution(base, *res));
  save_image(r.output, out);
  std::printf("selected style image %d of %zu\n", r.selected, styles.size());
  return 0;
}

int cmd_lightnet_gen(const std::string& out, std::uint64_t seed, int resolution, int train_pairs, int held_out) {
  const RelightingSet set = generate_relighting_set(resolution, seed);
  write_relighting_dataset(set, out, seed, train_pairs, held_out);
  std::printf("wrote %zu renderings (%d identities x %d poses x %d lights) to %s\n", set.images.size(),
              set.identities, set.poses, set.lights, out.c_str());
  return 0;
}

int cmd_lightnet_train(const std::string& data, const std::string& config_path, const std::string& out_override) {
  std::ifstream in(config_path);
  require(in.good(), "cannot open config " + config_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(config_path + ": invalid JSON: " + e.what());
  }
  require(j.is_object(), "lighting config must be a JSON object");
  static const std::set<std::string> allowed = {"resolution", "channels", "embedding_dim", "epochs", "batch_size",
                                                "lr_start",   "lr_end",   "margin",        "seed",   "out"};
  for (const auto& [key, _] : j.items()) require(allowed.count(key) > 0, "unknown key '" + key + "' in lighting config");
  LightTrainConfig config;
  fs::path out;
  try {
    config.net.resolution = j.value("resolution", config.net.resolution);
    if (j.contains("channels")) {
      const auto ch = j.at("channels").get<std::vector<int>>();
      require(ch.size() == 4, "lighting network needs 4 channel widths");
      std::copy(ch.begin(), ch.end(), config.net.channels.begin());
    }
    config.net.embedding_dim = j.value("embedding_dim", config.net.embedding_dim);
    config.epochs = j.value("epochs", config.epochs);
    config.batch_size = j.value("batch_size", config.batch_size);
    config.lr_start = j.value("lr_start", config.lr_start);
    config.lr_end = j.value("lr_end", config.lr_end);
    config.margin = j.value("margin", config.margin);
    config.seed = j.value("seed", config.seed);
    config.net.seed = config.seed;
    if (j.contains("out")) out = fs::path(config_path).parent_path() / j.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed lighting config: ") + e.what());
  }
  if (!out_override.empty()) out = out_override;
  require(!out.empty(), "lighting config needs 'out' (or pass --out)");
  const auto train = read_lighting_pairs(data, "train");
  require(!train.empty() && train.front().a.height() == config.net.resolution,
          "dataset resolution does not match the configured lighting network");
  const LightTrainResult result = train_lightnet(train, config);
  result.net.save(out);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    std::printf("epoch %zu: loss %.6f\n", e + 1, result.epoch_loss[e]);
  const auto held = read_lighting_pairs(data, "held_out");
  if (!held.empty()) {
    const SeparationStats s = lighting_separation(result.net, held);
    std::printf("held-out distance: same %.4f, different %.4f, ratio %.2f\n", s.same_mean, s.different_mean,
                s.ratio());
  }
  return 0;
}

int cmd_toy_data(const std::string& out, int resolution, int n_content, int n_styles, std::uint64_t seed) {
  const synth::ToyCorpus toy = synth::make_toy_corpus(resolution, n_content, n_styles, seed);
  synth::write_face_dir(toy.content, fs::path(out) / "content");
  synth::write_face_dir(toy.styles, fs::path(out) / "styles");
  std::printf("wrote %d content and %d style faces at %dx%d to %s\n", n_content, n_styles, resolution, resolution,
              out.c_str());
  return 0;
}

int cmd_verify(const std::string& suite, const std::string& root, std::uint64_t seed, const std::vector<int>& only) {
  verify::Context ctx;
  ctx.root = root.empty() ? root_dir() : fs::path(root);
  ctx.seed = seed;
  const auto results = verify::run_suite(suite, ctx, std::cout, only);
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (results.size() - failed) << "/" << results.size() << " passed" << std::endl;
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face swapping as feed-forward style transfer"};
  app.require_subcommand(1);

  std::string input, landmarks, reference, out, transform, mask, model, config, resume, checkpoint, styledir, data,
      suite = "all", root;
  std::uint64_t seed = 0;
  TrainOverrides train_over;
  int resolution = 0, train_pairs = 512, held_out = 256, n_content = 8, n_styles = 4;
  bool no_flip = false;
  std::vector<int> only;

  auto* align = app.add_subcommand("align", "Align a face to the reference frame");
  align->add_option("--input", input, "Input PNG")->required();
  align->add_option("--landmarks", landmarks, "Landmark JSON")->required();
  align->add_option("--reference", reference, "Reference face JSON")->required();
  align->add_option("--out", out, "Aligned PNG")->required();
  align->add_option("--transform", transform, "Forward transform JSON");

  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--config", config, "Training config JSON")->required();
  train->add_option("--resume", resume, "Start from this checkpoint");
  train->add_option("--seed", train_over.seed, "Override the config seed");
  train->add_option("--iterations", train_over.iterations, "Override the iteration count");
  train->add_option("--checkpoint-dir", train_over.checkpoint_dir, "Override the checkpoint directory");
  train->add_option("--loss-csv", train_over.loss_csv, "Override the loss curve path");

  auto* grow = app.add_subcommand("grow", "Add a branch at twice the resolution");
  grow->add_option("--checkpoint", checkpoint, "Stage-1 checkpoint")->required();
  grow->add_option("--out", out, "Grown checkpoint")->required();
  grow->add_option("--resolution", resolution, "Target resolution (default: double)");
  grow->add_option("--seed", seed, "Initialization seed");

  auto* swp = app.add_subcommand("swap", "Swap the face in one image");
  swp->add_option("--model", model, "Transformation network checkpoint")->required();
  swp->add_option("--input", input, "Input PNG")->required();
  swp->add_option("--landmarks", landmarks, "Landmark JSON")->required();
  swp->add_option("--mask", mask, "Face mask PNG")->required();
  swp->add_option("--reference", reference, "Reference face JSON (default: shipped fixture)");
  swp->add_option("--out", out, "Output PNG")->required();

  auto* base = app.add_subcommand("baseline", "Nearest-landmark style image instead of the network");
  base->add_option("--styledir", styledir, "Aligned style images with landmark JSONs")->required();
  base->add_option("--input", input, "Input PNG")->required();
  base->add_option("--landmarks", landmarks, "Landmark JSON")->required();
  base->add_option("--mask", mask, "Face mask PNG")->required();
  base->add_option("--reference", reference, "Reference face JSON (default: shipped fixture)");
  base->add_option("--out", out, "Output PNG")->required();
  base->add_flag("--no-flip", no_flip, "Do not add mirrored style images");

  auto* lgen = app.add_subcommand("lightnet-gen", "Generate the synthetic relighting dataset");
  lgen->add_option("--out", out, "Output directory")->required();
  lgen->add_option("--seed", seed, "Generator seed");
  lgen->add_option("--resolution", resolution, "Image side (default 128)");
  lgen->add_option("--train-pairs", train_pairs, "Training pairs");
  lgen->add_option("--held-out-pairs", held_out, "Held-out pairs");

  auto* ltrain = app.add_subcommand("lightnet-train", "Train the siamese lighting network");
  ltrain->add_option("--data", data, "Dataset directory from lightnet-gen")->required();
  ltrain->add_option("--config", config, "Lighting training config JSON")->required();
  ltrain->add_option("--out", out, "Checkpoint directory (overrides the config)");

  auto* toy = app.add_subcommand("toy-data", "Write a synthetic aligned content/style corpus");
  toy->add_option("--out", out, "Output directory")->required();
  toy->add_option("--resolution", resolution, "Image side (default 64)");
  toy->add_option("--content", n_content, "Content faces");
  toy->add_option("--styles", n_styles, "Style faces");
  toy->add_option("--seed", seed, "Generator seed");

  auto* ver = app.add_subcommand("verify", "Run acceptance suites");
  ver->add_option("--suite", suite, "grads | oracles | training | all")
      ->check(CLI::IsMember({"grads", "oracles", "training", "all"}));
  ver->add_option("--root", root, "Repository root with fixtures/ and configs/");
  ver->add_option("--seed", seed, "Seed for randomized checks (default 2017)");
  ver->add_option("--only", only, "Run only these criterion ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*align) return cmd_align(input, landmarks, reference, out, transform);
    if (*train) return cmd_train(config, resume, train_over);
    if (*grow) return cmd_grow(checkpoint, out, resolution, seed);
    if (*swp) return cmd_swap(model, input, landmarks, mask, reference, out);
    if (*base) return cmd_baseline(styledir, input, landmarks, mask, reference, out, !no_flip);
    if (*lgen) return cmd_lightnet_gen(out, seed, resolution > 0 ? resolution : 128, train_pairs, held_out);
    if (*ltrain) return cmd_lightnet_train(data, config, out);
    if (*toy) return cmd_toy_data(out, resolution > 0 ? resolution : 64, n_content, n_styles, seed);
    if (*ver) return cmd_verify(suite, root, ver->count("--seed") ? seed : 2017, only);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  }
  return 1;
}
