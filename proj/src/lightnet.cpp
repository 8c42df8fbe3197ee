#include "faceswap/lightnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "json.hpp"

#include "faceswap/error.hpp"
#include "faceswap/optim.hpp"
#include "faceswap/weights.hpp"

namespace faceswap {

using json = nlohmann::json;

LightNet LightNet::build(const LightNetConfig& config) {
  require(config.embedding_dim >= 8, "lighting embedding dimension must be at least 8");
  require(config.resolution >= 16 && config.resolution % 16 == 0,
          "lighting network resolution must be a multiple of 16");
  LightNet net;
  net.config_ = config;
  std::mt19937_64 rng(config.seed);
  int in = 1;
  for (int c : config.channels) {
    require(c >= 1, "lighting network widths must be positive");
    net.convs_.emplace_back(in, c, 3, 2, 1, config.with_bias);
    nn::orthogonal_init(net.convs_.back(), rng, std::sqrt(2.0));
    in = c;
  }
  const int side = config.resolution / 16;
  net.fc_ = nn::Linear(in * side * side, config.embedding_dim, config.with_bias);
  nn::orthogonal_init(net.fc_, rng);
  return net;
}

std::vector<double> LightNet::embed(const LuminanceImage& img) const {
  return embed(img.tensor(), nullptr);
}

std::vector<double> LightNet::embed(const Tensor& luminance, Trace* trace) const {
  require(luminance.channels() == 1 && luminance.height() == config_.resolution &&
              luminance.width() == config_.resolution,
          "lighting network expects 1x" + std::to_string(config_.resolution) + "x" +
              std::to_string(config_.resolution) + " input, got " + luminance.shape_string());
  if (trace) {
    trace->input = luminance;
    trace->conv_out.clear();
  }
  Tensor x = luminance;
  for (const auto& conv : convs_) {
    x = nn::conv2d(x, conv);
    nn::relu_inplace(x);
    if (trace) trace->conv_out.push_back(x);
  }
  return nn::linear(x.values(), fc_);
}

Tensor LightNet::backward(const Trace& trace, std::span<const double> grad_embedding,
                          Gradients* grads) const {
  require(static_cast<int>(grad_embedding.size()) == config_.embedding_dim,
          "lighting backward: gradient size mismatch");
  const Tensor& last = trace.conv_out.back();
  std::vector<double> grad_flat;
  nn::linear_backward(last.values(), fc_, grad_embedding, &grad_flat,
                      grads ? &grads->fc_weight : nullptr, grads ? &grads->fc_bias : nullptr);
  Tensor grad(last.channels(), last.height(), last.width());
  grad.values() = std::move(grad_flat);
  for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
    nn::relu_backward_inplace(trace.conv_out[i], grad);
    const Tensor& input = i == 0 ? trace.input : trace.conv_out[i - 1];
    Tensor grad_in;
    nn::conv2d_backward(input, convs_[i], grad, &grad_in, grads ? &grads->convs[i] : nullptr);
    grad = std::move(grad_in);
  }
  return grad;
}

LightNet::Gradients LightNet::zero_gradients() const {
  Gradients g;
  for (const auto& c : convs_) g.convs.emplace_back(c);
  g.fc_weight.assign(fc_.weight.size(), 0.0);
  g.fc_bias.assign(fc_.bias.size(), 0.0);
  return g;
}

std::vector<nn::ParamRef> LightNet::parameters() {
  std::vector<nn::ParamRef> out;
  for (std::size_t i = 0; i < convs_.size(); ++i)
    nn::append_params(out, "conv" + std::to_string(i), convs_[i]);
  nn::append_params(out, "fc", fc_);
  return out;
}

std::vector<std::vector<double>*> LightNet::gradient_refs(Gradients& grads) const {
  std::vector<std::vector<double>*> out;
  for (auto& g : grads.convs) {
    out.push_back(&g.weight);
    if (!g.bias.empty()) out.push_back(&g.bias);
  }
  out.push_back(&grads.fc_weight);
  if (!grads.fc_bias.empty()) out.push_back(&grads.fc_bias);
  return out;
}

std::size_t LightNet::param_count() const {
  std::size_t n = fc_.parameter_count();
  for (const auto& c : convs_) n += c.parameter_count();
  return n;
}

void LightNet::save(const std::filesystem::path& dir) const {
  TensorArchive archive;
  archive.architecture = {{"model", "lightnet"},
                          {"resolution", config_.resolution},
                          {"channels", config_.channels},
                          {"embedding_dim", config_.embedding_dim},
                          {"with_bias", config_.with_bias}};
  auto& self = const_cast<LightNet&>(*this);
  for (const auto& p : self.parameters()) archive.tensors.push_back({p.name, p.shape, *p.values});
  write_tensor_archive(dir, archive);
}

LightNet LightNet::load(const std::filesystem::path& dir) {
  const TensorArchive archive = read_tensor_archive(dir);
  const json& arch = archive.architecture;
  if (!arch.is_object() || arch.value("model", "") != "lightnet")
    throw ValidationError(dir.string() + " is not a lighting network checkpoint");
  LightNetConfig config;
  try {
    config.resolution = arch.at("resolution").get<int>();
    config.channels = arch.at("channels").get<std::array<int, 4>>();
    config.embedding_dim = arch.at("embedding_dim").get<int>();
    config.with_bias = arch.at("with_bias").get<bool>();
  } catch (const json::exception& e) {
    throw ValidationError(dir.string() + ": malformed architecture: " + e.what());
  }
  LightNet net = build(config);
  for (auto& p : net.parameters()) {
    const TensorRecord& t = archive.at(p.name);
    if (t.shape != p.shape) throw ValidationError(dir.string() + ": shape mismatch for " + p.name);
    *p.values = t.values;
  }
  return net;
}

double contrastive_loss(std::span<const double> e_a, std::span<const double> e_b,
                        LightingLabel label, double margin, std::vector<double>* grad_a,
                        std::vector<double>* grad_b) {
  require(e_a.size() == e_b.size(), "contrastive_loss: embedding sizes differ");
  double d2 = 0.0;
  for (std::size_t i = 0; i < e_a.size(); ++i) d2 += (e_a[i] - e_b[i]) * (e_a[i] - e_b[i]);
  const double d = std::sqrt(d2);
  double loss = 0.0;
  double coeff = 0.0;  // dL/d(e_a) = coeff · (e_a − e_b)
  if (label == LightingLabel::Same) {
    loss = d2;
    coeff = 2.0;
  } else if (d < margin) {
    loss = (margin - d) * (margin - d);
    coeff = d > 0.0 ? -2.0 * (margin - d) / d : 0.0;
  }
  if (grad_a || grad_b) {
    std::vector<double> g(e_a.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = coeff * (e_a[i] - e_b[i]);
    if (grad_b) {
      grad_b->resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) (*grad_b)[i] = -g[i];
    }
    if (grad_a) *grad_a = std::move(g);
  }
  return loss;
}

LightTrainResult train_lightnet(const std::vector<LightingPair>& dataset, const LightTrainConfig& config) {
  require(!dataset.empty(), "train_lightnet: empty dataset");
  const bool has_same = std::any_of(dataset.begin(), dataset.end(),
                                    [](const auto& p) { return p.label == LightingLabel::Same; });
  const bool has_diff = std::any_of(dataset.begin(), dataset.end(),
                                    [](const auto& p) { return p.label == LightingLabel::Different; });
  require(has_same && has_diff, "train_lightnet: dataset must contain both same- and different-light pairs");
  require(config.epochs >= 1 && config.batch_size >= 1, "train_lightnet: epochs and batch size must be positive");

  LightTrainResult result{LightNet::build(config.net), {}};
  LightNet& net = result.net;
  Adam adam;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const long total_steps =
      static_cast<long>(config.epochs) *
      static_cast<long>((dataset.size() + config.batch_size - 1) / config.batch_size);
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      LightNet::Gradients grads = net.zero_gradients();
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const LightingPair& pair = dataset[order[k]];
        LightNet::Trace ta, tb;
        const auto ea = net.embed(pair.a.tensor(), &ta);
        const auto eb = net.embed(pair.b.tensor(), &tb);
        std::vector<double> ga, gb;
        epoch_sum += contrastive_loss(ea, eb, pair.label, config.margin, &ga, &gb);
        for (double& v : ga) v *= scale;
        for (double& v : gb) v *= scale;
        net.backward(ta, ga, &grads);
        net.backward(tb, gb, &grads);
      }
      const double t = total_steps > 1 ? static_cast<double>(step) / (total_steps - 1) : 1.0;
      const double lr = config.lr_start + (config.lr_end - config.lr_start) * t;
      adam.step(net.parameters(), net.gradient_refs(grads), lr);
      ++step;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(dataset.size()));
  }
  return result;
}

SeparationStats lighting_separation(const LightNet& net, const std::vector<LightingPair>& pairs) {
  double same = 0.0, diff = 0.0;
  int n_same = 0, n_diff = 0;
  for (const auto& p : pairs) {
    const auto ea = net.embed(p.a);
    const auto eb = net.embed(p.b);
    double d2 = 0.0;
    for (std::size_t i = 0; i < ea.size(); ++i) d2 += (ea[i] - eb[i]) * (ea[i] - eb[i]);
    if (p.label == LightingLabel::Same) {
      same += std::sqrt(d2);
      ++n_same;
    } else {
      diff += std::sqrt(d2);
      ++n_diff;
    }
  }
  require(n_same > 0 && n_diff > 0, "lighting_separation: need pairs of both labels");
  return {same / n_same, diff / n_diff};
}

namespace {

struct Bump {
  double u, v, sigma, amplitude;
};

struct HeadShape {
  double albedo;
  double width, height;
  std::vector<Bump> bumps;
};

struct Pose {
  double du, dv, angle, yaw;
};

double head_height(const HeadShape& s, const Pose& p, double u, double v) {
  // Pose: rotate and shift the face coordinates.
  const double cu = u - p.du, cv = v - p.dv;
  const double c = std::cos(p.angle), sn = std::sin(p.angle);
  const double x = c * cu + sn * cv;
  const double y = -sn * cu + c * cv;
  const double q = 1.0 - (x / s.width) * (x / s.width) - (y / s.height) * (y / s.height);
  double h = 0.5 * std::max(q, 0.0) * std::max(q, 0.0) * (3.0 - 2.0 * std::max(q, 0.0));
  auto g = [&](double bu, double bv, double su, double sv) {
    return std::exp(-((x - bu) * (x - bu) / (2 * su * su) + (y - bv) * (y - bv) / (2 * sv * sv)));
  };
  h += 0.22 * g(p.yaw, 0.05, 0.07, 0.16);           // nose
  h -= 0.10 * g(-0.25 + p.yaw, -0.15, 0.09, 0.07);  // eye sockets
  h -= 0.10 * g(0.25 + p.yaw, -0.15, 0.09, 0.07);
  h += 0.05 * g(p.yaw, 0.42, 0.16, 0.05);           // lips
  for (const auto& b : s.bumps) h += b.amplitude * g(b.u, b.v, b.sigma, b.sigma);
  return h;
}

}  // namespace

RelightingSet generate_relighting_set(int resolution, std::uint64_t seed, int identities, int poses,
                                      int lights) {
  require(resolution >= 16 && identities >= 2 && poses >= 1 && lights >= 2,
          "relighting set needs resolution >= 16, >= 2 identities and >= 2 lights");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<HeadShape> shapes(identities);
  for (auto& s : shapes) {
    s.albedo = 0.65 + 0.3 * uni(rng);
    s.width = 0.55 + 0.15 * uni(rng);
    s.height = 0.72 + 0.15 * uni(rng);
    for (int k = 0; k < 4; ++k)
      s.bumps.push_back({-0.5 + uni(rng), -0.5 + uni(rng), 0.08 + 0.15 * uni(rng),
                         0.12 * (uni(rng) - 0.5)});
  }
  std::vector<Pose> pose_list(poses);
  for (int p = 0; p < poses; ++p)
    pose_list[p] = {0.08 * (uni(rng) - 0.5), 0.08 * (uni(rng) - 0.5), 0.3 * (uni(rng) - 0.5),
                    0.2 * (uni(rng) - 0.5)};
  // Two rings of directional lights at 25° and 55° elevation.
  std::vector<std::array<double, 3>> dirs(lights);
  const int ring = (lights + 1) / 2;
  for (int l = 0; l < lights; ++l) {
    const double elev = (l < ring ? 25.0 : 55.0) * M_PI / 180.0;
    const double azim = 2.0 * M_PI * (l % ring) / ring + (l < ring ? 0.0 : M_PI / ring);
    dirs[l] = {std::cos(elev) * std::cos(azim), std::cos(elev) * std::sin(azim), std::sin(elev)};
  }

  RelightingSet set{resolution, identities, poses, lights, {}};
  const double step = 2.0 / resolution;
  for (int i = 0; i < identities; ++i)
    for (int p = 0; p < poses; ++p) {
      // Height field on the pixel grid plus a one-pixel apron for gradients.
      const int n = resolution + 2;
      std::vector<double> h(static_cast<std::size_t>(n) * n);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          h[static_cast<std::size_t>(y) * n + x] =
              head_height(shapes[i], pose_list[p], (x - 0.5) * step - 1.0, (y - 0.5) * step - 1.0);
      for (int l = 0; l < lights; ++l) {
        LuminanceImage img(resolution, resolution);
        for (int y = 0; y < resolution; ++y)
          for (int x = 0; x < resolution; ++x) {
            const auto H = [&](int yy, int xx) { return h[static_cast<std::size_t>(yy) * n + xx]; };
            const double hu = (H(y + 1, x + 2) - H(y + 1, x)) / (2 * step);
            const double hv = (H(y + 2, x + 1) - H(y, x + 1)) / (2 * step);
            const double norm = std::sqrt(hu * hu + hv * hv + 1.0);
            const double shade =
                std::max(0.0, (-hu * dirs[l][0] - hv * dirs[l][1] + dirs[l][2]) / norm);
            const double albedo = H(y + 1, x + 1) > 1e-6 ? shapes[i].albedo : 0.45;
            img.at(y, x) = std::clamp(0.05 + 0.9 * albedo * shade, 0.0, 1.0);
          }
        set.images.push_back({std::move(img), i, p, l});
      }
    }
  return set;
}

namespace {

struct PairIndex {
  int pose, identity_a, light_a, identity_b, light_b;
  LightingLabel label;
};

std::vector<PairIndex> sample_pairs(const RelightingSet& set, const std::vector<int>& identities,
                                    int count, std::uint64_t seed) {
  require(identities.size() >= 2, "lighting pairs need at least two identities");
  std::mt19937_64 rng(seed);
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  const int n_ids = static_cast<int>(identities.size());
  std::vector<PairIndex> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    PairIndex p{};
    p.pose = pick(set.poses);
    p.identity_a = identities[pick(n_ids)];
    if (k % 2 == 0) {
      p.label = LightingLabel::Same;
      p.identity_b = p.identity_a;
      while (p.identity_b == p.identity_a) p.identity_b = identities[pick(n_ids)];
      p.light_a = p.light_b = pick(set.lights);
    } else {
      p.label = LightingLabel::Different;
      p.identity_b = identities[pick(n_ids)];
      p.light_a = pick(set.lights);
      p.light_b = p.light_a;
      while (p.light_b == p.light_a) p.light_b = pick(set.lights);
    }
    out.push_back(p);
  }
  return out;
}

std::string image_name(int identity, int pose, int light) {
  return "id" + std::to_string(identity) + "_pose" + std::to_string(pose) + "_light" +
         std::to_string(light) + ".png";
}

json pairs_json(const RelightingSet& set, const std::vector<int>& identities, int count,
                std::uint64_t seed) {
  json arr = json::array();
  for (const auto& p : sample_pairs(set, identities, count, seed))
    arr.push_back({{"a", image_name(p.identity_a, p.pose, p.light_a)},
                   {"b", image_name(p.identity_b, p.pose, p.light_b)},
                   {"label", p.label == LightingLabel::Same ? "same" : "different"}});
  return arr;
}

}  // namespace

std::vector<LightingPair> make_lighting_pairs(const RelightingSet& set, const std::vector<int>& identities,
                                              int count, std::uint64_t seed) {
  std::vector<LightingPair> pairs;
  for (const auto& p : sample_pairs(set, identities, count, seed))
    pairs.push_back({set.at(p.identity_a, p.pose, p.light_a).image,
                     set.at(p.identity_b, p.pose, p.light_b).image, p.label});
  return pairs;
}

void write_relighting_dataset(const RelightingSet& set, const std::filesystem::path& dir,
                              std::uint64_t seed, int train_pairs, int held_out_pairs) {
  std::filesystem::create_directories(dir);
  for (const auto& img : set.images)
    save_luminance(img.image, dir / image_name(img.identity, img.pose, img.light));
  // The last quarter of identities (at least two) is held out.
  const int held = std::max(2, set.identities / 4);
  require(set.identities - held >= 2, "relighting dataset needs at least four identities");
  std::vector<int> train_ids, held_ids;
  for (int i = 0; i < set.identities; ++i) (i < set.identities - held ? train_ids : held_ids).push_back(i);
  json manifest = {{"resolution", set.resolution},
                   {"identities", set.identities},
                   {"poses", set.poses},
                   {"lights", set.lights},
                   {"seed", seed},
                   {"train_identities", train_ids},
                   {"held_out_identities", held_ids},
                   {"train", pairs_json(set, train_ids, train_pairs, seed + 1)},
                   {"held_out", pairs_json(set, held_ids, held_out_pairs, seed + 2)}};
  std::ofstream out(dir / "pairs.json");
  if (!out) throw NumericalError("cannot write " + (dir / "pairs.json").string());
  out << manifest.dump(2) << "\n";
}

std::vector<LightingPair> read_lighting_pairs(const std::filesystem::path& dir, const std::string& split) {
  std::ifstream in(dir / "pairs.json");
  if (!in) throw ValidationError("missing " + (dir / "pairs.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("corrupt pairs.json: " + std::string(e.what()));
  }
  if (!manifest.contains(split)) throw ValidationError("pairs.json has no split " + split);
  std::map<std::string, LuminanceImage> cache;
  auto image = [&](const std::string& name) -> const LuminanceImage& {
    auto it = cache.find(name);
    if (it == cache.end()) it = cache.emplace(name, load_luminance(dir / name)).first;
    return it->second;
  };
  std::vector<LightingPair> pairs;
  for (const auto& p : manifest[split]) {
    const std::string label = p.at("label").get<std::string>();
    if (label != "same" && label != "different") throw ValidationError("unknown pair label " + label);
    pairs.push_back({image(p.at("a").get<std::string>()), image(p.at("b").get<std::string>()),
                     label == "same" ? LightingLabel::Same : LightingLabel::Different});
  }
  return pairs;
}

}  // namespace faceswap
