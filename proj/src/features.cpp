#include "faceswap/features.hpp"

#include <algorithm>
#include <random>

#include "faceswap/error.hpp"
#include "faceswap/weights.hpp"

namespace faceswap {

namespace {

constexpr std::array<int, 5> kConvsPerStage{2, 2, 4, 4, 4};

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

ExtractorSpec ExtractorSpec::vgg19(const std::filesystem::path& weights) {
  ExtractorSpec spec;
  spec.source = Source::Pretrained;
  spec.weights = weights;
  spec.input_scale = 255.0;
  spec.input_mean = {103.939, 116.779, 123.68};
  spec.bgr = true;
  return spec;
}

ExtractorSpec ExtractorSpec::small_random(std::uint64_t seed, bool with_bias) {
  ExtractorSpec spec;
  spec.source = Source::Random;
  spec.stage_channels = {8, 16, 24, 32, 32};
  // Same 0..255 input range as the pretrained network, so loss weights tuned
  // for one carry over to the other. No centring: a black image stays zero.
  spec.input_scale = 255.0;
  spec.seed = seed;
  spec.with_bias = with_bias;
  return spec;
}

std::vector<LayerInfo> ExtractorSpec::layers() const {
  std::vector<LayerInfo> out;
  for (int s = 0; s < 5; ++s)
    for (int i = 0; i < kConvsPerStage[s]; ++i)
      out.push_back({"relu" + std::to_string(s + 1) + "_" + std::to_string(i + 1), 1 << s,
                     stage_channels[s]});
  return out;
}

LayerInfo ExtractorSpec::layer(const std::string& name) const {
  for (const auto& l : layers())
    if (l.name == name) return l;
  throw ValidationError("unknown extractor layer: " + name);
}

FeatureExtractor FeatureExtractor::load(const ExtractorSpec& spec) {
  for (int c : spec.stage_channels) require(c >= 1, "extractor channel counts must be positive");
  FeatureExtractor fx;
  fx.spec_ = spec;
  int in = 3;
  for (int s = 0; s < 5; ++s)
    for (int i = 0; i < kConvsPerStage[s]; ++i) {
      fx.convs_.emplace_back(in, spec.stage_channels[s], 3, 1, 1, spec.with_bias);
      fx.conv_names_.push_back("conv" + std::to_string(s + 1) + "_" + std::to_string(i + 1));
      in = spec.stage_channels[s];
    }

  if (spec.source == ExtractorSpec::Source::Random) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> bias_noise(0.0, 0.05);
    for (auto& conv : fx.convs_) {
      // √2 gain keeps activation scale roughly constant through ReLUs.
      nn::orthogonal_init(conv, rng, std::sqrt(2.0));
      for (double& b : conv.bias) b = bias_noise(rng);
    }
  } else {
    const TensorArchive archive = read_tensor_archive(spec.weights);
    for (std::size_t i = 0; i < fx.convs_.size(); ++i) {
      auto& conv = fx.convs_[i];
      const std::string& name = fx.conv_names_[i];
      const TensorRecord* w = archive.find(name + ".weight");
      if (!w) {
        // Archives may stop early (e.g. at conv4_x); later layers stay unusable.
        if (i == 0) throw ValidationError(spec.weights.string() + ": no " + name + ".weight");
        fx.convs_.resize(i);
        fx.conv_names_.resize(i);
        break;
      }
      const std::vector<std::int64_t> expected{conv.out_channels, conv.in_channels, 3, 3};
      if (w->shape != expected)
        throw ValidationError(spec.weights.string() + ": " + name +
                              ".weight has the wrong shape for the extractor spec");
      conv.weight = w->values;
      if (spec.with_bias) {
        const TensorRecord& b = archive.at(name + ".bias");
        if (b.shape != std::vector<std::int64_t>{conv.out_channels})
          throw ValidationError(spec.weights.string() + ": " + name + ".bias channel mismatch");
        conv.bias = b.values;
      }
    }
  }
  fx.build_ops();
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& conv : fx.convs_) {
    h = fnv1a(h, conv.weight.data(), conv.weight.size() * sizeof(double));
    h = fnv1a(h, conv.bias.data(), conv.bias.size() * sizeof(double));
  }
  fx.fingerprint_ = h;
  return fx;
}

void FeatureExtractor::build_ops() {
  ops_.clear();
  std::size_t conv = 0;
  for (int s = 0; s < 5 && conv < convs_.size(); ++s) {
    if (s > 0) ops_.push_back({true, -1, {}});
    for (int i = 0; i < kConvsPerStage[s] && conv < convs_.size(); ++i, ++conv)
      ops_.push_back({false, static_cast<int>(conv),
                      "relu" + std::to_string(s + 1) + "_" + std::to_string(i + 1)});
  }
}

int FeatureExtractor::op_index(const std::string& layer) const {
  for (std::size_t i = 0; i < ops_.size(); ++i)
    if (!ops_[i].pool && ops_[i].name == layer) return static_cast<int>(i);
  spec_.layer(layer);  // throws for names outside the topology
  throw ValidationError("layer " + layer + " is not available in the loaded weights");
}

std::size_t FeatureExtractor::parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : convs_) n += c.parameter_count();
  return n;
}

FeatureMaps FeatureExtractor::extract(const Image& img, const std::vector<std::string>& layers) const {
  return extract(img.tensor(), layers, nullptr);
}

FeatureMaps FeatureExtractor::extract(const Tensor& img, const std::vector<std::string>& layers,
                                      Trace* trace) const {
  require(img.channels() == 3, "extract: expected an RGB tensor, got " + img.shape_string());
  require(!layers.empty(), "extract: no layers requested");
  int last = -1;
  int max_factor = 1;
  for (const auto& name : layers) {
    last = std::max(last, op_index(name));
    max_factor = std::max(max_factor, spec_.layer(name).factor);
  }
  require(img.height() % max_factor == 0 && img.width() % max_factor == 0,
          "extract: input " + img.shape_string() + " not divisible by factor " +
              std::to_string(max_factor));

  Tensor x(3, img.height(), img.width());
  for (int c = 0; c < 3; ++c) {
    const int src = spec_.bgr ? 2 - c : c;
    const auto in = img.channel(src);
    auto out = x.channel(c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * spec_.input_scale - spec_.input_mean[c];
  }

  if (trace) {
    trace->activations.clear();
    trace->activations.reserve(last + 2);
    trace->activations.push_back(x);
  }
  FeatureMaps maps;
  for (int i = 0; i <= last; ++i) {
    const Op& op = ops_[i];
    if (op.pool) {
      x = nn::avg_pool(x, 2);
    } else {
      x = nn::conv2d(x, convs_[op.conv]);
      nn::relu_inplace(x);
      if (std::find(layers.begin(), layers.end(), op.name) != layers.end())
        maps[op.name] = FeatureMap{x, op.name};
    }
    if (trace) trace->activations.push_back(x);
  }
  return maps;
}

Tensor FeatureExtractor::backward(const Trace& trace,
                                  const std::map<std::string, Tensor>& layer_grads) const {
  int last = -1;
  for (const auto& [name, g] : layer_grads) last = std::max(last, op_index(name));
  require(last >= 0, "backward: no layer gradients given");
  require(static_cast<int>(trace.activations.size()) >= last + 2, "backward: trace too short");

  Tensor grad;
  for (int i = last; i >= 0; --i) {
    const Op& op = ops_[i];
    const Tensor& output = trace.activations[i + 1];
    if (!op.pool) {
      const auto it = layer_grads.find(op.name);
      if (it != layer_grads.end()) {
        require(it->second.same_shape(output), "backward: gradient shape mismatch at " + op.name);
        if (grad.empty())
          grad = it->second;
        else
          grad += it->second;
      }
    }
    if (grad.empty()) continue;
    if (op.pool) {
      grad = nn::avg_pool_backward(grad, 2);
    } else {
      nn::relu_backward_inplace(output, grad);
      Tensor grad_in;
      nn::conv2d_backward(trace.activations[i], convs_[op.conv], grad, &grad_in, nullptr);
      grad = std::move(grad_in);
    }
  }
  Tensor grad_img(3, grad.height(), grad.width());
  for (int c = 0; c < 3; ++c) {
    const int dst = spec_.bgr ? 2 - c : c;
    const auto in = grad.channel(c);
    auto out = grad_img.channel(dst);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * spec_.input_scale;
  }
  return grad_img;
}

}  // namespace faceswap
