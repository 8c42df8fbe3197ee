#include "faceswap/transformnet.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "faceswap/error.hpp"
#include "faceswap/weights.hpp"

namespace faceswap {

using json = nlohmann::json;

namespace {

std::size_t conv_params(int in, int out, int k) {
  return static_cast<std::size_t>(out) * in * k * k + out;
}

// Parameters of one branch (without the output convolution) and its output
// channel count.
std::pair<std::size_t, int> branch_params(const BranchSpec& spec, int coarser_channels) {
  std::size_t n = 0;
  int c = 3;
  for (int w : spec.branch_widths) {
    n += conv_params(c, w, spec.kernel);
    c = w;
  }
  if (coarser_channels > 0) {
    c += coarser_channels;
    for (int w : spec.join_widths) {
      n += conv_params(c, w, spec.kernel);
      c = w;
    }
  }
  return {n, c};
}

void validate(const BranchSpec& spec, bool coarsest) {
  require(spec.kernel >= 1 && spec.kernel % 2 == 1, "branch kernel size must be odd");
  require(!spec.branch_widths.empty(), "each branch needs at least one conv block");
  for (int w : spec.branch_widths) require(w >= 1, "branch widths must be positive");
  for (int w : spec.join_widths) require(w >= 1, "join widths must be positive");
  require(!coarsest || spec.join_widths.empty(), "the coarsest branch has no join path");
}

}  // namespace

NetworkSpec NetworkSpec::standard() {
  NetworkSpec spec;
  spec.branches.push_back({3, {32, 32, 32}, {}});
  for (int b = 1; b < 5; ++b) spec.branches.push_back({3, {32, 32, 32}, {88, 88, 88}});
  return spec;
}

NetworkSpec NetworkSpec::compact(int branches, int width, int join_width) {
  NetworkSpec spec;
  spec.branches.push_back({3, {width, width}, {}});
  for (int b = 1; b < branches; ++b) spec.branches.push_back({3, {width, width}, {join_width, join_width}});
  return spec;
}

json NetworkSpec::to_json() const {
  json arr = json::array();
  for (const auto& b : branches)
    arr.push_back({{"kernel", b.kernel}, {"branch_widths", b.branch_widths}, {"join_widths", b.join_widths}});
  return arr;
}

NetworkSpec NetworkSpec::from_json(const json& j) {
  NetworkSpec spec;
  try {
    for (const auto& b : j) {
      BranchSpec bs;
      bs.kernel = b.value("kernel", 3);
      bs.branch_widths = b.at("branch_widths").get<std::vector<int>>();
      bs.join_widths = b.value("join_widths", std::vector<int>{});
      spec.branches.push_back(bs);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed network spec: ") + e.what());
  }
  require(!spec.branches.empty(), "network spec has no branches");
  return spec;
}

std::size_t param_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  int prev = 0;
  for (const auto& b : spec.branches) {
    const auto [p, c] = branch_params(b, prev);
    n += p;
    prev = c;
  }
  return n + conv_params(prev, 3, 1);
}

TransformNet::Branch TransformNet::make_branch(const BranchSpec& spec, int coarser_channels) {
  Branch br;
  br.spec = spec;
  const int pad = spec.kernel / 2;
  int c = 3;
  for (int w : spec.branch_widths) {
    br.branch_convs.emplace_back(c, w, spec.kernel, 1, pad, true);
    c = w;
  }
  if (coarser_channels > 0) {
    c += coarser_channels;
    for (int w : spec.join_widths) {
      br.join_convs.emplace_back(c, w, spec.kernel, 1, pad, true);
      c = w;
    }
  }
  return br;
}

int TransformNet::output_channels(const Branch& branch, int coarser_channels) {
  return branch_params(branch.spec, coarser_channels).second;
}

int TransformNet::top_channels() const {
  int prev = 0;
  for (const auto& b : branches_) prev = output_channels(b, prev);
  return prev;
}

int TransformNet::branch_resolution(int b) const {
  return resolution_ >> (branch_count() - 1 - b);
}

TransformNet TransformNet::build(int resolution, const NetworkSpec& spec, std::uint64_t seed) {
  const int B = static_cast<int>(spec.branches.size());
  require(B >= 1, "network spec has no branches");
  require(resolution >= 8 && (resolution & (resolution - 1)) == 0,
          "network resolution must be a power of two >= 8, got " + std::to_string(resolution));
  require(resolution % (1 << (B - 1)) == 0 && (resolution >> (B - 1)) >= 2,
          "resolution " + std::to_string(resolution) + " too small for " + std::to_string(B) +
              " branches");
  TransformNet net;
  net.resolution_ = resolution;
  net.spec_ = spec;
  std::mt19937_64 rng(seed);
  int prev = 0;
  for (int b = 0; b < B; ++b) {
    validate(spec.branches[b], b == 0);
    Branch br = make_branch(spec.branches[b], prev);
    for (auto& conv : br.branch_convs) nn::orthogonal_init(conv, rng);
    for (auto& conv : br.join_convs) nn::orthogonal_init(conv, rng);
    prev = output_channels(br, prev);
    net.branches_.push_back(std::move(br));
  }
  net.head_ = nn::Conv2d(prev, 3, 1, 1, 0, true);
  nn::orthogonal_init(net.head_, rng);
  return net;
}

TransformNet TransformNet::grow(int new_resolution, std::uint64_t seed,
                                std::optional<BranchSpec> branch) const {
  require(new_resolution == 2 * resolution_,
          "grow: new resolution must be twice the current one (" + std::to_string(2 * resolution_) +
              "), got " + std::to_string(new_resolution));
  const int coarser = top_channels();
  BranchSpec added;
  if (branch) {
    added = *branch;
  } else {
    // Scale the finest layout until the added branch (plus output conv)
    // matches the parameter count of the existing network.
    const BranchSpec& top = branches_.back().spec;
    const double target = static_cast<double>(param_count());
    double best_err = std::numeric_limits<double>::infinity();
    for (int step = 25; step <= 800; ++step) {
      const double s = step / 100.0;
      BranchSpec cand = top;
      for (int& w : cand.branch_widths) w = std::max(1, static_cast<int>(std::lround(w * s)));
      for (int& w : cand.join_widths) w = std::max(1, static_cast<int>(std::lround(w * s)));
      if (cand.join_widths.empty()) cand.join_widths = {cand.branch_widths.back()};
      const auto [p, c] = branch_params(cand, coarser);
      const double err = std::abs(static_cast<double>(p + conv_params(c, 3, 1)) - target);
      if (err < best_err) {
        best_err = err;
        added = cand;
      }
    }
  }
  validate(added, false);

  TransformNet net;
  net.resolution_ = new_resolution;
  net.spec_ = spec_;
  net.spec_.branches.push_back(added);
  net.branches_ = branches_;
  for (auto& b : net.branches_) b.frozen = true;
  std::mt19937_64 rng(seed);
  Branch br = make_branch(added, coarser);
  for (auto& conv : br.branch_convs) nn::orthogonal_init(conv, rng);
  for (auto& conv : br.join_convs) nn::orthogonal_init(conv, rng);
  const int top = output_channels(br, coarser);
  net.branches_.push_back(std::move(br));
  net.head_ = nn::Conv2d(top, 3, 1, 1, 0, true);
  nn::orthogonal_init(net.head_, rng);
  return net;
}

Image TransformNet::forward(const Image& img) const { return Image(forward(img.tensor(), nullptr)); }

Tensor TransformNet::forward(const Tensor& img, Trace* trace) const {
  require(img.channels() == 3 && img.height() == resolution_ && img.width() == resolution_,
          "transform network expects 3x" + std::to_string(resolution_) + "x" +
              std::to_string(resolution_) + " input, got " + img.shape_string());
  const int B = branch_count();
  if (trace) trace->branches.assign(B, {});
  Tensor h;
  for (int b = 0; b < B; ++b) {
    const Branch& br = branches_[b];
    Tensor a = downsample(img, 1 << (B - 1 - b));
    if (trace) trace->branches[b].input = a;
    for (const auto& conv : br.branch_convs) {
      a = nn::conv2d(a, conv);
      nn::relu_inplace(a);
      if (trace) trace->branches[b].branch_out.push_back(a);
    }
    if (b == 0) {
      h = std::move(a);
      continue;
    }
    Tensor z = nn::concat_channels(nn::upsample_nearest(h, 2), a);
    if (trace) trace->branches[b].joined = z;
    for (const auto& conv : br.join_convs) {
      z = nn::conv2d(z, conv);
      nn::relu_inplace(z);
      if (trace) trace->branches[b].join_out.push_back(z);
    }
    h = std::move(z);
  }
  Tensor out = nn::conv2d(h, head_);
  nn::sigmoid_inplace(out);
  if (trace) {
    trace->head_input = std::move(h);
    trace->output = out;
  }
  return out;
}

TransformNet::Gradients TransformNet::zero_gradients() const {
  Gradients g;
  for (const auto& b : branches_) {
    for (const auto& c : b.branch_convs) g.convs.emplace_back(c);
    for (const auto& c : b.join_convs) g.convs.emplace_back(c);
  }
  g.convs.emplace_back(head_);
  return g;
}

void TransformNet::backward(const Trace& trace, const Tensor& grad_output, Gradients& grads) const {
  require(grad_output.same_shape(trace.output), "backward: gradient does not match output");
  const int B = branch_count();
  int lowest_trainable = B;
  for (int b = B - 1; b >= 0; --b)
    if (!branches_[b].frozen) lowest_trainable = b;

  // Offset of each branch's first conv within grads.convs.
  std::vector<std::size_t> first(B + 1, 0);
  for (int b = 0; b < B; ++b)
    first[b + 1] = first[b] + branches_[b].branch_convs.size() + branches_[b].join_convs.size();

  Tensor g = grad_output;
  nn::sigmoid_backward_inplace(trace.output, g);
  Tensor grad_h;
  nn::conv2d_backward(trace.head_input, head_, g, &grad_h, &grads.convs[first[B]]);

  for (int b = B - 1; b >= lowest_trainable; --b) {
    const Branch& br = branches_[b];
    const BranchTrace& bt = trace.branches[b];
    const bool train = !br.frozen;
    Tensor grad_a;
    if (b == 0) {
      grad_a = std::move(grad_h);
    } else {
      Tensor grad_z = std::move(grad_h);
      for (int i = static_cast<int>(br.join_convs.size()) - 1; i >= 0; --i) {
        nn::relu_backward_inplace(bt.join_out[i], grad_z);
        const Tensor& input = i == 0 ? bt.joined : bt.join_out[i - 1];
        Tensor grad_in;
        nn::conv2d_backward(input, br.join_convs[i], grad_z, &grad_in,
                            train ? &grads.convs[first[b] + br.branch_convs.size() + i] : nullptr);
        grad_z = std::move(grad_in);
      }
      Tensor grad_up;
      nn::split_channels(grad_z, bt.joined.channels() - bt.branch_out.back().channels(), grad_up,
                         grad_a);
      if (b - 1 >= lowest_trainable) grad_h = nn::upsample_nearest_backward(grad_up, 2);
    }
    if (!train) continue;
    for (int i = static_cast<int>(br.branch_convs.size()) - 1; i >= 0; --i) {
      nn::relu_backward_inplace(bt.branch_out[i], grad_a);
      const Tensor& input = i == 0 ? bt.input : bt.branch_out[i - 1];
      Tensor grad_in;
      nn::conv2d_backward(input, br.branch_convs[i], grad_a, i > 0 ? &grad_in : nullptr,
                          &grads.convs[first[b] + i]);
      grad_a = std::move(grad_in);
    }
  }
}

std::size_t TransformNet::param_count() const {
  std::size_t n = head_.parameter_count();
  for (const auto& b : branches_) {
    for (const auto& c : b.branch_convs) n += c.parameter_count();
    for (const auto& c : b.join_convs) n += c.parameter_count();
  }
  return n;
}

std::size_t TransformNet::frozen_param_count() const {
  std::size_t n = 0;
  for (const auto& b : branches_) {
    if (!b.frozen) continue;
    for (const auto& c : b.branch_convs) n += c.parameter_count();
    for (const auto& c : b.join_convs) n += c.parameter_count();
  }
  return n;
}

std::vector<nn::ParamRef> TransformNet::parameters() {
  std::vector<nn::ParamRef> out;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    auto& br = branches_[b];
    const std::string prefix = "branch" + std::to_string(b);
    for (std::size_t i = 0; i < br.branch_convs.size(); ++i)
      nn::append_params(out, prefix + ".conv" + std::to_string(i), br.branch_convs[i], br.frozen);
    for (std::size_t i = 0; i < br.join_convs.size(); ++i)
      nn::append_params(out, prefix + ".join" + std::to_string(i), br.join_convs[i], br.frozen);
  }
  nn::append_params(out, "head", head_, false);
  return out;
}

std::vector<std::vector<double>*> TransformNet::gradient_refs(Gradients& grads) const {
  std::vector<std::vector<double>*> out;
  for (auto& g : grads.convs) {
    out.push_back(&g.weight);
    if (!g.bias.empty()) out.push_back(&g.bias);
  }
  return out;
}

json TransformNet::architecture() const {
  json branches = json::array();
  for (int b = 0; b < branch_count(); ++b) {
    const auto& br = branches_[b];
    branches.push_back({{"resolution", branch_resolution(b)},
                        {"kernel", br.spec.kernel},
                        {"branch_widths", br.spec.branch_widths},
                        {"join_widths", br.spec.join_widths},
                        {"frozen", br.frozen}});
  }
  return {{"model", "transformnet"}, {"resolution", resolution_}, {"branches", branches}};
}

void TransformNet::save(const std::filesystem::path& dir) const {
  TensorArchive archive;
  archive.architecture = architecture();
  auto& self = const_cast<TransformNet&>(*this);
  for (const auto& p : self.parameters()) archive.tensors.push_back({p.name, p.shape, *p.values});
  write_tensor_archive(dir, archive);
}

TransformNet TransformNet::load(const std::filesystem::path& dir) {
  const TensorArchive archive = read_tensor_archive(dir);
  const json& arch = archive.architecture;
  if (!arch.is_object() || arch.value("model", "") != "transformnet")
    throw ValidationError(dir.string() + " is not a transform network checkpoint");
  NetworkSpec spec;
  std::vector<bool> frozen;
  int resolution = 0;
  try {
    resolution = arch.at("resolution").get<int>();
    spec = NetworkSpec::from_json(arch.at("branches"));
    for (const auto& b : arch.at("branches")) frozen.push_back(b.value("frozen", false));
  } catch (const json::exception& e) {
    throw ValidationError(dir.string() + ": malformed architecture: " + e.what());
  }
  TransformNet net = build(resolution, spec, 0);
  for (std::size_t b = 0; b < frozen.size(); ++b) net.branches_[b].frozen = frozen[b];
  for (auto& p : net.parameters()) {
    const TensorRecord& t = archive.at(p.name);
    if (t.shape != p.shape) throw ValidationError(dir.string() + ": shape mismatch for " + p.name);
    *p.values = t.values;
  }
  return net;
}

}  // namespace faceswap
