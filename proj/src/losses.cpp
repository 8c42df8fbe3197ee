#include "faceswap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "faceswap/error.hpp"

namespace faceswap {

double content_loss(const FeatureMap& gen, const FeatureMap& content, Tensor* grad) {
  require(gen.data.same_shape(content.data), "content_loss: shape mismatch " +
                                                 gen.data.shape_string() + " vs " +
                                                 content.data.shape_string());
  require(!gen.data.empty(), "content_loss: empty feature map");
  const auto& a = gen.data.values();
  const auto& b = content.data.values();
  const double inv = 1.0 / static_cast<double>(a.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  if (grad) {
    *grad = Tensor(gen.data.channels(), gen.data.height(), gen.data.width());
    auto& g = grad->values();
    for (std::size_t i = 0; i < a.size(); ++i) g[i] = 2.0 * inv * (a[i] - b[i]);
  }
  return sum * inv;
}

double content_loss_multi(const FeatureMaps& gen, const FeatureMaps& content,
                          const std::vector<std::string>& layers,
                          std::map<std::string, Tensor>* grads) {
  double total = 0.0;
  for (const auto& name : layers) {
    const auto g = gen.find(name);
    const auto c = content.find(name);
    require(g != gen.end() && c != content.end(), "content_loss_multi: layer " + name +
                                                      " missing from one of the feature sets");
    Tensor grad;
    total += content_loss(g->second, c->second, grads ? &grad : nullptr);
    if (grads) {
      auto [it, inserted] = grads->try_emplace(name, std::move(grad));
      if (!inserted) it->second += grad;
    }
  }
  return total;
}

PatchList extract_patches(const FeatureMap& f, int k) {
  const Tensor& t = f.data;
  require(k >= 1 && k <= std::min(t.height(), t.width()),
          "extract_patches: patch size " + std::to_string(k) + " does not fit " + t.shape_string());
  PatchList p;
  p.k = k;
  p.rows = t.height() - k + 1;
  p.cols = t.width() - k + 1;
  p.count = p.rows * p.cols;
  p.length = t.channels() * k * k;
  p.layer_name = f.layer_name;
  p.data.resize(static_cast<std::size_t>(p.count) * p.length);
  p.norms.resize(p.count);
  for (int y = 0; y < p.rows; ++y)
    for (int x = 0; x < p.cols; ++x) {
      const int i = y * p.cols + x;
      double* dst = p.data.data() + static_cast<std::size_t>(i) * p.length;
      double sq = 0.0;
      for (int c = 0; c < t.channels(); ++c)
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const double v = t(c, y + dy, x + dx);
            *dst++ = v;
            sq += v * v;
          }
      p.norms[i] = std::sqrt(sq);
    }
  return p;
}

namespace {

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

// Patches with norm ≤ ε count as zero: two zero patches are identical (0),
// a zero and a nonzero patch are orthogonal (1). Otherwise ½‖u/‖u‖ − v/‖v‖‖²,
// which equals 1 − cos and is exactly 0 for identical patches.
bool is_zero_norm(double n) { return n <= kCosineEpsilon; }

double cosine_from_parts(std::span<const double> u, double nu, std::span<const double> v, double nv) {
  const bool zu = is_zero_norm(nu), zv = is_zero_norm(nv);
  if (zu || zv) return zu && zv ? 0.0 : 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] / nu - v[i] / nv;
    s += d * d;
  }
  return std::min(0.5 * s, 2.0);
}

void check_style_list(const PatchList& gen, const StylePatches& styles) {
  require(!styles.empty(), "style list is empty");
  for (const PatchList* s : styles)
    require(s && s->count == gen.count && s->length == gen.length,
            "style patches do not match the generated patches in count or length");
}

StylePatches as_refs(const std::vector<PatchList>& styles) {
  StylePatches refs;
  for (const auto& s : styles) refs.push_back(&s);
  return refs;
}

// Best style index and its distance at location i.
std::pair<int, double> best_match(const PatchList& gen, const StylePatches& styles, int i) {
  const auto u = gen.patch(i);
  int best = 0;
  double best_d = 0.0;
  for (std::size_t j = 0; j < styles.size(); ++j) {
    const double d = cosine_from_parts(u, gen.norms[i], styles[j]->patch(i), styles[j]->norms[i]);
    if (j == 0 || d < best_d) {
      best = static_cast<int>(j);
      best_d = d;
    }
  }
  return {best, best_d};
}

}  // namespace

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size(), "cosine_distance: length mismatch");
  return cosine_from_parts(u, std::sqrt(dot(u, u)), v, std::sqrt(dot(v, v)));
}

std::vector<int> select_style_subset(const LandmarkSet& x, const std::vector<LandmarkSet>& styles,
                                     int n_best) {
  require(!styles.empty(), "select_style_subset: empty style set");
  require(n_best >= 1 && n_best <= static_cast<int>(styles.size()),
          "select_style_subset: n_best must be in [1, " + std::to_string(styles.size()) + "]");
  std::vector<double> dist(styles.size());
  for (std::size_t j = 0; j < styles.size(); ++j) dist[j] = landmark_distance(x, styles[j]);
  std::vector<int> order(styles.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] < dist[b]; });
  order.resize(n_best);
  return order;
}

PatchMatch nn_select(const PatchList& gen, const StylePatches& styles) {
  check_style_list(gen, styles);
  PatchMatch match;
  match.nn_index.resize(gen.count);
  for (int i = 0; i < gen.count; ++i) match.nn_index[i] = best_match(gen, styles, i).first;
  return match;
}

PatchMatch nn_select(const PatchList& gen, const std::vector<PatchList>& styles) {
  return nn_select(gen, as_refs(styles));
}

double style_loss(const PatchList& gen, const StylePatches& styles, Tensor* grad, int channels) {
  check_style_list(gen, styles);
  if (grad) {
    require(channels >= 1 && channels * gen.k * gen.k == gen.length,
            "style_loss: channel count needed for the gradient layout");
    *grad = Tensor(channels, gen.rows + gen.k - 1, gen.cols + gen.k - 1);
  }
  const double inv_m = 1.0 / gen.count;
  double sum = 0.0;
  for (int i = 0; i < gen.count; ++i) {
    const auto [j, d] = best_match(gen, styles, i);
    sum += d;
    if (!grad) continue;
    // d = 1 − u·v / (‖u‖‖v‖) with the nearest style fixed; zero patches have no gradient.
    const double nu = gen.norms[i];
    const double nv = styles[j]->norms[i];
    if (is_zero_norm(nu) || is_zero_norm(nv)) continue;
    const auto u = gen.patch(i);
    const auto v = styles[j]->patch(i);
    const double denom = nu * nv;
    const double uv = dot(u, v);
    const int y0 = i / gen.cols;
    const int x0 = i % gen.cols;
    std::size_t e = 0;
    for (int c = 0; c < channels; ++c)
      for (int dy = 0; dy < gen.k; ++dy)
        for (int dx = 0; dx < gen.k; ++dx, ++e)
          (*grad)(c, y0 + dy, x0 + dx) -= inv_m * (v[e] / denom - uv * u[e] / (nu * nu * denom));
  }
  return sum * inv_m;
}

double style_loss(const PatchList& gen, const std::vector<PatchList>& styles) {
  return style_loss(gen, as_refs(styles));
}

double light_loss(const LuminanceImage& gen, const LuminanceImage& content, const LightNet& net,
                  Tensor* grad) {
  LightNet::Trace trace;
  const auto eg = net.embed(gen.tensor(), grad ? &trace : nullptr);
  const auto ec = net.embed(content);
  const double inv = 1.0 / static_cast<double>(eg.size());
  double sum = 0.0;
  std::vector<double> ge(eg.size());
  for (std::size_t i = 0; i < eg.size(); ++i) {
    sum += (eg[i] - ec[i]) * (eg[i] - ec[i]);
    ge[i] = 2.0 * inv * (eg[i] - ec[i]);
  }
  if (grad) *grad = net.backward(trace, ge, nullptr);
  return sum * inv;
}

double tv_loss(const Tensor& img, Tensor* grad) {
  require(img.height() >= 2 && img.width() >= 2, "tv_loss: image must be at least 2x2");
  if (grad) *grad = Tensor(img.channels(), img.height(), img.width());
  double sum = 0.0;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        if (x + 1 < img.width()) {
          const double d = img(c, y, x + 1) - img(c, y, x);
          sum += d * d;
          if (grad) {
            (*grad)(c, y, x + 1) += 2.0 * d;
            (*grad)(c, y, x) -= 2.0 * d;
          }
        }
        if (y + 1 < img.height()) {
          const double d = img(c, y + 1, x) - img(c, y, x);
          sum += d * d;
          if (grad) {
            (*grad)(c, y + 1, x) += 2.0 * d;
            (*grad)(c, y, x) -= 2.0 * d;
          }
        }
      }
  return sum;
}

double tv_loss(const Image& img) { return tv_loss(img.tensor()); }

LossEvaluation evaluate_loss(const Tensor& gen, const Tensor& content, const StyleTargets& style,
                             const LossWeights& weights, const LossContext& ctx, GradientMode mode) {
  require(ctx.extractor != nullptr, "evaluate_loss: no feature extractor");
  require(gen.same_shape(content) && gen.channels() == 3,
          "evaluate_loss: generated and content images must be matching RGB tensors");
  require(weights.alpha >= 0 && weights.beta >= 0 && weights.gamma >= 0 &&
              std::isfinite(weights.alpha) && std::isfinite(weights.beta) &&
              std::isfinite(weights.gamma),
          "loss weights must be finite and nonnegative");
  const bool want_grad = mode != GradientMode::None;
  const LossLayers& layers = ctx.layers;

  std::vector<std::string> all_layers = layers.content;
  for (const auto& l : layers.style)
    if (std::find(all_layers.begin(), all_layers.end(), l) == all_layers.end()) all_layers.push_back(l);

  FeatureExtractor::Trace trace;
  const FeatureMaps gen_maps = ctx.extractor->extract(gen, all_layers, want_grad ? &trace : nullptr);
  FeatureMaps extracted;
  if (!ctx.content_features) extracted = ctx.extractor->extract(content, layers.content);
  const FeatureMaps& content_maps = ctx.content_features ? *ctx.content_features : extracted;

  LossEvaluation ev;
  LossBreakdown& b = ev.breakdown;
  std::map<std::string, Tensor> content_grads;
  b.content = content_loss_multi(gen_maps, content_maps, layers.content, want_grad ? &content_grads : nullptr);

  std::map<std::string, Tensor> style_grads;
  for (const auto& name : layers.style) {
    const auto it = style.find(name);
    require(it != style.end(), "evaluate_loss: no style targets for layer " + name);
    const FeatureMap& fmap = gen_maps.at(name);
    const PatchList patches = extract_patches(fmap, layers.patch_size);
    Tensor grad;
    b.style += style_loss(patches, it->second, want_grad ? &grad : nullptr, fmap.data.channels());
    if (want_grad) style_grads.emplace(name, std::move(grad));
  }

  Tensor light_grad_rgb;
  if (ctx.lightnet) {
    Tensor grad_lum;
    b.light = light_loss(to_luminance(Image(gen)), to_luminance(Image(content)), *ctx.lightnet,
                         want_grad ? &grad_lum : nullptr);
    if (want_grad) light_grad_rgb = luminance_backward(grad_lum);
  }

  Tensor tv_grad;
  b.tv = tv_loss(gen, want_grad ? &tv_grad : nullptr);
  b.total = b.content + weights.alpha * b.style + weights.beta * b.light + weights.gamma * b.tv;
  if (!want_grad) return ev;

  auto add_scaled = [](Tensor& dst, const Tensor& src, double s) {
    if (src.empty() || s == 0.0) return;
    auto& d = dst.values();
    const auto& v = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * v[i];
  };
  const Tensor zero(3, gen.height(), gen.width());

  if (mode == GradientMode::PerTerm) {
    ev.grad_content = content_grads.empty() ? zero : ctx.extractor->backward(trace, content_grads);
    ev.grad_style = style_grads.empty() ? zero : ctx.extractor->backward(trace, style_grads);
    ev.grad_light = light_grad_rgb.empty() ? zero : light_grad_rgb;
    ev.grad_tv = tv_grad;
    ev.grad_total = zero;
    add_scaled(ev.grad_total, ev.grad_content, 1.0);
    add_scaled(ev.grad_total, ev.grad_style, weights.alpha);
    add_scaled(ev.grad_total, ev.grad_light, weights.beta);
    add_scaled(ev.grad_total, ev.grad_tv, weights.gamma);
    return ev;
  }

  // One extractor backward for content and weighted style gradients.
  std::map<std::string, Tensor> layer_grads = std::move(content_grads);
  if (weights.alpha != 0.0)
    for (auto& [name, g] : style_grads) {
      g *= weights.alpha;
      auto [it, inserted] = layer_grads.try_emplace(name, g);
      if (!inserted) it->second += g;
    }
  ev.grad_total = layer_grads.empty() ? zero : ctx.extractor->backward(trace, layer_grads);
  add_scaled(ev.grad_total, light_grad_rgb, weights.beta);
  add_scaled(ev.grad_total, tv_grad, weights.gamma);
  return ev;
}

LossBreakdown total_loss(const Image& gen, const Image& content, const StyleTargets& style,
                         const LossWeights& weights, const LossContext& ctx) {
  return evaluate_loss(gen.tensor(), content.tensor(), style, weights, ctx).breakdown;
}

}  // namespace faceswap
