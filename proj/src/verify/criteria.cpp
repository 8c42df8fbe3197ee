#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/LU>

#include "faceswap/compositing.hpp"
#include "faceswap/error.hpp"
#include "faceswap/features.hpp"
#include "faceswap/geometry.hpp"
#include "faceswap/lightnet.hpp"
#include "faceswap/losses.hpp"
#include "faceswap/oracles.hpp"
#include "faceswap/pipeline.hpp"
#include "faceswap/synthetic.hpp"
#include "faceswap/trainer.hpp"
#include "faceswap/transformnet.hpp"
#include "faceswap/verify.hpp"

#ifndef FACESWAP_SOURCE_DIR
#define FACESWAP_SOURCE_DIR "."
#endif

namespace faceswap::verify {
namespace fs = std::filesystem;

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Tensor random_tensor(Rng& rng, int c, int h, int w, double lo, double hi) {
  Tensor t(c, h, w);
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

// ReLU-like activations: roughly a third of the entries are exactly zero.
Tensor random_activations(Rng& rng, int c, int h, int w) {
  Tensor t(c, h, w);
  for (double& v : t.values()) v = std::max(0.0, uniform(rng, -0.5, 1.0));
  return t;
}

// Smooth image in (0, 1): a few low-frequency sinusoids around mid-grey.
Image smooth_image(Rng& rng, int h, int w) {
  Image img(h, w);
  for (int c = 0; c < 3; ++c) {
    const double base = uniform(rng, 0.3, 0.7);
    double fy[3], fx[3], ph[3], amp[3];
    for (int i = 0; i < 3; ++i) {
      fy[i] = uniform(rng, 0.5, 2.0) * 2 * std::numbers::pi / h;
      fx[i] = uniform(rng, 0.5, 2.0) * 2 * std::numbers::pi / w;
      ph[i] = uniform(rng, 0, 2 * std::numbers::pi);
      amp[i] = uniform(rng, 0.03, 0.08);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = base;
        for (int i = 0; i < 3; ++i) v += amp[i] * std::sin(fy[i] * y + fx[i] * x + ph[i]);
        img.at(c, y, x) = v;
      }
  }
  return img;
}

LandmarkSet random_landmarks(Rng& rng, double lo, double hi) {
  std::array<Point2, kNumLandmarks> p{};
  for (auto& q : p) q = {uniform(rng, lo, hi), uniform(rng, lo, hi)};
  return LandmarkSet(p);
}

LandmarkSet perturb(const LandmarkSet& l, Rng& rng, double amount) {
  std::array<Point2, kNumLandmarks> p = l.points();
  for (auto& q : p) {
    q.x += uniform(rng, -amount, amount);
    q.y += uniform(rng, -amount, amount);
  }
  return LandmarkSet(p);
}

Mask ellipse_mask(int h, int w, double cy, double cx, double ry, double rx) {
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2) <= 1.0) m.at(y, x) = 1;
  return m;
}

bool rel_close(double a, double b, double tol, double* worst) {
  const double scale = std::max(std::abs(a), std::abs(b));
  const double err = scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
  *worst = std::max(*worst, err);
  return err <= tol;
}

std::vector<oracle::Vec> oracle_patches_of(const PatchList& p) {
  std::vector<oracle::Vec> out;
  for (int i = 0; i < p.count; ++i) {
    const auto s = p.patch(i);
    out.emplace_back(s.begin(), s.end());
  }
  return out;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Style loss of `gen` against a subset of precomputed style patch lists,
// summed over layers.
double layered_style_loss(const FeatureMaps& gen, const std::vector<std::map<std::string, PatchList>>& styles,
                          const std::vector<int>& subset, const std::vector<std::string>& layers, int k) {
  double total = 0.0;
  for (const auto& layer : layers) {
    StylePatches refs;
    for (int j : subset) refs.push_back(&styles[j].at(layer));
    total += style_loss(extract_patches(gen.at(layer), k), refs);
  }
  return total;
}

ExtractorSpec test_extractor(std::uint64_t seed) { return ExtractorSpec::small_random(seed); }

LightNetConfig small_lightnet(int resolution, std::uint64_t seed) {
  LightNetConfig c;
  c.resolution = resolution;
  c.channels = {4, 8, 8, 8};
  c.embedding_dim = 16;
  c.seed = seed;
  return c;
}

}  // namespace

// 1 -------------------------------------------------------------------------
namespace {

// Indices agree, or differ only where the oracle distances are equal to within
// rounding and the chosen patch is not an exact copy of a lower-indexed one
// (exact ties must go to the lowest index).
bool nn_equivalent(const std::vector<int>& got, const std::vector<int>& want, const std::vector<oracle::Vec>& gen,
                   const std::vector<std::vector<oracle::Vec>>& styles) {
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i] == want[i]) continue;
    const double dg = oracle::cosine_distance(gen[i], styles[got[i]][i]);
    const double dw = oracle::cosine_distance(gen[i], styles[want[i]][i]);
    if (std::abs(dg - dw) > 1e-12) return false;
    for (int j = 0; j < got[i]; ++j)
      if (styles[j][i] == styles[got[i]][i]) return false;
  }
  return true;
}

}  // namespace

CheckResult loss_oracles(const Context& ctx) {
  Rng rng(ctx.seed);
  int failures = 0;
  double worst_content = 0, worst_style = 0, worst_tv = 0, worst_light = 0;
  int subset_mismatch = 0, nn_mismatch = 0, patch_mismatch = 0;
  constexpr double kTol = 1e-10;

  for (int trial = 0; trial < 50; ++trial) {
    const int k = uniform_int(rng, 0, 1) == 0 ? 1 : 3;
    const int C = uniform_int(rng, 1, 16);
    const int H = uniform_int(rng, std::max(k, 2), 8);
    const int W = uniform_int(rng, std::max(k, 2), 8);
    const int N = uniform_int(rng, 1, 6);
    const int n_best = uniform_int(rng, 1, std::min(4, N));

    FeatureMap gen{random_activations(rng, C, H, W), "layer"};
    FeatureMap content{random_activations(rng, C, H, W), "layer"};
    std::vector<FeatureMap> style_maps;
    for (int j = 0; j < N; ++j) style_maps.push_back({random_activations(rng, C, H, W), "layer"});
    if (N >= 2 && uniform(rng, 0, 1) < 0.3) style_maps[1] = style_maps[0];  // exact ties
    if (uniform(rng, 0, 1) < 0.3)
      for (int c = 0; c < C; ++c) gen.data(c, 0, 0) = 0.0;  // a zero patch location when k = 1

    const LandmarkSet x = random_landmarks(rng, 0, 128);
    std::vector<LandmarkSet> style_lm;
    for (int j = 0; j < N; ++j) style_lm.push_back(perturb(x, rng, uniform(rng, 1, 10)));
    if (N >= 3 && uniform(rng, 0, 1) < 0.3) style_lm[2] = style_lm[0];

    // Content.
    if (!rel_close(content_loss(gen, content), oracle::content_loss(gen.data, content.data), kTol, &worst_content))
      ++failures;

    // Subset selection.
    const auto subset = select_style_subset(x, style_lm, n_best);
    if (subset != oracle::select_style_subset(x, style_lm, n_best)) ++subset_mismatch;

    // Patches, NN selection and style loss on the subset.
    const PatchList gp = extract_patches(gen, k);
    if (oracle_patches_of(gp) != oracle::patches(gen.data, k)) ++patch_mismatch;
    std::vector<PatchList> lists;
    std::vector<std::vector<oracle::Vec>> oracle_lists;
    for (int j : subset) {
      lists.push_back(extract_patches(style_maps[j], k));
      oracle_lists.push_back(oracle::patches(style_maps[j].data, k));
    }
    const auto gen_oracle = oracle::patches(gen.data, k);
    if (!nn_equivalent(nn_select(gp, lists).nn_index, oracle::nn_select(gen_oracle, oracle_lists), gen_oracle,
                       oracle_lists))
      ++nn_mismatch;
    if (!rel_close(style_loss(gp, lists), oracle::style_loss(gen_oracle, oracle_lists), kTol, &worst_style))
      ++failures;

    // Total variation on an RGB image of the same spatial size.
    const Tensor img = random_tensor(rng, 3, H, W, 0, 1);
    if (!rel_close(tv_loss(img), oracle::tv_loss(img), kTol, &worst_tv)) ++failures;

    // Lighting on a small seeded network.
    const LightNet net = LightNet::build(small_lightnet(16, ctx.seed + trial));
    const Tensor la = random_tensor(rng, 1, 16, 16, 0, 1);
    const Tensor lb = random_tensor(rng, 1, 16, 16, 0, 1);
    if (!rel_close(light_loss(LuminanceImage(la), LuminanceImage(lb), net), oracle::light_loss(la, lb, net), kTol,
                   &worst_light))
      ++failures;
  }
  failures += subset_mismatch + nn_mismatch + patch_mismatch;
  std::ostringstream d;
  d << "50 instances; max rel err content " << worst_content << ", style " << worst_style << ", tv " << worst_tv
    << ", light " << worst_light << "; index mismatches subset " << subset_mismatch << ", nn " << nn_mismatch
    << ", patches " << patch_mismatch;
  return {1, "", failures == 0, d.str(), 0.0};
}

// 2 -------------------------------------------------------------------------
namespace {

double gradient_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace

CheckResult gradient_checks(const Context& ctx) {
  Rng rng(ctx.seed + 2);
  constexpr int R = 32;
  constexpr double kStep = 1e-4, kTol = 1e-4;
  const FeatureExtractor extractor = FeatureExtractor::load(test_extractor(ctx.seed));
  const LightNet lightnet = LightNet::build(small_lightnet(R, ctx.seed + 1));

  std::ostringstream detail;
  bool ok = true;
  for (int k : {1, 3}) {
    LossLayers layers;
    layers.patch_size = k;
    const Tensor gen = smooth_image(rng, R, R).tensor();
    Tensor noisy = gen;
    for (double& v : noisy.values()) v = std::clamp(v + uniform(rng, -0.05, 0.05), 0.0, 1.0);
    const Tensor content = smooth_image(rng, R, R).tensor();

    std::vector<std::map<std::string, PatchList>> styles(3);
    for (auto& s : styles) {
      const FeatureMaps maps = extractor.extract(smooth_image(rng, R, R), layers.style);
      for (const auto& l : layers.style) s.emplace(l, extract_patches(maps.at(l), k));
    }
    StyleTargets targets;
    for (const auto& l : layers.style)
      for (auto& s : styles) targets[l].push_back(&s.at(l));

    LossContext lctx{&extractor, &lightnet, nullptr, layers};
    std::vector<std::string> all_layers = layers.content;
    all_layers.insert(all_layers.end(), layers.style.begin(), layers.style.end());
    const LossWeights weights{2.0, 5.0, 0.1};
    const LossEvaluation ev = evaluate_loss(noisy, content, targets, weights, lctx, GradientMode::PerTerm);

    // Non-differentiable points: a ReLU changing state, or a nearest style
    // patch switching. Central differences straddling one are meaningless,
    // so such coordinates are redrawn and counted.
    auto signature = [&](const Tensor& img) {
      std::vector<std::uint8_t> sig;
      FeatureExtractor::Trace tr;
      const FeatureMaps maps = extractor.extract(img, all_layers, &tr);
      for (std::size_t a = 1; a < tr.activations.size(); ++a)
        for (double v : tr.activations[a].values()) sig.push_back(v > 0.0);
      for (const auto& l : layers.style)
        for (int j : nn_select(extract_patches(maps.at(l), k), targets.at(l)).nn_index)
          sig.push_back(static_cast<std::uint8_t>(j));
      LightNet::Trace lt;
      lightnet.embed(to_luminance(Image(img)).tensor(), &lt);
      for (const auto& act : lt.conv_out)
        for (double v : act.values()) sig.push_back(v > 0.0);
      return sig;
    };

    std::set<std::tuple<int, int, int>> seen;
    std::vector<oracle::Coord> coords;
    std::vector<LossBreakdown> plus, minus;
    Tensor x = noisy;
    int redrawn = 0;
    while (coords.size() < 100 && redrawn < 1000) {
      const oracle::Coord p{uniform_int(rng, 0, 2), uniform_int(rng, 0, R - 1), uniform_int(rng, 0, R - 1)};
      if (!seen.insert({p.c, p.y, p.x}).second) continue;
      const double orig = x(p.c, p.y, p.x);
      x(p.c, p.y, p.x) = orig + kStep;
      const LossBreakdown bp = evaluate_loss(x, content, targets, weights, lctx).breakdown;
      const auto sp = signature(x);
      x(p.c, p.y, p.x) = orig - kStep;
      const LossBreakdown bm = evaluate_loss(x, content, targets, weights, lctx).breakdown;
      const auto sm = signature(x);
      x(p.c, p.y, p.x) = orig;
      if (sp != sm) {
        ++redrawn;
        continue;
      }
      coords.push_back(p);
      plus.push_back(bp);
      minus.push_back(bm);
    }
    if (coords.size() < 100) ok = false;

    struct Term {
      const char* name;
      const Tensor* grad;
      double LossBreakdown::*field;
    };
    const Term terms[] = {{"content", &ev.grad_content, &LossBreakdown::content},
                          {"style", &ev.grad_style, &LossBreakdown::style},
                          {"light", &ev.grad_light, &LossBreakdown::light},
                          {"tv", &ev.grad_tv, &LossBreakdown::tv},
                          {"total", &ev.grad_total, &LossBreakdown::total}};
    detail << "k=" << k << " (" << coords.size() << " points, " << redrawn << " redrawn at kinks):";
    for (const auto& term : terms) {
      double worst = 0.0;
      int bad = 0;
      for (std::size_t i = 0; i < coords.size(); ++i) {
        const double numeric = (plus[i].*term.field - minus[i].*term.field) / (2 * kStep);
        const double analytic = (*term.grad)(coords[i].c, coords[i].y, coords[i].x);
        const double e = gradient_error(analytic, numeric);
        worst = std::max(worst, e);
        if (e >= kTol) ++bad;
      }
      if (bad) ok = false;
      detail << " " << term.name << " " << fmt("%.1e", worst);
      if (bad) detail << " (" << bad << " bad)";
    }
    detail << (k == 1 ? "; " : "");
  }
  return {2, "", ok, detail.str(), 0.0};
}

// 3 -------------------------------------------------------------------------
CheckResult structural_budget(const Context& ctx) {
  const TransformNet net = TransformNet::build(128, NetworkSpec::standard(), ctx.seed);
  const TransformNet grown = net.grow(256, ctx.seed + 1);
  const double p128 = static_cast<double>(net.param_count());
  const double p256 = static_cast<double>(grown.param_count());
  const double frozen = static_cast<double>(grown.frozen_param_count()) / p256;
  const bool ok = p128 >= 850e3 && p128 <= 1.15e6 && p256 >= 1.7e6 && p256 <= 2.3e6 && frozen >= 0.4 &&
                  frozen <= 0.6;
  std::ostringstream d;
  d << "128: " << static_cast<long>(p128) << " params; 256: " << static_cast<long>(p256) << " params, frozen "
    << fmt("%.3f", frozen);
  return {3, "", ok, d.str(), 0.0};
}

// 4 -------------------------------------------------------------------------
CheckResult freeze_invariant(const Context& ctx) {
  constexpr int R = 64;
  TransformNet stage1 = TransformNet::build(R / 2, NetworkSpec::standard(), ctx.seed);
  TransformNet grown = stage1.grow(R, ctx.seed + 1);

  std::map<std::string, std::pair<std::vector<double>, bool>> before;
  for (const auto& p : grown.parameters()) before[p.name] = {*p.values, p.frozen};

  const synth::ToyCorpus toy = synth::make_toy_corpus(R, 4, 4, ctx.seed + 4);
  FaceSet content, style_faces;
  for (const auto& f : toy.content) {
    content.images.push_back(f.image);
    content.landmarks.push_back(f.landmarks);
  }
  for (const auto& f : toy.styles) {
    style_faces.images.push_back(f.image);
    style_faces.landmarks.push_back(f.landmarks);
  }
  TrainConfig config;
  config.stage = 2;
  config.resolution = R;
  config.iterations = 50;
  config.batch_size = 2;
  config.seed = ctx.seed;
  config.alpha_start = 20.0;
  config.alpha = 80.0;
  config.n_best = 2;
  config.extractor = test_extractor(ctx.seed);
  config.flip_styles = false;
  const FeatureExtractor extractor = FeatureExtractor::load(config.extractor);
  const StyleSet styles = precompute_style_features(StyleSet(style_faces, false), extractor, config.layers.style,
                                                    config.layers.patch_size);
  TrainResult result = train_stage(config, std::move(grown), {&content, &styles, &extractor, nullptr});

  int frozen_total = 0, frozen_changed = 0, trained_total = 0, trained_same = 0;
  for (const auto& p : result.net.parameters()) {
    const auto& [values, was_frozen] = before.at(p.name);
    const bool identical = values.size() == p.values->size() &&
                           std::memcmp(values.data(), p.values->data(), values.size() * sizeof(double)) == 0;
    if (was_frozen) {
      ++frozen_total;
      if (!identical) ++frozen_changed;
    } else {
      ++trained_total;
      if (identical) ++trained_same;
    }
  }
  std::ostringstream d;
  d << frozen_total << " stage-1 tensors, " << frozen_changed << " changed; " << trained_total
    << " stage-2 tensors, " << trained_same << " unchanged";
  const bool ok = frozen_total > 0 && trained_total > 0 && frozen_changed == 0 && trained_same == 0;
  return {4, "", ok, d.str(), 0.0};
}

// 5 -------------------------------------------------------------------------
CheckResult overfit_smoke(const Context& ctx) {
  constexpr int R = 64;
  const synth::ToyCorpus toy = synth::make_toy_corpus(R, 8, 4, ctx.seed + 5);
  FaceSet content, style_faces;
  for (const auto& f : toy.content) {
    content.images.push_back(f.image);
    content.landmarks.push_back(f.landmarks);
  }
  for (const auto& f : toy.styles) {
    style_faces.images.push_back(f.image);
    style_faces.landmarks.push_back(f.landmarks);
  }
  TrainConfig config;
  config.resolution = R;
  config.iterations = 200;
  config.batch_size = 2;
  config.seed = ctx.seed;
  // Fixed style weight so leading and trailing totals are comparable.
  config.alpha_start = 20.0;
  config.alpha = 20.0;
  config.gamma = 0.3;
  config.n_best = 4;
  config.flip_styles = false;
  config.network = NetworkSpec::standard();
  config.extractor = test_extractor(ctx.seed);
  const FeatureExtractor extractor = FeatureExtractor::load(config.extractor);
  const StyleSet styles = precompute_style_features(StyleSet(style_faces, false), extractor, config.layers.style,
                                                    config.layers.patch_size);
  const TrainResult result = train_stage(config, TransformNet::build(R, config.network, ctx.seed),
                                         {&content, &styles, &extractor, nullptr});
  double head = 0, tail = 0;
  const auto& c = result.curve;
  for (int i = 0; i < 10; ++i) {
    head += c[i].loss.total / 10;
    tail += c[c.size() - 10 + i].loss.total / 10;
  }
  std::ostringstream d;
  d << "leading mean " << fmt("%.4g", head) << ", trailing mean " << fmt("%.4g", tail) << " (ratio "
    << fmt("%.3f", tail / head) << ")";
  return {5, "", tail <= 0.5 * head, d.str(), 0.0};
}

// 6 -------------------------------------------------------------------------
CheckResult style_identity_monotonicity(const Context& ctx) {
  Rng rng(ctx.seed + 6);
  constexpr int R = 32;
  const FeatureExtractor extractor = FeatureExtractor::load(test_extractor(ctx.seed));
  const LossLayers layers;
  int identity_failures = 0, monotone_failures = 0;
  double worst_identity = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int N = uniform_int(rng, 2, 6);
    const int k = trial % 2 == 0 ? 1 : 3;
    std::vector<Image> imgs;
    std::vector<std::map<std::string, PatchList>> feats(N);
    std::vector<LandmarkSet> lms;
    const LandmarkSet base = random_landmarks(rng, 0, R);
    for (int j = 0; j < N; ++j) {
      imgs.push_back(smooth_image(rng, R, R));
      const FeatureMaps maps = extractor.extract(imgs.back(), layers.style);
      for (const auto& l : layers.style) feats[j].emplace(l, extract_patches(maps.at(l), k));
      lms.push_back(perturb(base, rng, 3.0));
    }
    // Identity: the generated image is one of the selected styles.
    const int member = uniform_int(rng, 0, N - 1);
    const LandmarkSet query = perturb(base, rng, 3.0);
    const int n_best = uniform_int(rng, 1, N);
    std::vector<int> subset = select_style_subset(query, lms, n_best);
    if (std::find(subset.begin(), subset.end(), member) == subset.end()) subset.back() = member;
    const FeatureMaps member_maps = extractor.extract(imgs[member], layers.style);
    const double id_loss = layered_style_loss(member_maps, feats, subset, layers.style, k);
    worst_identity = std::max(worst_identity, id_loss);
    if (id_loss != 0.0) ++identity_failures;

    // Monotonicity: growing N_best along the landmark ordering.
    const FeatureMaps gen_maps = extractor.extract(smooth_image(rng, R, R), layers.style);
    double prev = 1e300;
    for (int n = 1; n <= N; ++n) {
      const double l = layered_style_loss(gen_maps, feats, select_style_subset(query, lms, n), layers.style, k);
      if (l > prev) ++monotone_failures;
      prev = l;
    }
  }
  std::ostringstream d;
  d << "100 trials; max identity loss " << worst_identity << ", identity failures " << identity_failures
    << ", monotonicity violations " << monotone_failures;
  return {6, "", identity_failures == 0 && monotone_failures == 0, d.str(), 0.0};
}

// 7 -------------------------------------------------------------------------
CheckResult poisson_solver(const Context& ctx) {
  Rng rng(ctx.seed + 7);
  // src == dst.
  const Image dst = smooth_image(rng, 48, 40);
  const Mask mask = ellipse_mask(48, 40, 24, 20, 16, 13);
  const Image same = poisson_clone(dst, dst, mask);
  double same_err = 0.0;
  for (std::size_t i = 0; i < dst.tensor().size(); ++i)
    same_err = std::max(same_err, std::abs(same.tensor().values()[i] - dst.tensor().values()[i]));

  // Residual with a foreign source.
  const Image src = smooth_image(rng, 48, 40);
  PoissonStats stats;
  const Tensor sol = solve_poisson(src, dst, mask, {}, &stats);
  const double residual = poisson_residual(sol, src, mask);

  // Dense versus iterative on a 16×16 mask.
  const Image s2 = smooth_image(rng, 24, 24), d2 = smooth_image(rng, 24, 24);
  Mask square(24, 24);
  for (int y = 4; y < 20; ++y)
    for (int x = 4; x < 20; ++x) square.at(y, x) = 1;
  const Tensor iterative = solve_poisson(s2, d2, square);
  const Tensor dense = solve_poisson_dense(s2, d2, square);
  double agree = 0.0;
  for (std::size_t i = 0; i < dense.size(); ++i)
    agree = std::max(agree, std::abs(iterative.values()[i] - dense.values()[i]));

  std::ostringstream d;
  d << "src==dst err " << fmt("%.2e", same_err) << ", residual " << fmt("%.2e", residual) << ", dense vs CG "
    << fmt("%.2e", agree);
  return {7, "", same_err <= 1e-6 && residual < 1e-6 && agree <= 1e-8, d.str(), 0.0};
}

// 8 -------------------------------------------------------------------------
CheckResult alignment_recovery(const Context& ctx) {
  Rng rng(ctx.seed + 8);
  double worst_param = 0.0, worst_warp = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const LandmarkSet src = random_landmarks(rng, 0, 128);
    AffineTransform T;
    do {
      T.A << uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2);
    } while (std::abs(T.A.determinant()) < 0.2);
    T.t = {uniform(rng, -50, 50), uniform(rng, -50, 50)};
    const AffineTransform R = estimate_affine(src, T.apply(src));
    worst_param = std::max({worst_param, (R.A - T.A).cwiseAbs().maxCoeff(), (R.t - T.t).cwiseAbs().maxCoeff()});
  }
  for (int trial = 0; trial < 10; ++trial) {
    constexpr int S = 96;
    const Image img = smooth_image(rng, S, S);
    const double angle = uniform(rng, -0.25, 0.25), scale = uniform(rng, 0.9, 1.1);
    AffineTransform T;
    T.A << scale * std::cos(angle), -scale * std::sin(angle), scale * std::sin(angle), scale * std::cos(angle);
    const Eigen::Vector2d centre(S / 2.0, S / 2.0);
    T.t = centre - T.A * centre + Eigen::Vector2d(uniform(rng, -4, 4), uniform(rng, -4, 4));
    const AffineTransform Ti = invert_affine(T);
    const Image round = warp_image(warp_image(img, T, S, S), Ti, S, S);
    for (int y = 2; y < S - 2; ++y)
      for (int x = 2; x < S - 2; ++x) {
        // Skip pixels whose intermediate sample left the frame.
        const Point2 q = T.apply(Point2{static_cast<double>(x), static_cast<double>(y)});
        if (q.x < 2 || q.y < 2 || q.x > S - 3 || q.y > S - 3) continue;
        for (int c = 0; c < 3; ++c) worst_warp = std::max(worst_warp, std::abs(round.at(c, y, x) - img.at(c, y, x)));
      }
  }
  std::ostringstream d;
  d << "max parameter error " << fmt("%.2e", worst_param) << ", max round-trip error " << fmt("%.4f", worst_warp);
  return {8, "", worst_param <= 1e-8 && worst_warp < 0.02, d.str(), 0.0};
}

// 9 -------------------------------------------------------------------------
CheckResult lighting_separation(const Context& ctx) {
  constexpr int R = 64;
  const RelightingSet set = generate_relighting_set(R, ctx.seed + 9);
  const auto train = make_lighting_pairs(set, {0, 1, 2, 3, 4, 5}, 512, ctx.seed + 10);
  const auto held_out = make_lighting_pairs(set, {6, 7}, 256, ctx.seed + 11);
  LightTrainConfig config;
  config.net.resolution = R;
  config.net.seed = ctx.seed;
  config.seed = ctx.seed;
  const LightTrainResult result = train_lightnet(train, config);
  const SeparationStats before = faceswap::lighting_separation(LightNet::build(config.net), held_out);
  const SeparationStats after = faceswap::lighting_separation(result.net, held_out);
  std::ostringstream d;
  d << "held-out same " << fmt("%.4f", after.same_mean) << ", different " << fmt("%.4f", after.different_mean)
    << ", ratio " << fmt("%.2f", after.ratio()) << " (untrained " << fmt("%.2f", before.ratio()) << ")";
  return {9, "", after.ratio() > 2.0, d.str(), 0.0};
}

// 10 ------------------------------------------------------------------------
CheckResult end_to_end(const Context& ctx) {
  const fs::path fx = ctx.root / "fixtures";
  const Image input = load_image(fx / "input.png");
  const LandmarkSet lm = load_landmarks(fx / "input_landmarks.json");
  const Mask mask = load_mask(fx / "input_mask.png");
  const ReferenceFace ref = load_reference(fx / "reference_face.json");
  const TransformNet net = TransformNet::load(fx / "model_128");

  const Image a = swap(input, lm, mask, net, ref);
  const Image b = swap(input, lm, mask, net, ref);
  const bool same_shape = a.height() == input.height() && a.width() == input.width();
  const bool reproducible = a.tensor().values() == b.tensor().values();

  bool outside_exact = same_shape;
  double pass_err = 0.0;
  const Image pass = swap(input, lm, mask, [](const Image& face) { return face; }, ref);
  for (int y = 0; y < input.height() && same_shape; ++y)
    for (int x = 0; x < input.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        if (mask.inside(y, x)) {
          pass_err = std::max(pass_err, std::abs(pass.at(c, y, x) - input.at(c, y, x)));
        } else if (a.at(c, y, x) != input.at(c, y, x) || pass.at(c, y, x) != input.at(c, y, x)) {
          outside_exact = false;
        }
      }
  std::ostringstream d;
  d << "bit-reproducible " << (reproducible ? "yes" : "no") << ", outside mask exact "
    << (outside_exact ? "yes" : "no") << ", pass-through max error inside mask " << fmt("%.4f", pass_err);
  return {10, "", same_shape && reproducible && outside_exact && pass_err < 0.02, d.str(), 0.0};
}

// 11 ------------------------------------------------------------------------
CheckResult full_scale_configs(const Context& ctx) {
  const fs::path dir = ctx.root / "configs";
  std::vector<std::string> problems;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) problems.push_back(what);
  };
  auto check_common = [&](const TrainConfig& c, const std::string& tag) {
    expect(c.iterations == 10000, tag + " iterations");
    expect(c.batch_size == 16, tag + " batch size");
    expect(c.lr_start == 1e-3 && c.lr_end == 1e-4, tag + " learning rates");
    expect(c.gamma == 0.3, tag + " gamma");
    expect(c.n_best && *c.n_best == 16, tag + " n_best");
    expect(c.layers.patch_size == 1, tag + " patch size");
    expect(c.layers.style == std::vector<std::string>{"relu3_1", "relu4_1"}, tag + " style layers");
    expect(c.layers.content == std::vector<std::string>{"relu4_2"}, tag + " content layers");
    expect(c.extractor.source == ExtractorSpec::Source::Pretrained, tag + " extractor must be pretrained VGG-19");
    expect(c.flip_styles, tag + " style flips");
    expect(!c.lightnet.empty(), tag + " lighting network");
  };
  try {
    const TrainConfig s1 = TrainConfig::load(dir / "stage1_128.json");
    check_common(s1, "stage 1");
    expect(s1.stage == 1 && s1.resolution == 128, "stage 1 resolution");
    expect(s1.alpha_start == 0.0 && s1.alpha == 20.0, "stage 1 alpha 0 -> 20");
    expect(style_weight_schedule(0, s1) == 0.0, "stage 1 alpha at iteration 0");
    const TrainConfig s2 = TrainConfig::load(dir / "stage2_256.json");
    check_common(s2, "stage 2");
    expect(s2.stage == 2 && s2.resolution == 256, "stage 2 resolution");
    expect(s2.alpha == 80.0, "stage 2 alpha 80");
    expect(!s2.init_checkpoint.empty(), "stage 2 starts from a grown checkpoint");
  } catch (const std::exception& e) {
    problems.push_back(e.what());
  }
  std::string d = problems.empty() ? "stage1_128.json and stage2_256.json validate" : "";
  for (const auto& p : problems) d += (d.empty() ? "" : "; ") + p;
  return {11, "", problems.empty(), d, 0.0};
}

// ---------------------------------------------------------------------------

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list = {
      {1, "loss-oracle equivalence", {"oracles"}, loss_oracles},
      {2, "gradient checks", {"grads"}, gradient_checks},
      {3, "structural budget", {"oracles"}, structural_budget},
      {4, "freeze invariant", {"training"}, freeze_invariant},
      {5, "overfit smoke test", {"training"}, overfit_smoke},
      {6, "style-loss identity and monotonicity", {"oracles"}, style_identity_monotonicity},
      {7, "poisson solver", {"oracles"}, poisson_solver},
      {8, "alignment recovery", {"oracles"}, alignment_recovery},
      {9, "lighting separation", {"training"}, lighting_separation},
      {10, "end-to-end determinism", {"oracles"}, end_to_end},
      {11, "full-scale configs", {"oracles"}, full_scale_configs},
  };
  return list;
}

std::vector<std::string> suite_names() { return {"grads", "oracles", "training", "all"}; }

std::vector<CheckResult> run_suite(const std::string& suite, const Context& ctx, std::ostream& out,
                                   const std::vector<int>& only) {
  const auto names = suite_names();
  require(std::find(names.begin(), names.end(), suite) != names.end(), "unknown suite '" + suite + "'");
  std::vector<CheckResult> results;
  for (const auto& c : criteria()) {
    if (suite != "all" && std::find(c.suites.begin(), c.suites.end(), suite) == c.suites.end()) continue;
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = c.run(ctx);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.id = c.id;
    r.name = c.name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char head[160];
    std::snprintf(head, sizeof head, "[%s] %2d %s (%.1f s): ", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
                  r.seconds);
    out << head << r.detail << std::endl;
    results.push_back(std::move(r));
  }
  return results;
}

fs::path default_root() {
  if (const char* env = std::getenv("FACESWAP_ROOT"); env && *env) return env;
  return FACESWAP_SOURCE_DIR;
}

}  // namespace faceswap::verify
