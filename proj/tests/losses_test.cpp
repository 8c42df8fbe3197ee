#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "faceswap/error.hpp"
#include "faceswap/lightnet.hpp"
#include "faceswap/losses.hpp"
#include "faceswap/oracles.hpp"
#include "support.hpp"

using namespace faceswap;
using namespace testing;

namespace {

FeatureMap random_map(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  return {random_tensor(rng, c, h, w, lo, hi), "layer"};
}

std::vector<double> as_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<oracle::Vec> oracle_patches(const PatchList& p) {
  std::vector<oracle::Vec> out;
  for (int i = 0; i < p.count; ++i) out.push_back(as_vec(p.patch(i)));
  return out;
}

LandmarkSet perturbed(const LandmarkSet& l, Rng& rng, double amount) {
  std::array<Point2, kNumLandmarks> p = l.points();
  for (auto& q : p) q = {q.x + uniform(rng, -amount, amount), q.y + uniform(rng, -amount, amount)};
  return LandmarkSet(p);
}

LightNetConfig small_light(int res, std::uint64_t seed, bool bias = true) {
  LightNetConfig c;
  c.resolution = res;
  c.channels = {4, 6, 8, 8};
  c.embedding_dim = 12;
  c.with_bias = bias;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("content loss examples") {
    Rng rng(51);
    const FeatureMap a = random_map(rng, 5, 4, 6);
    CHECK(content_loss(a, a) == 0.0);
    FeatureMap b = a;
    for (double& v : b.data.values()) v += 1.0;
    CHECK(content_loss(b, a) == doctest::Approx(1.0).epsilon(1e-12));
    const FeatureMap c = random_map(rng, 5, 4, 6);
    CHECK(content_loss(a, c) == doctest::Approx(oracle::content_loss(a.data, c.data)).epsilon(1e-10));
  }

  TEST_CASE("content loss rejects shape mismatch") {
    Rng rng(52);
    CHECK_THROWS_AS(content_loss(random_map(rng, 2, 3, 3), random_map(rng, 2, 3, 4)), ValidationError);
  }

  TEST_CASE("multi-layer content loss adds layers") {
    Rng rng(53);
    FeatureMaps gen, content;
    for (const char* name : {"l1", "l2", "l3"}) {
      gen[name] = random_map(rng, 3, 4, 4);
      content[name] = random_map(rng, 3, 4, 4);
    }
    CHECK(content_loss_multi(gen, content, {"l1"}) == content_loss(gen["l1"], content["l1"]));
    FeatureMaps g2{{"a", gen["l1"]}, {"b", gen["l1"]}}, c2{{"a", content["l1"]}, {"b", content["l1"]}};
    CHECK(content_loss_multi(g2, c2, {"a", "b"}) ==
          doctest::Approx(2 * content_loss(gen["l1"], content["l1"])).epsilon(1e-14));
    double manual = 0.0;
    for (const char* name : {"l1", "l2", "l3"}) manual += oracle::content_loss(gen[name].data, content[name].data);
    CHECK(content_loss_multi(gen, content, {"l1", "l2", "l3"}) == doctest::Approx(manual).epsilon(1e-10));
  }

  TEST_CASE("patch counts") {
    Rng rng(54);
    const FeatureMap f = random_map(rng, 7, 4, 4);
    const PatchList p1 = extract_patches(f, 1);
    CHECK(p1.count == 16);
    CHECK(p1.length == 7);
    const PatchList p3 = extract_patches(f, 3);
    CHECK(p3.count == 4);
    CHECK(p3.length == 63);
    CHECK_THROWS_AS(extract_patches(f, 5), ValidationError);
    CHECK_THROWS_AS(extract_patches(f, 0), ValidationError);
  }

  TEST_CASE("patch contents match direct slicing") {
    Rng rng(55);
    for (int k : {1, 3}) {
      const FeatureMap f = random_map(rng, 4, 6, 5);
      const PatchList p = extract_patches(f, k);
      CHECK(oracle_patches(p) == oracle::patches(f.data, k));
      for (int i = 0; i < p.count; ++i) {
        const auto v = p.patch(i);
        CHECK(p.norms[i] == doctest::Approx(std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0))));
      }
    }
  }

  TEST_CASE("cosine distance endpoints") {
    const std::vector<double> u{1, 2, 3}, neg{-1, -2, -3}, orth{3, 0, -1}, zero{0, 0, 0};
    CHECK(cosine_distance(u, u) == 0.0);
    CHECK(cosine_distance(u, orth) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_distance(u, neg) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(cosine_distance(zero, zero) == 0.0);
    CHECK(cosine_distance(zero, u) == 1.0);
    CHECK(cosine_distance(u, zero) == 1.0);
  }

  TEST_CASE("cosine distance is scale invariant and bounded") {
    Rng rng(56);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> u(9), v(9);
      for (double& x : u) x = uniform(rng, -1, 1);
      for (double& x : v) x = uniform(rng, -1, 1);
      const double d = cosine_distance(u, v);
      CHECK(d >= 0.0);
      CHECK(d <= 2.0);
      std::vector<double> s = u;
      for (double& x : s) x *= 3.7;
      CHECK(cosine_distance(s, v) == doctest::Approx(d).epsilon(1e-12));
      CHECK(d == doctest::Approx(oracle::cosine_distance(u, v)).epsilon(1e-12));
    }
  }

  TEST_CASE("style subset selection") {
    Rng rng(57);
    const LandmarkSet x = random_landmarks(rng, 0, 128);
    std::vector<LandmarkSet> styles;
    for (int j = 0; j < 6; ++j) styles.push_back(perturbed(x, rng, 1 + j));
    std::reverse(styles.begin(), styles.end());

    const auto all = select_style_subset(x, styles, 6);
    CHECK(all.size() == 6);
    for (std::size_t i = 1; i < all.size(); ++i)
      CHECK(landmark_distance(x, styles[all[i - 1]]) <= landmark_distance(x, styles[all[i]]));

    styles[3] = x;
    CHECK(select_style_subset(x, styles, 2).front() == 3);

    for (int trial = 0; trial < 20; ++trial) {
      std::vector<LandmarkSet> s;
      const int n = 1 + trial % 7;
      for (int j = 0; j < n; ++j) s.push_back(perturbed(x, rng, 5));
      if (n >= 3) s[2] = s[0];  // tie resolved by the lower index
      const int k = 1 + trial % n;
      CHECK(select_style_subset(x, s, k) == oracle::select_style_subset(x, s, k));
    }
    CHECK_THROWS_AS(select_style_subset(x, styles, 7), ValidationError);
    CHECK_THROWS_AS(select_style_subset(x, styles, 0), ValidationError);
  }

  TEST_CASE("nearest-neighbour selection") {
    Rng rng(58);
    const PatchList gen = extract_patches(random_map(rng, 6, 5, 5), 1);
    const std::vector<PatchList> one{extract_patches(random_map(rng, 6, 5, 5), 1)};
    for (int idx : nn_select(gen, one).nn_index) CHECK(idx == 0);

    std::vector<PatchList> styles;
    for (int j = 0; j < 4; ++j) styles.push_back(extract_patches(random_map(rng, 6, 5, 5), 1));
    styles[2] = gen;
    for (int idx : nn_select(gen, styles).nn_index) CHECK(idx == 2);

    // Exact duplicates go to the lower index.
    styles[1] = gen;
    for (int idx : nn_select(gen, styles).nn_index) CHECK(idx == 1);
  }

  TEST_CASE("nearest-neighbour selection matches the exhaustive oracle") {
    Rng rng(59);
    for (int trial = 0; trial < 20; ++trial) {
      const int k = trial % 2 ? 3 : 1;
      const PatchList gen = extract_patches(random_map(rng, 5, 6, 6), k);
      std::vector<PatchList> styles;
      std::vector<std::vector<oracle::Vec>> os;
      for (int j = 0; j < 4; ++j) {
        styles.push_back(extract_patches(random_map(rng, 5, 6, 6), k));
        os.push_back(oracle_patches(styles.back()));
      }
      CHECK(nn_select(gen, styles).nn_index == oracle::nn_select(oracle_patches(gen), os));
    }
  }

  TEST_CASE("style loss examples") {
    Rng rng(60);
    const PatchList gen = extract_patches(random_map(rng, 4, 5, 5), 1);
    std::vector<PatchList> styles{extract_patches(random_map(rng, 4, 5, 5), 1), gen};
    CHECK(style_loss(gen, styles) == 0.0);

    FeatureMap a{Tensor(2, 1, 1), "l"}, b{Tensor(2, 1, 1), "l"};
    a.data(0, 0, 0) = 1.0;
    b.data(1, 0, 0) = 2.0;
    CHECK(style_loss(extract_patches(a, 1), std::vector<PatchList>{extract_patches(b, 1)}) == 1.0);
  }

  TEST_CASE("style loss matches the brute-force oracle") {
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
      const int k = trial % 2 ? 3 : 1;
      const PatchList gen = extract_patches(random_map(rng, 6, 5, 7, 0, 1), k);
      std::vector<PatchList> styles;
      std::vector<std::vector<oracle::Vec>> os;
      for (int j = 0; j < 3; ++j) {
        styles.push_back(extract_patches(random_map(rng, 6, 5, 7, 0, 1), k));
        os.push_back(oracle_patches(styles.back()));
      }
      CHECK(style_loss(gen, styles) == doctest::Approx(oracle::style_loss(oracle_patches(gen), os)).epsilon(1e-10));
    }
  }

  TEST_CASE("style loss is monotone in the subset and permutation invariant") {
    Rng rng(62);
    const PatchList gen = extract_patches(random_map(rng, 5, 6, 6), 1);
    std::vector<PatchList> styles;
    for (int j = 0; j < 6; ++j) styles.push_back(extract_patches(random_map(rng, 5, 6, 6), 1));
    double previous = 3.0;
    for (std::size_t n = 1; n <= styles.size(); ++n) {
      const double v = style_loss(gen, std::vector<PatchList>(styles.begin(), styles.begin() + n));
      CHECK(v <= previous);
      previous = v;
    }
    std::vector<PatchList> shuffled = styles;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(style_loss(gen, shuffled) == doctest::Approx(style_loss(gen, styles)).epsilon(1e-12));
  }

  TEST_CASE("style loss rejects mismatched patch lists") {
    Rng rng(63);
    const PatchList gen = extract_patches(random_map(rng, 3, 4, 4), 1);
    CHECK_THROWS_AS(style_loss(gen, std::vector<PatchList>{}), ValidationError);
    CHECK_THROWS_AS(style_loss(gen, std::vector<PatchList>{extract_patches(random_map(rng, 3, 5, 4), 1)}),
                    ValidationError);
  }

  TEST_CASE("lighting loss") {
    Rng rng(64);
    const LightNet net = LightNet::build(small_light(16, 3));
    const LuminanceImage a(random_tensor(rng, 1, 16, 16)), b(random_tensor(rng, 1, 16, 16));
    CHECK(light_loss(a, a, net) == 0.0);
    CHECK(light_loss(a, b, net) == doctest::Approx(oracle::light_loss(a.tensor(), b.tensor(), net)).epsilon(1e-10));
    CHECK(light_loss(a, b, net) == doctest::Approx(light_loss(b, a, net)).epsilon(1e-14));
    CHECK_THROWS_AS(light_loss(LuminanceImage(8, 8), LuminanceImage(8, 8), net), ValidationError);
  }

  TEST_CASE("total variation examples") {
    Tensor t(1, 2, 2);
    t(0, 0, 1) = 1.0;
    t(0, 1, 1) = 1.0;
    CHECK(tv_loss(t) == 2.0);
    CHECK(tv_loss(Image(6, 5, 0.4)) == 0.0);
    Rng rng(65);
    const Image img = random_image(rng, 7, 9);
    Tensor shifted = img.tensor();
    for (double& v : shifted.values()) v += 0.25;
    CHECK(tv_loss(shifted) == doctest::Approx(tv_loss(img.tensor())).epsilon(1e-12));
    CHECK(tv_loss(img.tensor()) == doctest::Approx(oracle::tv_loss(img.tensor())).epsilon(1e-12));
  }

  TEST_CASE("total variation gradient matches finite differences") {
    Rng rng(66);
    const Tensor img = random_tensor(rng, 3, 5, 6);
    Tensor grad;
    tv_loss(img, &grad);
    const auto numeric = oracle::central_differences([](const Tensor& t) { return tv_loss(t); }, img,
                                                     {{0, 0, 0}, {1, 2, 3}, {2, 4, 5}, {0, 4, 0}}, 1e-5);
    CHECK(grad(0, 0, 0) == doctest::Approx(numeric[0]).epsilon(1e-6));
    CHECK(grad(1, 2, 3) == doctest::Approx(numeric[1]).epsilon(1e-6));
    CHECK(grad(2, 4, 5) == doctest::Approx(numeric[2]).epsilon(1e-6));
    CHECK(grad(0, 4, 0) == doctest::Approx(numeric[3]).epsilon(1e-6));
  }

  TEST_CASE("total loss combines the four terms") {
    Rng rng(67);
    const FeatureExtractor fx = FeatureExtractor::load(ExtractorSpec::small_random(4));
    const LightNet net = LightNet::build(small_light(32, 8));
    const Image gen = random_image(rng, 32, 32), content = random_image(rng, 32, 32);
    LossContext ctx;
    ctx.extractor = &fx;
    ctx.lightnet = &net;

    std::vector<std::map<std::string, PatchList>> style_patches(3);
    for (auto& sp : style_patches) {
      const FeatureMaps m = fx.extract(random_image(rng, 32, 32), ctx.layers.style);
      for (const auto& l : ctx.layers.style) sp.emplace(l, extract_patches(m.at(l), 1));
    }
    StyleTargets targets;
    for (const auto& l : ctx.layers.style)
      for (const auto& sp : style_patches) targets[l].push_back(&sp.at(l));

    const LossBreakdown zero = total_loss(gen, content, targets, {0, 0, 0}, ctx);
    CHECK(zero.total == zero.content);

    const LossWeights w1{2.0, 0.5, 0.3}, w2{4.0, 0.5, 0.3};
    const LossBreakdown b1 = total_loss(gen, content, targets, w1, ctx);
    const LossBreakdown b2 = total_loss(gen, content, targets, w2, ctx);
    CHECK(b2.total - b1.total == doctest::Approx(2.0 * b1.style).epsilon(1e-10));
    CHECK(b1.total == doctest::Approx(b1.content + w1.alpha * b1.style + w1.beta * b1.light + w1.gamma * b1.tv)
                          .epsilon(1e-10));

    // Independent evaluation of each component.
    const FeatureMaps fg = fx.extract(gen, ctx.layers.content), fc = fx.extract(content, ctx.layers.content);
    double content_ref = 0.0;
    for (const auto& l : ctx.layers.content) content_ref += oracle::content_loss(fg.at(l).data, fc.at(l).data);
    const FeatureMaps sg = fx.extract(gen, ctx.layers.style);
    double style_ref = 0.0;
    for (const auto& l : ctx.layers.style) {
      std::vector<std::vector<oracle::Vec>> os;
      for (const auto& sp : style_patches) os.push_back(oracle_patches(sp.at(l)));
      style_ref += oracle::style_loss(oracle::patches(sg.at(l).data, 1), os);
    }
    const double light_ref =
        oracle::light_loss(oracle::luminance(gen.tensor()), oracle::luminance(content.tensor()), net);
    CHECK(b1.content == doctest::Approx(content_ref).epsilon(1e-10));
    CHECK(b1.style == doctest::Approx(style_ref).epsilon(1e-10));
    CHECK(b1.light == doctest::Approx(light_ref).epsilon(1e-10));
    CHECK(b1.tv == doctest::Approx(oracle::tv_loss(gen.tensor())).epsilon(1e-10));
  }

  TEST_CASE("all losses are nonnegative") {
    Rng rng(68);
    for (int i = 0; i < 10; ++i) {
      const FeatureMap a = random_map(rng, 3, 4, 4), b = random_map(rng, 3, 4, 4);
      CHECK(content_loss(a, b) >= 0.0);
      CHECK(style_loss(extract_patches(a, 1), std::vector<PatchList>{extract_patches(b, 1)}) >= 0.0);
      CHECK(tv_loss(a.data) >= 0.0);
    }
  }
}
