#include <cmath>

#include "doctest.h"
#include "faceswap/error.hpp"
#include "faceswap/lightnet.hpp"
#include "faceswap/oracles.hpp"
#include "support.hpp"

using namespace faceswap;
using namespace testing;

namespace {

LightNetConfig small(int res, std::uint64_t seed, bool bias = true) {
  LightNetConfig c;
  c.resolution = res;
  c.channels = {4, 6, 8, 8};
  c.embedding_dim = 10;
  c.with_bias = bias;
  c.seed = seed;
  return c;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("lightnet") {
  TEST_CASE("embedding shape and determinism") {
    Rng rng(81);
    const LightNet net = LightNet::build(small(32, 1));
    const LuminanceImage img(random_tensor(rng, 1, 32, 32));
    const auto e = net.embed(img);
    CHECK(e.size() == 10);
    CHECK(net.embed(img) == e);
    CHECK_THROWS_AS(net.embed(LuminanceImage(16, 16)), ValidationError);
  }

  TEST_CASE("zero image through a bias-free net embeds to zero") {
    const LightNet net = LightNet::build(small(32, 2, false));
    for (double v : net.embed(LuminanceImage(32, 32, 0.0))) CHECK(v == 0.0);
  }

  TEST_CASE("contrastive loss cases") {
    const std::vector<double> a{0.3, -0.2, 0.5};
    CHECK(contrastive_loss(a, a, LightingLabel::Same) == 0.0);
    CHECK(contrastive_loss(a, a, LightingLabel::Different, 1.5) == doctest::Approx(2.25));
    const std::vector<double> b{0.3 + 0.6, -0.2 + 0.8, 0.5};  // distance 1
    CHECK(contrastive_loss(a, b, LightingLabel::Different, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(contrastive_loss(a, b, LightingLabel::Same) == doctest::Approx(1.0));
  }

  TEST_CASE("contrastive gradients match finite differences") {
    Rng rng(82);
    for (LightingLabel label : {LightingLabel::Same, LightingLabel::Different}) {
      std::vector<double> a(5), b(5);
      for (double& v : a) v = uniform(rng, -0.3, 0.3);
      for (double& v : b) v = uniform(rng, -0.3, 0.3);
      std::vector<double> ga, gb;
      contrastive_loss(a, b, label, 1.0, &ga, &gb);
      for (std::size_t i = 0; i < a.size(); ++i) {
        std::vector<double> up = a, down = a;
        up[i] += 1e-6;
        down[i] -= 1e-6;
        const double numeric =
            (contrastive_loss(up, b, label, 1.0) - contrastive_loss(down, b, label, 1.0)) / 2e-6;
        CHECK(ga[i] == doctest::Approx(numeric).epsilon(1e-6));
        CHECK(gb[i] == doctest::Approx(-ga[i]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("embedding distance is symmetric") {
    Rng rng(83);
    const LightNet net = LightNet::build(small(16, 3));
    const auto ea = net.embed(LuminanceImage(random_tensor(rng, 1, 16, 16)));
    const auto eb = net.embed(LuminanceImage(random_tensor(rng, 1, 16, 16)));
    CHECK(distance(ea, eb) == distance(eb, ea));
  }

  TEST_CASE("embedding gradient matches finite differences") {
    Rng rng(84);
    const LightNet net = LightNet::build(small(16, 4));
    const Tensor x = random_tensor(rng, 1, 16, 16);
    std::vector<double> w(net.embedding_dim());
    for (double& v : w) v = uniform(rng, -1, 1);
    auto f = [&](const Tensor& t) {
      const auto e = net.embed(t, nullptr);
      double s = 0.0;
      for (std::size_t i = 0; i < e.size(); ++i) s += w[i] * e[i];
      return s;
    };
    LightNet::Trace trace;
    net.embed(x, &trace);
    const Tensor grad = net.backward(trace, w, nullptr);
    std::vector<oracle::Coord> coords;
    for (int i = 0; i < 40; ++i) coords.push_back({0, (i * 7) % 16, (i * 5 + 3) % 16});
    const auto numeric = oracle::central_differences(f, x, coords, 1e-5);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double a = grad(0, coords[i].y, coords[i].x);
      CHECK(std::abs(a - numeric[i]) / std::max({std::abs(a), std::abs(numeric[i]), 1e-8}) < 1e-4);
    }
  }

  TEST_CASE("relighting set and pairs") {
    const RelightingSet set = generate_relighting_set(32, 5, 4, 2, 6);
    CHECK(set.images.size() == 4u * 2 * 6);
    CHECK(set.at(2, 1, 3).identity == 2);
    CHECK(set.at(2, 1, 3).pose == 1);
    CHECK(set.at(2, 1, 3).light == 3);
    for (const auto& r : set.images) CHECK(r.image.tensor().all_finite());
    const auto pairs = make_lighting_pairs(set, {0, 1, 2}, 40, 6);
    CHECK(pairs.size() == 40);
    int same = 0;
    for (const auto& p : pairs) same += p.label == LightingLabel::Same;
    CHECK(same == 20);
  }

  TEST_CASE("dataset files round trip") {
    TempDir dir("relight");
    const RelightingSet set = generate_relighting_set(16, 7, 4, 2, 4);
    write_relighting_dataset(set, dir.path(), 7, 20, 10);
    const auto train = read_lighting_pairs(dir.path(), "train");
    const auto held = read_lighting_pairs(dir.path(), "held_out");
    CHECK(train.size() == 20);
    CHECK(held.size() == 10);
    CHECK(train.front().a.height() == 16);
    CHECK_THROWS_AS(read_lighting_pairs(dir.path(), "test"), ValidationError);
  }

  TEST_CASE("training descends and is reproducible") {
    const RelightingSet set = generate_relighting_set(32, 8, 4, 2, 8);
    const auto pairs = make_lighting_pairs(set, {0, 1, 2, 3}, 64, 9);
    LightTrainConfig cfg;
    cfg.net = small(32, 10);
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.seed = 10;
    const LightTrainResult a = train_lightnet(pairs, cfg);
    const LightTrainResult b = train_lightnet(pairs, cfg);
    CHECK(a.epoch_loss.size() == 4);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    CHECK(a.epoch_loss.back() == doctest::Approx(b.epoch_loss.back()).epsilon(1e-6));
  }

  TEST_CASE("training needs both labels") {
    const RelightingSet set = generate_relighting_set(16, 8, 3, 1, 4);
    auto pairs = make_lighting_pairs(set, {0, 1, 2}, 10, 9);
    std::erase_if(pairs, [](const LightingPair& p) { return p.label == LightingLabel::Different; });
    LightTrainConfig cfg;
    cfg.net = small(16, 1);
    CHECK_THROWS_AS(train_lightnet(pairs, cfg), ValidationError);
  }

  TEST_CASE("save and load keep the embedding") {
    Rng rng(85);
    TempDir dir("lnet");
    const LightNet net = LightNet::build(small(16, 11));
    net.save(dir / "l");
    const LightNet back = LightNet::load(dir / "l");
    const LuminanceImage img(random_tensor(rng, 1, 16, 16));
    const auto a = net.embed(img), b = back.embed(img);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-6));
  }
}
