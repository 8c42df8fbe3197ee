#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "faceswap/error.hpp"
#include "faceswap/optim.hpp"
#include "faceswap/transformnet.hpp"
#include "faceswap/weights.hpp"
#include "support.hpp"

using namespace faceswap;
using namespace testing;

namespace {

// Rows or columns of each conv kernel matrix, whichever are fewer, are orthonormal.
double orthonormality_error(const nn::ParamRef& p) {
  if (p.shape.size() != 4) return 0.0;
  const int rows = static_cast<int>(p.shape[0]);
  const int cols = static_cast<int>(p.shape[1] * p.shape[2] * p.shape[3]);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(p.values->data(), rows,
                                                                                               cols);
  const Eigen::MatrixXd G = rows <= cols ? Eigen::MatrixXd(W * W.transpose()) : Eigen::MatrixXd(W.transpose() * W);
  return (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("transformnet") {
  TEST_CASE("standard network at 128 has about one million parameters") {
    const TransformNet net = TransformNet::build(128, NetworkSpec::standard(), 1);
    CHECK(net.param_count() >= 850000);
    CHECK(net.param_count() <= 1150000);
    CHECK(net.param_count() == param_count(NetworkSpec::standard()));
    CHECK(net.branch_count() == 5);
    for (int b = 0; b < net.branch_count(); ++b) CHECK(net.branch_resolution(b) == (8 << b));
  }

  TEST_CASE("building is deterministic") {
    TransformNet a = TransformNet::build(32, NetworkSpec::compact(), 5);
    TransformNet b = TransformNet::build(32, NetworkSpec::compact(), 5);
    TransformNet c = TransformNet::build(32, NetworkSpec::compact(), 6);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool any_differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(*pa[i].values == *pb[i].values);
      any_differs = any_differs || *pa[i].values != *pc[i].values;
    }
    CHECK(any_differs);
  }

  TEST_CASE("kernels are orthogonally initialized") {
    TransformNet net = TransformNet::build(64, NetworkSpec::standard(), 2);
    for (const auto& p : net.parameters()) CHECK(orthonormality_error(p) < 1e-5);
  }

  TEST_CASE("forward gives a 3-channel image in [0, 1] deterministically") {
    Rng rng(71);
    const TransformNet net = TransformNet::build(128, NetworkSpec::compact(5), 3);
    const Image x = random_image(rng, 128, 128);
    const Image y = net.forward(x);
    CHECK(y.height() == 128);
    CHECK(y.width() == 128);
    CHECK(y.in_unit_range());
    CHECK(net.forward(x).tensor().values() == y.tensor().values());
  }

  TEST_CASE("output stays in range for extreme finite input") {
    const TransformNet net = TransformNet::build(32, NetworkSpec::compact(3), 4);
    Tensor x(3, 32, 32, 1e6);
    x(0, 0, 0) = -1e6;
    const Tensor y = net.forward(x, nullptr);
    for (double v : y.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("forward rejects the wrong resolution") {
    const TransformNet net = TransformNet::build(32, NetworkSpec::compact(3), 4);
    CHECK_THROWS_AS(net.forward(Image(64, 64)), ValidationError);
    CHECK_THROWS_AS(TransformNet::build(96, NetworkSpec::compact(3), 4), ValidationError);
  }

  TEST_CASE("single 1x1 convolution parameter count") {
    CHECK(nn::Conv2d(8, 3, 1, 1, 0, true).parameter_count() == 27);
  }

  TEST_CASE("parameter count is additive and matches the serialized archive") {
    TempDir dir("count");
    TransformNet net = TransformNet::build(64, NetworkSpec::standard(), 9);
    std::size_t sum = 0;
    for (const auto& p : net.parameters()) sum += p.values->size();
    CHECK(sum == net.param_count());
    net.save(dir / "net");
    std::size_t stored = 0;
    for (const auto& t : read_tensor_archive(dir / "net").tensors) stored += t.values.size();
    CHECK(stored == net.param_count());
  }

  TEST_CASE("checkpoint round trip reproduces the forward pass") {
    Rng rng(72);
    TempDir dir("ckpt");
    const TransformNet net = TransformNet::build(64, NetworkSpec::compact(4), 10);
    net.save(dir / "net");
    const TransformNet back = TransformNet::load(dir / "net");
    const Image x = random_image(rng, 64, 64);
    CHECK(max_abs_diff(back.forward(x).tensor(), net.forward(x).tensor()) <= 1e-6);
    CHECK(back.param_count() == net.param_count());
    CHECK_THROWS_AS(TransformNet::load(dir / "missing"), ValidationError);
  }

  TEST_CASE("grow keeps old parameters and roughly doubles the count") {
    TransformNet net = TransformNet::build(128, NetworkSpec::standard(), 11);
    TransformNet grown = net.grow(256, 12);
    CHECK(grown.resolution() == 256);
    CHECK(grown.branch_count() == net.branch_count() + 1);
    const double ratio = static_cast<double>(grown.param_count()) / net.param_count();
    CHECK(ratio >= 1.7);
    CHECK(ratio <= 2.3);

    const auto old_params = net.parameters();
    const auto new_params = grown.parameters();
    std::size_t matched = 0;
    for (const auto& op : old_params) {
      if (op.name.rfind("head", 0) == 0) continue;  // the output convolution is replaced
      for (const auto& np : new_params)
        if (np.name == op.name) {
          CHECK(np.frozen);
          CHECK(*np.values == *op.values);
          ++matched;
        }
    }
    CHECK(matched + 2 == old_params.size());  // all but the head weight and bias
    CHECK(grown.frozen_param_count() == net.param_count() - 88 * 3 - 3);
    CHECK_THROWS_AS(net.grow(192, 1), ValidationError);
  }

  TEST_CASE("grown network with a zeroed new path still outputs valid images") {
    Rng rng(73);
    TransformNet grown = TransformNet::build(32, NetworkSpec::compact(3), 13).grow(64, 14);
    for (auto& p : grown.parameters())
      if (!p.frozen) std::fill(p.values->begin(), p.values->end(), 0.0);
    const Image y = grown.forward(random_image(rng, 64, 64));
    CHECK(y.tensor().all_finite());
    CHECK(y.in_unit_range());
  }

  TEST_CASE("one step changes every unfrozen tensor and no frozen one") {
    Rng rng(74);
    TransformNet net = TransformNet::build(16, NetworkSpec::compact(2), 15).grow(32, 16);
    const Tensor x = random_tensor(rng, 3, 32, 32);
    TransformNet::Trace trace;
    net.forward(x, &trace);
    TransformNet::Gradients grads = net.zero_gradients();
    const Tensor g = random_tensor(rng, 3, 32, 32, -1, 1);
    net.backward(trace, g, grads);

    auto params = net.parameters();
    std::vector<std::vector<double>> before;
    for (const auto& p : params) before.push_back(*p.values);
    Adam adam;
    adam.step(params, net.gradient_refs(grads), 1e-3);
    params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].frozen)
        CHECK(*params[i].values == before[i]);
      else
        CHECK(*params[i].values != before[i]);
    }
  }

  TEST_CASE("backward matches finite differences on parameters") {
    Rng rng(75);
    TransformNet net = TransformNet::build(16, NetworkSpec::compact(3, 4, 6), 17);
    const Tensor x = random_tensor(rng, 3, 16, 16);
    const Tensor w = random_tensor(rng, 3, 16, 16, -0.5, 0.5);
    auto objective = [&]() {
      const Tensor y = net.forward(x, nullptr);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * w.values()[i];
      return s;
    };
    TransformNet::Trace trace;
    net.forward(x, &trace);
    TransformNet::Gradients grads = net.zero_gradients();
    net.backward(trace, w, grads);
    auto params = net.parameters();
    const auto refs = net.gradient_refs(grads);
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& v = *params[p].values;
      for (std::size_t i = 0; i < v.size(); i += std::max<std::size_t>(1, v.size() / 4)) {
        const double keep = v[i];
        v[i] = keep + 1e-5;
        const double up = objective();
        v[i] = keep - 1e-5;
        const double down = objective();
        v[i] = keep;
        const double numeric = (up - down) / 2e-5, analytic = (*refs[p])[i];
        worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8}));
      }
    }
    CHECK(worst < 1e-4);
  }
}
