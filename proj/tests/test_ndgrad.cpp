#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bsp/ndgrad.hpp"
#include "bsp/rng.hpp"
#include "fd.hpp"

using namespace bsp;
using nd::Graph;
using nd::NodeId;
using nd::Shape;
using nd::Tensor;

namespace {

Tensor randn(Rng& rng, Shape s, double scale = 1.0) {
  Tensor t(std::move(s));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// Random linear read-out so non-scalar primitives feed a scalar loss.
NodeId readout(Graph& g, NodeId x, Rng& rng) {
  const auto s = g.value(x).shape();
  auto w = g.input(randn(rng, s));
  auto d = g.sub(x, w);
  return g.squared_l2_distance(d, g.input(Tensor(s)));
}

constexpr int kSeeds = 100;
constexpr double kTol = 1e-4;

}  // namespace

TEST(NdgradExamples, SoftmaxCrossEntropyUniform) {
  Graph g;
  auto z = g.input(Tensor::vector({0, 0, 0, 0}));
  EXPECT_NEAR(g.value(g.softmax_cross_entropy(z, {2})).item(), std::log(4.0), 1e-12);
}

TEST(NdgradExamples, SmoothL1Pieces) {
  Graph g;
  EXPECT_DOUBLE_EQ(g.value(g.smooth_l1_sum(g.input(Tensor::vector({0.5})))).item(), 0.125);
  EXPECT_DOUBLE_EQ(g.value(g.smooth_l1_sum(g.input(Tensor::vector({2.0})))).item(), 1.5);
}

TEST(NdgradExamples, SquaredL2UnitVector) {
  Graph g;
  auto a = g.input(Tensor::vector({1, 0}));
  auto b = g.input(Tensor::vector({0, 0}));
  EXPECT_DOUBLE_EQ(g.value(g.squared_l2_distance(a, b)).item(), 1.0);
}

TEST(NdgradExamples, HalfSquareGradient) {
  Graph g;
  auto x = g.param(Tensor::vector({3.0}));
  auto loss = g.scale(g.squared_l2_distance(x, g.input(Tensor::vector({0.0}))), 0.5);
  auto gr = nd::gradients(g, loss);
  EXPECT_DOUBLE_EQ(gr.at(x)[0], 3.0);
}

TEST(NdgradExamples, SmoothL1GradientAtZeroIsExactlyZero) {
  Graph g;
  auto d = g.param(Tensor::vector({0.0}));
  auto gr = nd::gradients(g, g.smooth_l1_sum(d));
  EXPECT_EQ(gr.at(d)[0], 0.0);
}

TEST(NdgradExamples, SgdPlainStep) {
  nd::ParamSet p{{"w", Tensor::vector({1.0})}};
  nd::SgdState st;
  nd::sgd_step(p, {{"w", Tensor::vector({2.0})}}, st, 0.1, 0.0);
  EXPECT_NEAR(p.at("w")[0], 0.8, 1e-15);
}

TEST(NdgradExamples, SgdZeroGradientIsFixedPoint) {
  Rng rng(3);
  nd::ParamSet p{{"a", randn(rng, {3, 2})}, {"b", randn(rng, {4})}};
  const auto before = p;
  nd::SgdState st;
  nd::sgd_step(p, {{"a", Tensor({3, 2})}, {"b", Tensor({4})}}, st, 0.5, 0.9);
  EXPECT_EQ(p, before);
}

TEST(NdgradExamples, SgdMomentumTwoSteps) {
  nd::ParamSet p{{"w", Tensor::vector({0.0})}};
  nd::SgdState st;
  for (int i = 0; i < 2; ++i) nd::sgd_step(p, {{"w", Tensor::vector({1.0})}}, st, 0.1, 0.9);
  EXPECT_NEAR(p.at("w")[0], -0.29, 1e-15);
}

TEST(NdgradErrors, ShapeMismatchNamesOpAndShapes) {
  Graph g;
  auto a = g.input(Tensor({2, 3}));
  auto b = g.input(Tensor({2, 3}));
  try {
    g.matmul(a, b);
    FAIL();
  } catch (const nd::ShapeError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("matmul"), std::string::npos);
    EXPECT_NE(m.find("[2,3]"), std::string::npos);
  }
  EXPECT_THROW(g.add(a, g.input(Tensor({2}))), nd::ShapeError);
  EXPECT_THROW(g.concat_last_axis(a, g.input(Tensor({3, 1}))), nd::ShapeError);
  EXPECT_THROW(g.squared_l2_distance(a, g.input(Tensor({6}))), nd::ShapeError);
  EXPECT_THROW(g.temporal_conv1d(g.input(Tensor({1, 4, 3})), g.input(Tensor({3, 2, 5}))), nd::ShapeError);
  EXPECT_THROW(g.temporal_conv1d(g.input(Tensor({1, 4, 3})), g.input(Tensor({2, 3, 5}))), nd::ShapeError);
  EXPECT_THROW(g.mean_over_axis(a, 2), nd::ShapeError);
}

TEST(NdgradErrors, NonScalarLossRejected) {
  Graph g;
  auto x = g.param(Tensor({2}));
  EXPECT_THROW(nd::gradients(g, g.relu(x)), nd::ShapeError);
}

TEST(NdgradErrors, SgdBadArguments) {
  nd::ParamSet p{{"w", Tensor({2})}};
  nd::SgdState st;
  EXPECT_THROW(nd::sgd_step(p, {{"w", Tensor({3})}}, st, 0.1, 0.0), nd::ShapeError);
  EXPECT_THROW(nd::sgd_step(p, {{"w", Tensor({2})}}, st, 0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(nd::sgd_step(p, {{"w", Tensor({2})}}, st, 0.1, 1.0), std::invalid_argument);
}

TEST(NdgradTensor, ShapeDataInvariant) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), nd::ShapeError);
  EXPECT_THROW(Tensor({2, 0}), nd::ShapeError);
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
}

// ---------------------------------------------------------------------------
// Finite-difference suite: each primitive over kSeeds random instances.

class GradCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradCheck, Matmul) {
  Rng rng(1000 + GetParam());
  const std::size_t m = 1 + uniform_index(rng, 4), k = 1 + uniform_index(rng, 4), n = 1 + uniform_index(rng, 4);
  Rng out(rng());
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) {
                  Rng r = out;
                  return readout(g, g.matmul(v[0], v[1]), r);
                },
                {randn(rng, {m, k}), randn(rng, {k, n})}),
            kTol);
}

TEST_P(GradCheck, AddAndBias) {
  Rng rng(2000 + GetParam());
  const std::size_t r = 1 + uniform_index(rng, 4), c = 1 + uniform_index(rng, 4);
  Rng out(rng());
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) {
                  Rng rr = out;
                  return readout(g, g.add(g.add(v[0], v[1]), v[2]), rr);
                },
                {randn(rng, {r, c}), randn(rng, {r, c}), randn(rng, {c})}),
            kTol);
}

TEST_P(GradCheck, SubAndScale) {
  Rng rng(2500 + GetParam());
  const std::size_t n = 1 + uniform_index(rng, 6);
  const double f = uniform_real(rng, -2, 2);
  Rng out(rng());
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) {
                  Rng rr = out;
                  return readout(g, g.scale(g.sub(v[0], v[1]), f), rr);
                },
                {randn(rng, {n}), randn(rng, {n})}),
            kTol);
}

TEST_P(GradCheck, Relu) {
  Rng rng(3000 + GetParam());
  const std::size_t n = 2 + uniform_index(rng, 8);
  auto x = randn(rng, {n});
  for (auto& v : x.data())
    if (std::abs(v) < 1e-3) v = 0.5;  // keep away from the kink
  Rng out(rng());
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) {
                  Rng rr = out;
                  return readout(g, g.relu(v[0]), rr);
                },
                {x}),
            kTol);
}

TEST_P(GradCheck, TemporalConv1d) {
  Rng rng(4000 + GetParam());
  const std::size_t B = 1 + uniform_index(rng, 2), T = 1 + uniform_index(rng, 7), ci = 1 + uniform_index(rng, 3),
                    co = 1 + uniform_index(rng, 3), k = 1 + 2 * uniform_index(rng, 3);
  Rng out(rng());
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) {
                  Rng rr = out;
                  return readout(g, g.temporal_conv1d(v[0], v[1]), rr);
                },
                {randn(rng, {B, T, ci}), randn(rng, {k, ci, co})}),
            kTol);
}

TEST_P(GradCheck, MeanOverAxis) {
  Rng rng(5000 + GetParam());
  const Shape s{1 + uniform_index(rng, 3), 1 + uniform_index(rng, 3), 1 + uniform_index(rng, 3)};
  const std::size_t axis = uniform_index(rng, 3);
  Rng out(rng());
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) {
                  Rng rr = out;
                  return readout(g, g.mean_over_axis(v[0], axis), rr);
                },
                {randn(rng, s)}),
            kTol);
}

TEST_P(GradCheck, ConcatLastAxis) {
  Rng rng(6000 + GetParam());
  const std::size_t r = 1 + uniform_index(rng, 3), a = 1 + uniform_index(rng, 3), b = 1 + uniform_index(rng, 3);
  Rng out(rng());
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) {
                  Rng rr = out;
                  return readout(g, g.concat_last_axis(v[0], v[1]), rr);
                },
                {randn(rng, {r, a}), randn(rng, {r, b})}),
            kTol);
}

TEST_P(GradCheck, SquaredL2Distance) {
  Rng rng(7000 + GetParam());
  const Shape s{1 + uniform_index(rng, 4), 1 + uniform_index(rng, 4)};
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) { return g.squared_l2_distance(v[0], v[1]); },
                {randn(rng, s), randn(rng, s)}),
            kTol);
}

TEST_P(GradCheck, SoftmaxCrossEntropy) {
  Rng rng(8000 + GetParam());
  const std::size_t B = 1 + uniform_index(rng, 4), K = 2 + uniform_index(rng, 4);
  std::vector<int> y(B);
  for (auto& v : y) v = static_cast<int>(uniform_index(rng, K));
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) { return g.softmax_cross_entropy(v[0], y); },
                {randn(rng, {B, K}, 2.0)}),
            kTol);
}

TEST_P(GradCheck, SmoothL1Sum) {
  Rng rng(9000 + GetParam());
  auto d = randn(rng, {2 + uniform_index(rng, 8)}, 1.5);
  EXPECT_LT(test::fd_relative_error([&](Graph& g, const std::vector<NodeId>& v) { return g.smooth_l1_sum(v[0]); },
                                    {d}),
            kTol);
}

TEST_P(GradCheck, ComposedGraph) {
  Rng rng(9500 + GetParam());
  const std::size_t B = 2, T = 5, F = 3, E = 4;
  std::vector<int> y{static_cast<int>(uniform_index(rng, 3)), static_cast<int>(uniform_index(rng, 3))};
  EXPECT_LT(test::fd_relative_error(
                [&](Graph& g, const std::vector<NodeId>& v) {
                  auto h = g.relu(g.add(g.temporal_conv1d(v[0], v[1]), v[2]));
                  auto p = g.mean_over_axis(h, 1);
                  auto z = g.add(g.matmul(p, v[3]), v[4]);
                  return g.add(g.softmax_cross_entropy(z, y), g.smooth_l1_sum(g.scale(p, 0.7)));
                },
                {randn(rng, {B, T, F}), randn(rng, {3, F, E}), randn(rng, {E}, 0.1), randn(rng, {E, 3}),
                 randn(rng, {3})}),
            kTol);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradCheck, ::testing::Range(0, kSeeds));

// ---------------------------------------------------------------------------

TEST(NdgradProperties, Determinism) {
  auto run = [] {
    Rng rng(42);
    Graph g;
    auto x = g.param(randn(rng, {2, 6, 3}));
    auto w = g.param(randn(rng, {3, 3, 4}));
    auto p = g.mean_over_axis(g.relu(g.temporal_conv1d(x, w)), 1);
    auto loss = g.softmax_cross_entropy(p, {1, 3});
    auto gr = nd::gradients(g, loss);
    return std::make_tuple(g.value(loss), gr.at(x), gr.at(w));
  };
  EXPECT_EQ(run(), run());
}

TEST(NdgradProperties, SmoothL1IsC1AtOne) {
  for (double s : {1.0, -1.0}) {
    const double h = 1e-7;
    auto slope = [&](double at) {
      Graph g;
      auto d = g.param(Tensor::vector({at}));
      return nd::gradients(g, g.smooth_l1_sum(d)).at(d)[0];
    };
    EXPECT_NEAR(slope(s - h), slope(s + h), 1e-6);
    EXPECT_NEAR(slope(s * (1 - 1e-12)), slope(s), 1e-9);
  }
}

TEST(NdgradProperties, CrossEntropyNonNegative) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Graph g;
    auto z = g.input(randn(rng, {3, 5}, 3.0));
    EXPECT_GE(g.value(g.softmax_cross_entropy(z, {0, 2, 4})).item(), 0.0);
  }
  Graph g;
  auto z = g.input(Tensor::vector({800, 0, 0}));
  EXPECT_EQ(g.value(g.softmax_cross_entropy(z, {0})).item(), 0.0);
  EXPECT_GT(g.value(g.softmax_cross_entropy(g.input(Tensor::vector({5, 0, 0})), {0})).item(), 0.0);
}

TEST(NdgradProperties, FiniteOnFiniteInputs) {
  Rng rng(9);
  Graph g;
  auto z = g.param(randn(rng, {4, 6}, 300.0));
  auto loss = g.softmax_cross_entropy(z, {0, 1, 2, 3});
  EXPECT_TRUE(std::isfinite(g.value(loss).item()));
  EXPECT_TRUE(nd::gradients(g, loss).at(z).all_finite());
}

TEST(NdgradProperties, InputsPrecedeNodes) {
  Rng rng(1);
  Graph g;
  auto a = g.param(randn(rng, {2, 3}));
  auto b = g.param(randn(rng, {3, 2}));
  auto c = g.relu(g.matmul(a, b));
  g.squared_l2_distance(c, g.input(Tensor({2, 2})));
  for (NodeId id = 0; id < g.size(); ++id)
    for (NodeId in : g.inputs(id)) EXPECT_LT(in, id);
}
