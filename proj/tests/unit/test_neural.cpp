#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dcmab/neural.hpp"
#include "gradient_check.hpp"
#include "oracles.hpp"

namespace dcmab {
namespace {

Mlp scalar_net(double w, double b, Activation a) {
  Mlp m = Mlp::zeros({{1, 1, a}});
  m.layers()[0].weight(0, 0) = w;
  m.layers()[0].bias(0) = b;
  return m;
}

Eigen::MatrixXd col(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index k = 0;
  for (double x : v) m(k++, 0) = x;
  return m;
}

TEST(MlpForward, HandExamples) {
  const Mlp zero = Mlp::zeros({{3, 4, Activation::kRelu}, {4, 2, Activation::kLinear}});
  EXPECT_TRUE(zero.forward(col({1, 2, 3})).isZero());
  EXPECT_EQ(scalar_net(1.0, 0.0, Activation::kTanh).forward(col({0.0}))(0, 0), 0.0);
  EXPECT_EQ(scalar_net(2.0, 1.0, Activation::kRelu).forward(col({3.0}))(0, 0), 7.0);
  EXPECT_THROW((void)zero.forward(col({1, 2})), std::invalid_argument);
}

TEST(MlpForward, MatchesScalarOracleOnBatches) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto specs = oracle::random_specs(rng);
    const Mlp net(specs, rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(specs.front().in_dim), 5);
    const Eigen::MatrixXd y = net.forward(x);
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
      std::vector<double> in(x.col(b).data(), x.col(b).data() + x.rows());
      const auto want = oracle::scalar_forward(net, in);
      for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(y(static_cast<Eigen::Index>(k), b), want[k], 1e-12);
    }
  }
}

TEST(MlpBackward, LinearHandChainRule) {
  const Mlp net = scalar_net(2.0, 0.5, Activation::kLinear);
  ForwardCache cache;
  (void)net.forward(col({3.0}), &cache);
  const auto g = net.backward(cache, col({1.0}));
  EXPECT_EQ(g.params.weight[0](0, 0), 3.0);
  EXPECT_EQ(g.params.bias[0](0), 1.0);
  EXPECT_EQ(g.input_gradient(0, 0), 2.0);
}

TEST(MlpBackward, ReluGateBlocksNegativeUnits) {
  const Mlp net = scalar_net(1.0, -5.0, Activation::kRelu);
  ForwardCache cache;
  (void)net.forward(col({1.0}), &cache);
  const auto g = net.backward(cache, col({1.0}));
  EXPECT_EQ(g.params.weight[0](0, 0), 0.0);
  EXPECT_EQ(g.params.bias[0](0), 0.0);
  EXPECT_EQ(g.input_gradient(0, 0), 0.0);
}

TEST(MlpBackward, ShapeMismatchThrows) {
  const Mlp net = scalar_net(1.0, 0.0, Activation::kLinear);
  ForwardCache cache;
  (void)net.forward(col({1.0}), &cache);
  EXPECT_THROW((void)net.backward(cache, col({1.0, 2.0})), std::invalid_argument);
  EXPECT_THROW((void)net.backward(ForwardCache{}, col({1.0})), std::invalid_argument);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = oracle::random_gradient_check(rng);
    EXPECT_LT(r.max_param_error, 1e-4) << "trial " << trial;
    EXPECT_LT(r.max_input_error, 1e-4) << "trial " << trial;
  }
}

TEST(MlpBackward, BatchGradientIsSumOfColumns) {
  std::mt19937_64 rng(12);
  const Mlp net({{4, 6, Activation::kTanh}, {6, 2, Activation::kLinear}}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(2, 3);
  ForwardCache cache;
  (void)net.forward(x, &cache);
  const auto batch = net.backward(cache, w);
  MlpGradients sum = net.zero_gradients();
  for (Eigen::Index b = 0; b < 3; ++b) {
    ForwardCache c1;
    (void)net.forward(x.col(b), &c1);
    sum += net.backward(c1, w.col(b)).params;
  }
  for (std::size_t l = 0; l < sum.weight.size(); ++l) {
    EXPECT_TRUE(sum.weight[l].isApprox(batch.params.weight[l], 1e-12));
    EXPECT_TRUE(sum.bias[l].isApprox(batch.params.bias[l], 1e-12));
  }
}

TEST(Optimizer, PlainSgdStep) {
  Mlp net = scalar_net(1.0, 0.0, Activation::kLinear);
  AdamOptimizer opt(net, {.learning_rate = 0.1, .plain_sgd = true});
  MlpGradients g = net.zero_gradients();
  g.weight[0](0, 0) = 1.0;
  opt.step(net, g);
  EXPECT_NEAR(net.layers()[0].weight(0, 0), 0.9, 1e-15);
}

TEST(Optimizer, ZeroGradientLeavesParamsUnchanged) {
  std::mt19937_64 rng(1);
  Mlp net({{3, 3, Activation::kRelu}, {3, 1, Activation::kLinear}}, rng);
  const auto before = net.flat_parameters();
  AdamOptimizer opt(net, {});
  for (int k = 0; k < 5; ++k) opt.step(net, net.zero_gradients());
  EXPECT_EQ(net.flat_parameters(), before);
  EXPECT_EQ(opt.steps(), 5u);
}

TEST(Optimizer, DeterministicAndSerializable) {
  std::mt19937_64 rng(1);
  Mlp a({{2, 3, Activation::kTanh}, {3, 1, Activation::kLinear}}, rng);
  Mlp b = a;
  AdamOptimizer oa(a, {.learning_rate = 0.01});
  AdamOptimizer ob(b, {.learning_rate = 0.01});
  MlpGradients g = a.zero_gradients();
  for (auto& w : g.weight) w.setConstant(0.3);
  oa.step(a, g);
  ob.step(b, g);
  EXPECT_EQ(a.flat_parameters(), b.flat_parameters());

  std::stringstream ss;
  oa.save(ss);
  AdamOptimizer restored(a, {});
  restored.load(ss);
  oa.step(a, g);
  restored.step(b, g);
  EXPECT_EQ(a.flat_parameters(), b.flat_parameters());
}

TEST(SoftUpdate, Blends) {
  Mlp source = scalar_net(2.0, 2.0, Activation::kLinear);
  Mlp target = scalar_net(0.0, 0.0, Activation::kLinear);
  soft_update(target, source, 0.5);
  EXPECT_EQ(target.layers()[0].weight(0, 0), 1.0);
  soft_update(target, source, 0.0);
  EXPECT_EQ(target.layers()[0].weight(0, 0), 1.0);
  soft_update(target, source, 1.0);
  EXPECT_EQ(target.flat_parameters(), source.flat_parameters());
  EXPECT_THROW(soft_update(target, source, 1.5), std::invalid_argument);
}

TEST(SoftUpdate, StaysInConvexHull) {
  std::mt19937_64 rng(6);
  const std::vector<LayerSpec> specs{{3, 4, Activation::kRelu}, {4, 2, Activation::kTanh}};
  std::uniform_real_distribution<double> tau(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Mlp source(specs, rng);
    Mlp target(specs, rng);
    const auto old = target.flat_parameters();
    const auto src = source.flat_parameters();
    soft_update(target, source, tau(rng));
    const auto now = target.flat_parameters();
    for (std::size_t k = 0; k < now.size(); ++k) {
      EXPECT_GE(now[k], std::min(old[k], src[k]) - 1e-15);
      EXPECT_LE(now[k], std::max(old[k], src[k]) + 1e-15);
    }
  }
}

TEST(Mlp, InitWithinFanInBound) {
  std::mt19937_64 rng(3);
  const Mlp net({{16, 8, Activation::kRelu}, {8, 1, Activation::kLinear}}, rng);
  for (const auto& l : net.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(l.bias.cwiseAbs().maxCoeff(), bound);
  }
  EXPECT_EQ(net.parameter_count(), 16u * 8u + 8u + 8u + 1u);
  EXPECT_TRUE(net.all_finite());
}

TEST(Mlp, SaveLoadRoundTrip) {
  std::mt19937_64 rng(4);
  const Mlp net({{5, 7, Activation::kRelu}, {7, 3, Activation::kTanh}}, rng);
  std::stringstream ss;
  save_mlp(ss, net, 42);
  std::uint64_t seed = 0;
  const Mlp back = load_mlp(ss, &seed);
  EXPECT_EQ(seed, 42u);
  EXPECT_EQ(back.specs(), net.specs());
  EXPECT_EQ(back.flat_parameters(), net.flat_parameters());
  std::istringstream bad("{\"format\":\"other\"}\n");
  EXPECT_THROW((void)load_mlp(bad), std::runtime_error);
}

}  // namespace
}  // namespace dcmab
