#include "scn/cnn/cnn.hpp"

#include "support/gradcheck.hpp"
#include "support/naive_ops.hpp"
#include "support/random_tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace scn {
namespace {

using T = Tensor<double>;

T oracle_conv(const T& x, const T& k, int stride, int pad, bool relu_on) {
  Index oh = 0, ow = 0;
  auto v = testing::naive_conv2d(x, k, stride, pad, oh, ow);
  VectorX<double> out = Eigen::Map<VectorX<double>>(v.data(), static_cast<Index>(v.size()));
  if (relu_on) out = out.cwiseMax(0.0);
  return T({x.dim(0), k.dim(0), oh, ow}, out);
}

T oracle_pool(const T& x, int k, int s, int p) {
  auto v = testing::naive_pool2d(x, true, k, s, p);
  const Index oh = (x.dim(2) + 2 * p - k) / s + 1;
  return T({x.dim(0), x.dim(1), oh, oh}, Eigen::Map<VectorX<double>>(v.data(), static_cast<Index>(v.size())));
}

double max_diff(const T& a, const T& b) {
  EXPECT_EQ(a.shape(), b.shape());
  return (a.value() - b.value()).cwiseAbs().maxCoeff();
}

CnnConfig tiny_config() {
  CnnConfig c;
  c.image_size = 16;
  c.stem_channels = 3;
  c.stage1_branch = 2;
  c.stage2_branch = 2;
  return c;
}

TEST(CnnConfig, ShapeChains) {
  CnnConfig d;
  EXPECT_EQ(d.stem_extent(), 56);
  EXPECT_EQ(d.stage1_extent(), 28);
  EXPECT_EQ(d.stage2_extent(), 14);
  EXPECT_EQ(d.embedding_dim(), 96);
  auto r = CnnConfig::reduced();
  EXPECT_EQ(r.image_size, 56);
  EXPECT_EQ(r.stage2_extent(), 7);
  EXPECT_EQ(tiny_config().stage2_extent(), 2);
  CnnConfig bad;
  bad.image_size = 5;
  EXPECT_THROW(bad.validate(), DimensionError);
}

TEST(Subsample, StageOneShape) {
  Rng rng(1);
  auto kernel = init_kernel<double>(4, 1, 7, rng);
  auto x = testing::random_tensor({1, 1, 112, 112}, rng);
  auto y = subsample(x, &kernel, true);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 28, 28}));
}

TEST(Subsample, CenterKernelOnConstantImage) {
  VectorX<double> k = VectorX<double>::Zero(49);
  k[24] = 1.0;
  T kernel({1, 1, 7, 7}, k);
  auto x = T::full({1, 1, 20, 20}, 0.7);
  auto y = subsample(x, &kernel, true);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 5, 5}));
  EXPECT_NEAR((y.value().array() - 0.7).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(Subsample, MatchesComposedOracles) {
  Rng rng(2);
  auto kernel = init_kernel<double>(3, 2, 7, rng);
  auto x = testing::random_tensor({2, 2, 17, 17}, rng);
  for (bool relu_on : {false, true}) {
    auto y = subsample(x, &kernel, relu_on);
    auto expect = oracle_pool(oracle_conv(x, kernel, 2, 3, relu_on), 3, 2, 1);
    EXPECT_LE(max_diff(y, expect), 1e-10);
  }
  auto second = subsample<double>(x, nullptr, true);
  EXPECT_LE(max_diff(second, oracle_pool(x, 3, 2, 1)), 1e-10);
}

TEST(Subsample, UndersizedInputRejected) {
  Rng rng(3);
  auto kernel = init_kernel<double>(1, 1, 7, rng);
  EXPECT_THROW(subsample(T::zeros({1, 1, 6, 6}), &kernel, true), DimensionError);
}

TEST(LightInception, ZeroWeightsGiveZero) {
  Rng rng(4);
  auto block = LightInceptionBlock<double>::init(3, 2, rng);
  for (T* p : {&block.con, &block.pool_conv, &block.c3_reduce, &block.c3, &block.c5_reduce, &block.c5}) {
    p->mutable_value().setZero();
  }
  auto x = testing::random_tensor({2, 3, 6, 6}, rng);
  auto y = light_inception(block, x, NormMode::Train, true);
  EXPECT_EQ(y.shape(), (Shape{2, 8, 6, 6}));
  EXPECT_EQ(y.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(LightInception, PreservesSpatialExtent) {
  Rng rng(5);
  auto block = LightInceptionBlock<double>::init(4, 3, rng);
  auto y = light_inception(block, testing::random_tensor({2, 4, 28, 28}, rng), NormMode::Train, true);
  EXPECT_EQ(y.shape(), (Shape{2, 12, 28, 28}));
  EXPECT_EQ(block.out_channels(), 12);
}

TEST(LightInception, BranchesMatchStandaloneComputations) {
  Rng rng(6);
  auto block = LightInceptionBlock<double>::init(3, 2, rng);
  auto x = testing::random_tensor({2, 3, 7, 7}, rng);
  for (bool relu_on : {false, true}) {
    auto b = inception_branches(block, x, relu_on);
    auto con = oracle_conv(x, block.con, 1, 0, relu_on);
    EXPECT_LE(max_diff(b.con, con), 1e-10);
    EXPECT_LE(max_diff(b.pool, oracle_conv(oracle_pool(con, 1, 1, 0), block.pool_conv, 1, 0, relu_on)), 1e-10);
    EXPECT_LE(max_diff(b.conv3, oracle_conv(oracle_conv(con, block.c3_reduce, 1, 0, relu_on), block.c3, 1, 1, relu_on)), 1e-10);
    EXPECT_LE(max_diff(b.conv5, oracle_conv(oracle_conv(con, block.c5_reduce, 1, 0, relu_on), block.c5, 1, 2, relu_on)), 1e-10);

    // Identity running statistics: each output channel block is the branch over sqrt(1 + eps).
    auto y = light_inception(block, x, NormMode::Infer, relu_on);
    const double s = 1.0 / std::sqrt(1.0 + 1e-5);
    const T* parts[4] = {&b.pool, &b.conv3, &b.conv5, &b.con};
    for (Index blk = 0; blk < 4; ++blk) {
      for (Index n = 0; n < 2; ++n)
        for (Index c = 0; c < 2; ++c)
          for (Index i = 0; i < 7; ++i)
            for (Index j = 0; j < 7; ++j) {
              EXPECT_NEAR(y.at({n, blk * 2 + c, i, j}), s * parts[blk]->at({n, c, i, j}), 1e-12);
            }
    }
  }
}

TEST(Semanticity, DefaultShapeAndDeterministicInference) {
  Rng rng(7);
  auto net = SemanticCnn<float>::init(CnnConfig{}, rng);
  VectorX<float> img(112 * 112);
  for (Index i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform());
  VectorX<float> both(2 * img.size());
  both << img, img;
  Tensor<float> images({2, 1, 112, 112}, both);
  auto train = semanticity(net, images, NormMode::Train);
  EXPECT_EQ(train.shape(), (Shape{2, 96}));
  const auto running = net.block2.bn.running_mean;
  auto a = semanticity(net, images, NormMode::Infer);
  auto b = semanticity(net, images, NormMode::Infer);
  EXPECT_EQ(a.value(), b.value());
  EXPECT_EQ(a.matrix().row(0), a.matrix().row(1));
  EXPECT_EQ(net.block2.bn.running_mean, running);
}

TEST(Semanticity, WrongImageSizeNamesExpectedSize) {
  Rng rng(8);
  auto net = SemanticCnn<double>::init(tiny_config(), rng);
  try {
    semanticity(net, T::zeros({2, 1, 9, 9}), NormMode::Train);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[B, 1, 16, 16]"), std::string::npos) << e.what();
  }
}

TEST(Semanticity, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  auto net = SemanticCnn<double>::init(tiny_config(), rng);
  auto images = testing::random_tensor({4, 1, 16, 16}, rng, false, 0.0, 1.0);
  // Random readout weights: a plain sum of squares has zero gradient with
  // respect to the batch-norm shifts.
  auto readout = testing::random_tensor({4, net.config.embedding_dim()}, rng);
  auto loss = [&] {
    auto sem = semanticity(net, images, NormMode::Train);
    return add(sum(mul(sem, readout)), sum(mul(sem, sem)));
  };
  std::vector<std::pair<std::string, T>> params = net.named_parameters();
  auto r = testing::check_gradients(loss, params, 1e-6);
  EXPECT_LE(r.worst_relative_error, 1e-4) << r.worst_parameter;
}

}  // namespace
}  // namespace scn
