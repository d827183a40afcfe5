#include "scn/numerics/checkpoint.hpp"
#include "scn/numerics/ops.hpp"
#include "scn/numerics/rng.hpp"
#include "support/random_tensor.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace scn {
namespace {

TEST(Tensor, ValueCountMustMatchShape) {
  EXPECT_THROW(Tensor<double>({2, 3}, VectorX<double>::Zero(5)), DimensionError);
  Tensor<double> t({2, 3}, VectorX<double>::Zero(6));
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.rank(), 2u);
}

TEST(Tensor, GradBufferPresentOnlyWhenRequested) {
  auto a = Tensor<double>::zeros({3});
  auto b = Tensor<double>::zeros({3}, true);
  EXPECT_EQ(a.grad().size(), 0);
  EXPECT_EQ(b.grad().size(), 3);
}

TEST(Backward, SumGivesOnes) {
  Rng rng(1);
  auto x = testing::random_tensor({4, 5}, rng, true);
  backward(sum(x));
  EXPECT_TRUE(x.grad().isApprox(VectorX<double>::Ones(20)));
}

TEST(Backward, SquareGivesTwiceInput) {
  auto x = Tensor<double>::scalar(3.5, true);
  backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  auto x = Tensor<double>::zeros({2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), DimensionError);
}

TEST(Backward, SecondPassWithoutResetIsRejected) {
  auto x = Tensor<double>::full({3}, 2.0, true);
  auto loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), std::logic_error);
  // A fresh graph over the same leaf is also rejected until grads are reset.
  EXPECT_THROW(backward(sum(x)), std::logic_error);
  x.zero_grad();
  EXPECT_NO_THROW(backward(sum(x)));
}

TEST(Backward, AccumulationWhenRequested) {
  auto x = Tensor<double>::full({2}, 1.0, true);
  backward(sum(x));
  backward(sum(scale(x, 3.0)), {.accumulate = true});
  EXPECT_TRUE(x.grad().isApprox(VectorX<double>::Constant(2, 4.0)));
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  auto x = Tensor<double>::full({2}, 2.0, true);
  auto y = mul(x, x);            // 4
  auto z = add(y, y);            // 2x^2
  backward(sum(z));
  EXPECT_TRUE(x.grad().isApprox(VectorX<double>::Constant(2, 8.0)));
}

TEST(Backward, SeededPassFromNonScalarRoot) {
  auto x = Tensor<double>::full({3}, 1.0, true);
  auto y = scale(x, 2.0);
  VectorX<double> seed(3);
  seed << 1, 2, 3;
  backward(y, seed);
  EXPECT_TRUE(x.grad().isApprox(2.0 * seed));
}

TEST(NoGrad, GuardSuppressesHistory) {
  auto x = Tensor<double>::full({2}, 1.0, true);
  {
    NoGradGuard guard;
    auto y = scale(x, 2.0);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(scale(x, 2.0).requires_grad());
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.normal(), b.normal());
  }
  Rng c(43);
  EXPECT_NE(Rng(42).next_u64(), c.next_u64());
}

TEST(Rng, UniformRangeAndBelow) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}

TEST(Rng, PoissonMeanIsClose) {
  Rng rng(9);
  double total = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) total += static_cast<double>(rng.poisson(45.0));
  EXPECT_NEAR(total / n, 45.0, 0.3);
}

TEST(Rng, ForkIsIndependentOfParentConsumption) {
  Rng a(11), b(11);
  for (int i = 0; i < 50; ++i) b.next_u64();
  EXPECT_EQ(a.fork(3).next_u64(), b.fork(3).next_u64());
  EXPECT_NE(a.fork(3).next_u64(), a.fork(4).next_u64());
}

TEST(Checkpoint, RoundTripBothWidths) {
  Rng rng(3);
  ParameterMap<double> params;
  params.emplace("w", testing::random_tensor({3, 4}, rng));
  params.emplace("b", testing::random_tensor({4}, rng));
  params.emplace("s", Tensor<double>::scalar(0.25));
  const auto dir = std::filesystem::temp_directory_path() / "scn_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.ckpt", params);
  auto loaded = load_checkpoint<double>(dir / "a.ckpt");
  ASSERT_EQ(loaded.size(), 3u);
  for (const auto& [name, t] : params) {
    EXPECT_EQ(loaded.at(name).shape(), t.shape());
    EXPECT_EQ(loaded.at(name).value(), t.value());
  }
  ParameterMap<float> narrow;
  narrow.emplace("w", Tensor<float>({2}, VectorX<float>::Constant(2, 1.5f)));
  save_checkpoint(dir / "f.ckpt", narrow);
  auto widened = load_checkpoint<double>(dir / "f.ckpt");
  EXPECT_EQ(widened.at("w").value()[1], 1.5);

  // Header: magic, version 1, width 8.
  std::ifstream is(dir / "a.ckpt", std::ios::binary);
  char magic[8];
  is.read(magic, 8);
  EXPECT_EQ(std::string(magic, 7), "SCNCKPT");
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RestoreChecksShapes) {
  ParameterMap<double> live;
  live.emplace("w", Tensor<double>::zeros({2, 2}));
  ParameterMap<double> archived;
  archived.emplace("w", Tensor<double>::zeros({3}));
  EXPECT_THROW(restore_parameters(archived, live), DimensionError);
  ParameterMap<double> missing;
  EXPECT_THROW(restore_parameters(missing, live), std::runtime_error);
}

}  // namespace
}  // namespace scn
