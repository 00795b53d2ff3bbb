#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "gradmask/errors.hpp"
#include "gradmask/gradcheck.hpp"
#include "gradmask/ops.hpp"
#include "test_util.hpp"

using namespace gradmask;
using gradmask::testing::random_tensor;

namespace {

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a.at(i * k + p) * b.at(p * n + j);
  return c;
}

}  // namespace

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  SplitMix64 rng(1);
  const Tensor b = random_tensor({3, 4}, rng);
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  const Tensor c = matmul(Tensor::from({3, 3}, eye), b);
  for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_EQ(c.at(i), b.at(i));
}

TEST(Matmul, MatchesTripleLoop) {
  SplitMix64 rng(2);
  for (auto [m, k, n] : {std::tuple{2, 3, 2}, std::tuple{5, 7, 3}, std::tuple{1, 64, 9}, std::tuple{16, 16, 16}}) {
    const Tensor a = random_tensor({std::size_t(m), std::size_t(k)}, rng);
    const Tensor b = random_tensor({std::size_t(k), std::size_t(n)}, rng);
    const auto expect = naive_matmul(a, b);
    const Tensor c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{std::size_t(m), std::size_t(n)}));
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(c.at(i), expect[i], 1e-12);
  }
}

TEST(Matmul, ZeroAnnihilates) {
  SplitMix64 rng(3);
  const Tensor c = matmul(Tensor::zeros({2, 3}), random_tensor({3, 4}, rng));
  for (double v : c.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4, 2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, BackwardMatchesTransposeProducts) {
  SplitMix64 rng(4);
  const Tensor a = random_tensor({3, 4}, rng, true);
  const Tensor b = random_tensor({4, 2}, rng, true);
  const Tensor w = random_tensor({3, 2}, rng);
  sum(mul(matmul(a, b), w)).backward();
  // dA = W B^T, dB = A^T W
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 2; ++j) expect += w.at(i * 2 + j) * b.at(p * 2 + j);
      EXPECT_NEAR(a.grad()[i * 4 + p], expect, 1e-12);
    }
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t j = 0; j < 2; ++j) {
      double expect = 0.0;
      for (std::size_t i = 0; i < 3; ++i) expect += a.at(i * 4 + p) * w.at(i * 2 + j);
      EXPECT_NEAR(b.grad()[p * 2 + j], expect, 1e-12);
    }
}

TEST(BatchedMatmul, EachSliceMatchesTripleLoop) {
  SplitMix64 rng(5);
  const Tensor a = random_tensor({3, 4, 5}, rng);
  const Tensor b = random_tensor({3, 5, 2}, rng);
  const Tensor bt = random_tensor({3, 2, 5}, rng);
  const Tensor c = batched_matmul(a, b);
  const Tensor ct = batched_matmul(a, bt, true);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double e = 0.0, et = 0.0;
        for (std::size_t p = 0; p < 5; ++p) {
          e += a.at(s * 20 + i * 5 + p) * b.at(s * 10 + p * 2 + j);
          et += a.at(s * 20 + i * 5 + p) * bt.at(s * 10 + j * 5 + p);
        }
        EXPECT_NEAR(c.at(s * 8 + i * 2 + j), e, 1e-12);
        EXPECT_NEAR(ct.at(s * 8 + i * 2 + j), et, 1e-12);
      }
}

TEST(Softmax, UniformRow) {
  const Tensor s = softmax_rows(Tensor::from({1, 3}, {0, 0, 0}));
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeScoresDoNotOverflow) {
  const Tensor s = softmax_rows(Tensor::from({1, 2}, {1000, 0}));
  EXPECT_TRUE(std::isfinite(s.at(0)));
  EXPECT_NEAR(s.at(0), 1.0, 1e-15);
  EXPECT_NEAR(s.at(1), 0.0, 1e-15);
}

TEST(Softmax, ExcludedEntryGetsExactlyZero) {
  const Tensor s = softmax_rows(Tensor::from({1, 3}, {1, 2, 3}), ExcludeMask{0, 0, 1});
  const double z = std::exp(1.0) + std::exp(2.0);
  EXPECT_NEAR(s.at(0), std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(s.at(1), std::exp(2.0) / z, 1e-15);
  EXPECT_EQ(s.at(2), 0.0);
}

TEST(Softmax, FullyExcludedRowIsDegenerate) {
  EXPECT_THROW(softmax_rows(Tensor::from({2, 2}, {1, 2, 3, 4}), ExcludeMask{0, 0, 1, 1}), DegenerateRowError);
}

TEST(Softmax, RowsSumToOneOnRandomInputs) {
  SplitMix64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor s = softmax_rows(random_tensor({2, 7, 7}, rng, false, 30.0));
    for (std::size_t r = 0; r < 14; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const double v = s.at(r * 7 + j);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Elementwise, ReluDefinitionAndKinkDerivative) {
  const Tensor x = Tensor::from({3}, {-1, 0, 2}, true);
  const Tensor y = relu(x);
  EXPECT_EQ(y.at(0), 0.0);
  EXPECT_EQ(y.at(1), 0.0);
  EXPECT_EQ(y.at(2), 2.0);
  sum(y).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Elementwise, MulByOnesIsBitwiseIdentity) {
  SplitMix64 rng(7);
  const Tensor a = random_tensor({4, 5}, rng);
  const Tensor y = mul(a, Tensor::full({4, 5}, 1.0));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(y.at(i), a.at(i));
}

TEST(Elementwise, ExpInvertsLog) {
  const Tensor x = Tensor::from({3}, {0.5, 1.0, 3.0});
  const Tensor y = exp(log(x));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.at(i), x.at(i), 1e-12);
}

TEST(Elementwise, LogOfNonPositiveIsDomainError) {
  EXPECT_THROW(log(Tensor::from({2}, {1.0, 0.0})), DomainError);
  EXPECT_THROW(log(Tensor::from({1}, {-2.0})), DomainError);
}

TEST(Elementwise, BinaryOpsRejectShapeMismatch) {
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(mul(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  const Tensor y = layer_norm(Tensor::full({1, 4}, 3.0), Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-5);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementRowHandValue) {
  const Tensor y = layer_norm(Tensor::from({1, 2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12);
  EXPECT_NEAR(y.at(0), -1.0, 1e-9);
  EXPECT_NEAR(y.at(1), 1.0, 1e-9);
}

TEST(LayerNorm, ZeroGainGivesBias) {
  SplitMix64 rng(8);
  const Tensor bias = Tensor::from({3}, {0.1, -0.2, 0.3});
  const Tensor y = layer_norm(random_tensor({5, 3}, rng), Tensor::zeros({3}), bias, 1e-5);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at(r * 3 + c), bias.at(c));
}

TEST(Dropout, ZeroRateAndEvalModeAreIdentity) {
  SplitMix64 rng(9);
  const Tensor x = random_tensor({10, 10}, rng);
  const Tensor a = dropout(x, 0.0, rng, true);
  const Tensor b = dropout(x, 0.5, rng, false);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(a.at(i), x.at(i));
    EXPECT_EQ(b.at(i), x.at(i));
  }
}

TEST(Dropout, SurvivorFractionAndScaling) {
  SplitMix64 rng(10);
  const std::size_t n = 1000000;
  const Tensor y = dropout(Tensor::full({n}, 1.0), 0.5, rng, true);
  std::size_t kept = 0;
  for (double v : y.values()) {
    if (v != 0.0) {
      EXPECT_EQ(v, 2.0);
      ++kept;
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / n, 0.5, 0.01);
}

TEST(Dropout, RateOfOneRejected) {
  SplitMix64 rng(11);
  EXPECT_THROW(dropout(Tensor::zeros({2}), 1.0, rng, true), ParameterError);
}

TEST(Dropout, BackwardUsesTheSameMask) {
  SplitMix64 rng(12);
  const Tensor x = random_tensor({50}, rng, true);
  const Tensor y = dropout(x, 0.3, rng, true);
  sum(y).backward();
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(x.grad()[i], y.at(i) == 0.0 ? 0.0 : 1.0 / 0.7);
}

TEST(Backward, SumGivesOnes) {
  SplitMix64 rng(13);
  const Tensor x = random_tensor({3, 3}, rng, true);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquaredNormGivesInput) {
  SplitMix64 rng(14);
  const Tensor x = random_tensor({6}, rng, true);
  mul_scalar(sum(mul(x, x)), 0.5).backward();
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(x.grad()[i], x.at(i), 1e-15);
}

TEST(Backward, FanOutAccumulates) {
  const Tensor x = Tensor::from({1}, {3.0}, true);
  sum(add(mul(x, x), add(x, x))).backward();  // x^2 + 2x
  EXPECT_EQ(x.grad()[0], 8.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  const Tensor x = Tensor::zeros({2}, true);
  EXPECT_THROW(add_scalar(x, 1.0).backward(), ContractError);
}

TEST(Backward, UnreachableGradUntouched) {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  const Tensor y = Tensor::from({2}, {3, 4}, true);
  sum(x).backward();
  EXPECT_FALSE(y.has_grad());
}

TEST(Backward, TapeVisitsEachNodeOnceRootFirst) {
  const Tensor x = Tensor::from({1}, {2.0}, true);
  const Tensor a = mul(x, x);
  const Tensor loss = sum(add(a, a));
  const Tape tape = build_tape(loss);
  std::set<detail::Node*> seen(tape.order.begin(), tape.order.end());
  EXPECT_EQ(seen.size(), tape.order.size());
  EXPECT_EQ(tape.order.front(), loss.node().get());
  const auto pos = [&](const Tensor& t) {
    return std::find(tape.order.begin(), tape.order.end(), t.node().get()) - tape.order.begin();
  };
  EXPECT_LT(pos(a), pos(x));
}

TEST(Backward, RepeatedRunsAreBitwiseEqual) {
  SplitMix64 rng(15);
  Tensor a = random_tensor({4, 6}, rng, true);
  const Tensor b = random_tensor({6, 3}, rng, true);
  const auto run = [&] {
    a.zero_grad();
    sum(softmax_rows(matmul(a, b))).backward();
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(NoGrad, RecordsNoHistory) {
  const Tensor x = Tensor::from({1}, {2.0}, true);
  NoGradGuard guard;
  const Tensor y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Gradcheck, QuadraticForm) {
  SplitMix64 rng(16);
  const Tensor q = random_tensor({4, 4}, rng);
  const Tensor x = random_tensor({4, 1}, rng, true);
  const auto f = [&] { return sum(mul(x, matmul(q, x))); };
  EXPECT_LE(gradcheck(f, {x}).max_relative_error, 1e-9);
}

TEST(Gradcheck, DisconnectedParameterHasZeroGradient) {
  SplitMix64 rng(17);
  const Tensor x = random_tensor({3}, rng, true);
  Tensor unused = random_tensor({2}, rng, true);
  const auto f = [&] { return sum(mul(x, x)); };
  const auto r = gradcheck(f, {x, unused});
  EXPECT_EQ(r.per_param[1], 0.0);
  unused.zero_grad();
  f().backward();
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Gradcheck, PureOpsWithinTightTolerance) {
  SplitMix64 rng(18);
  const Tensor a = random_tensor({3, 4}, rng, true);
  const Tensor b = random_tensor({4, 3}, rng, true);
  const Tensor g = random_tensor({3}, rng, true);
  const Tensor bias = random_tensor({3}, rng, true);
  const Tensor pos = Tensor::from({3, 3}, {0.5, 1.2, 2.0, 0.7, 1.1, 3.0, 0.9, 1.5, 2.5}, true);
  const Tensor w = random_tensor({3, 3}, rng);
  const ExcludeMask ex{0, 1, 0, 0, 0, 0, 1, 0, 0};
  const std::vector<std::function<Tensor()>> fns = {
      [&] { return sum(mul(w, matmul(a, b))); },
      [&] { return sum(mul(w, softmax_rows(matmul(a, b), ex))); },
      [&] { return sum(mul(w, layer_norm(matmul(a, b), g, bias, 1e-5))); },
      [&] { return sum(mul(w, sigmoid(matmul(a, b)))); },
      [&] { return sum(mul(w, exp(mul_scalar(log(pos), 0.3)))); },
      [&] { return sum(div(matmul(a, b), pos)); },
      [&] { return cross_entropy(matmul(a, b), std::vector<std::size_t>{0, 2, 1}); },
      [&] { return sum(mul(w, add_row_bias(transpose(transpose(matmul(a, b))), bias))); },
      [&] { return sum(mean_pool_rows(mul(w, matmul(a, b)), {{0, 2}, {1}})); },
  };
  for (std::size_t k = 0; k < fns.size(); ++k) {
    EXPECT_LE(gradcheck(fns[k], {a, b, g, bias, pos}).max_relative_error, 1e-6) << "function " << k;
  }
}

TEST(Gradcheck, NonFiniteProbeRaises) {
  const Tensor x = Tensor::from({1}, {1e-7}, true);
  const auto f = [&] { return sum(log(x)); };
  EXPECT_THROW(gradcheck(f, {x}, 1e-6), Error);
}

TEST(Memory, PeakTracksLiveStorage) {
  const auto before = memory_stats().live_bytes;
  reset_peak_memory();
  {
    const Tensor t = Tensor::zeros({1000});
    EXPECT_GE(memory_stats().live_bytes, before + 8000);
  }
  EXPECT_EQ(memory_stats().live_bytes, before);
  EXPECT_GE(memory_stats().peak_bytes, before + 8000);
}
