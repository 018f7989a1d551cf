#include <cmath>

#include <gtest/gtest.h>

#include "stlab/error.hpp"
#include "stlab/grad_check.hpp"
#include "stlab/losses.hpp"
#include "stlab/rng.hpp"
#include "stlab/vocab.hpp"
#include "test_util.hpp"

namespace stlab {
namespace {

using testing::random_tensor;

double scalar(Var v) { return v.value()(0, 0); }

std::vector<std::string> words(const char* text) { return split_words(text); }

TEST(CrossEntropy, Examples) {
  Tape t;
  const std::size_t targets[] = {1, 0};
  EXPECT_NEAR(scalar(cross_entropy(t.constant(Tensor::matrix({{-800, 0, -800}, {0, -800, -800}})), targets)), 0.0,
              1e-300);
  const std::size_t one[] = {2};
  EXPECT_NEAR(scalar(cross_entropy(t.constant(Tensor::zeros(1, 4)), one)), std::log(4.0), 1e-15);
  EXPECT_NEAR(std::log(4.0), 1.3862943611198906, 1e-15);
}

TEST(CrossEntropy, MaskRemovesPositionExactly) {
  Rng rng(1);
  Tape t;
  const Tensor logits = random_tensor(3, 5, rng);
  const std::size_t targets[] = {1, 4, 2};
  const bool mask[] = {true, false, true};
  const double masked = scalar(cross_entropy(t.constant(logits), targets, mask));
  Tensor kept = Tensor::zeros(2, 5);
  for (std::size_t k = 0; k < 5; ++k) {
    kept(0, k) = logits(0, k);
    kept(1, k) = logits(2, k);
  }
  const std::size_t kept_targets[] = {1, 2};
  EXPECT_EQ(masked, scalar(cross_entropy(t.constant(kept), kept_targets)));
  const bool none[] = {false, false, false};
  EXPECT_THROW(cross_entropy(t.constant(logits), targets, none), DomainError);
  EXPECT_THROW(cross_entropy(t.constant(logits), std::vector<std::size_t>{1}), DimensionError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  Parameter logits = make_uniform_parameter("logits", 4, 6, rng, 2.0);
  ParameterGroup group("g", {&logits});
  const std::size_t targets[] = {0, 5, 3, 3};
  const bool mask[] = {true, true, false, true};
  auto loss = [&](Tape& t) { return cross_entropy(t.param(logits), targets, mask); };
  EXPECT_LE(grad_check(loss, group, 1e-4).max_relative_error, 1e-4);
}

TEST(SimilarityLoss, Examples) {
  Tape t;
  Var a = t.constant(Tensor::matrix({{1, 0}}));
  Var b = t.constant(Tensor::matrix({{0, 1}}));
  EXPECT_EQ(scalar(similarity_loss(a, a)), 0.0);
  EXPECT_NEAR(scalar(similarity_loss(a, b)), 100.0, 1e-12);
  EXPECT_EQ(scalar(similarity_loss(a, b)), scalar(similarity_loss(b, a)));
  EXPECT_THROW(similarity_loss(a, t.constant(Tensor::zeros(1, 3))), DimensionError);
}

TEST(SimilarityLoss, NonNegativeZeroOnlyWhenEqualAndDifferentiable) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    const Tensor x = random_tensor(1, 6, rng);
    Tensor y = x;
    y(0, rng.below(6)) += 1e-3;
    EXPECT_GT(scalar(similarity_loss(t.constant(x), t.constant(y))), 0.0);
    EXPECT_EQ(scalar(similarity_loss(t.constant(x), t.constant(x))), 0.0);
  }
  Parameter a = make_uniform_parameter("a", 3, 5, rng, 1.0);
  Parameter b = make_uniform_parameter("b", 2, 5, rng, 1.0);
  ParameterGroup group("g", {&a, &b});
  auto loss = [&](Tape& t) {
    return similarity_loss(pool_encoder_states(t.param(a), 3), pool_encoder_states(t.param(b), 2));
  };
  EXPECT_LE(grad_check(loss, group, 1e-4).max_relative_error, 1e-4);
}

TEST(Pooling, Examples) {
  Tape t;
  EXPECT_TRUE(pool_encoder_states(t.constant(Tensor::matrix({{3, -1}})), 1).value().bitwise_equal(
      Tensor::matrix({{3, -1}})));
  EXPECT_TRUE(pool_encoder_states(t.constant(Tensor::matrix({{2, 0}, {0, 2}})), 2).value().bitwise_equal(
      Tensor::matrix({{1, 1}})));
  const Tensor padded_a = Tensor::matrix({{2, 0}, {0, 2}, {9, 9}});
  const Tensor padded_b = Tensor::matrix({{2, 0}, {0, 2}, {-4, 7}});
  EXPECT_TRUE(pool_encoder_states(t.constant(padded_a), 2).value().bitwise_equal(
      pool_encoder_states(t.constant(padded_b), 2).value()));
  EXPECT_THROW(pool_encoder_states(t.constant(padded_a), 0), DomainError);
  EXPECT_THROW(pool_encoder_states(t.constant(padded_a), 4), DomainError);
}

TEST(Wer, Examples) {
  EXPECT_EQ(wer(words("a b c"), words("a b c")), 0.0);
  EXPECT_EQ(wer(words("a b c"), words("a c")), 1.0 / 3.0);
  EXPECT_EQ(wer(words("a"), words("b c")), 2.0);
  EXPECT_THROW(wer(std::vector<std::string>{}, words("a")), DomainError);
}

TEST(Wer, ZeroIffEqualAndInvariantToRelabeling) {
  Rng rng(4);
  const std::vector<std::string> alphabet{"p", "q", "r", "s"};
  const std::vector<std::string> renamed{"w", "x", "y", "z"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ref(1 + rng.below(5)), hyp(rng.below(6)), ref2, hyp2;
    for (auto& w : ref) w = alphabet[rng.below(4)];
    for (auto& w : hyp) w = alphabet[rng.below(4)];
    for (const auto& w : ref) ref2.push_back(renamed[static_cast<std::size_t>(w[0] - 'p')]);
    for (const auto& w : hyp) hyp2.push_back(renamed[static_cast<std::size_t>(w[0] - 'p')]);
    EXPECT_EQ(wer(ref, hyp) == 0.0, ref == hyp);
    EXPECT_EQ(wer(ref, hyp), wer(ref2, hyp2));
  }
}

TEST(Bleu, Examples) {
  const std::vector<std::vector<std::string>> refs{words("a b c d"), words("e f g")};
  EXPECT_NEAR(bleu(refs, refs), 100.0, 1e-12);
  EXPECT_EQ(bleu(refs, {{}, {}}), 0.0);
  // p1 = 1/3, p2 = (0+1)/(2+1), p3 = (0+1)/(1+1), p4 = (0+1)/(0+1), BP = 1;
  // value from an independent script: 100 * (1/18)^(1/4).
  EXPECT_NEAR(bleu({words("the cat")}, {words("the the the")}), 48.54917717073234, 1e-9);
  EXPECT_NEAR(bleu({words("a b c d e f")}, {words("a b c")}), 36.787944117144235, 1e-9);
  EXPECT_THROW(bleu(refs, {{}}), DomainError);
  EXPECT_THROW(bleu({}, {}), DomainError);
}

TEST(Bleu, CorruptingOneTokenStrictlyDecreases) {
  const auto ref = words("a b c d e f");
  const double perfect = bleu({ref}, {ref});
  for (std::size_t i = 0; i < ref.size(); ++i) {
    auto hyp = ref;
    hyp[i] = "zz";
    EXPECT_LT(bleu({ref}, {hyp}), perfect) << i;
  }
  EXPECT_NEAR(bleu({words("a b c d e")}, {words("a b x d e")}), 44.721359549995796, 1e-9);
}

}  // namespace
}  // namespace stlab
