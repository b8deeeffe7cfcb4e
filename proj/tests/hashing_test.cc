#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hashparse/hashing.h"

namespace hashparse {
namespace {

double lse2(double a, double b) { return std::log(std::exp(a) + std::exp(b)); }
double lse3(double a, double b, double c) { return std::log(std::exp(a) + std::exp(b) + std::exp(c)); }

Chart zero_chart(int bits, int n) {
  return inside_outside(first_order_span_scores(ScoreTable(bits, n, std::vector<double>(bits * n * n, 0.0))));
}

TEST(Smoothing, ClosedForms) {
  std::vector<double> one = {0.37};
  EXPECT_EQ(smooth_min_balanced(one), 0.37);
  std::vector<double> twice = {-1.25, -1.25};
  EXPECT_NEAR(smooth_min_balanced(twice), -1.25, 1e-15);
  std::vector<double> pair = {0.0, std::log(3.0)};
  EXPECT_NEAR(smooth_min_balanced(pair), std::log(1.5), 1e-15);
  EXPECT_NEAR(smooth_min_balanced(pair), 0.405465, 1e-6);
  EXPECT_THROW(smooth_max(std::span<const double>()), std::invalid_argument);
  EXPECT_THROW(smooth_min(std::span<const double>()), std::invalid_argument);
}

TEST(Smoothing, OrderingOnRandomSets) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(1 + trial % 17);
    for (double& v : x) v = 5.0 * standard_normal(rng);
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    const double bal = smooth_min_balanced(x);
    EXPECT_LE(lo, bal + 1e-12);
    EXPECT_LE(bal, hi + 1e-12);
    EXPECT_NEAR(bal, smooth_min(x) + std::log(static_cast<double>(x.size())), 1e-12);
    EXPECT_LE(smooth_min(x), lo + 1e-12);
    EXPECT_GE(smooth_max(x), hi - 1e-12);
  }
}

TEST(LossSpec, NamesAndGrid) {
  for (const auto& name : named_losses()) EXPECT_EQ(LossSpec::parse(name).name(), name);
  EXPECT_EQ(named_losses().size(), 6u);
  EXPECT_EQ(LossSpec::parse("bmin"), (LossSpec{NegativeSet::balanced_min, PositiveSet::min}));
  EXPECT_EQ(LossSpec::parse("self/max"), LossSpec::parse("max"));
  EXPECT_EQ(LossSpec::parse("all/max").name(), "all/max");
  EXPECT_THROW(LossSpec::parse("bogus"), std::invalid_argument);
  EXPECT_THROW(LossSpec::parse("all/nope"), std::invalid_argument);
  auto grid = loss_grid();
  ASSERT_EQ(grid.size(), 9u);
  for (size_t a = 0; a < grid.size(); ++a)
    for (size_t b = a + 1; b < grid.size(); ++b) EXPECT_FALSE(grid[a] == grid[b]);
  for (const auto& spec : grid) EXPECT_EQ(LossSpec::parse(spec.name()), spec);
}

TEST(Binarize, ZeroScoresGiveAllMinusOne) {
  Chart c = zero_chart(3, 3);
  EXPECT_EQ(binarize(c, TreeNode{0, 2, 0, {}}), (Code{-1, -1, -1}));
  EXPECT_EQ(binarize(c, TreeNode{1, 1, -1, {}}), (Code{-1, -1, -1}));
}

TEST(Binarize, SignOfScore) {
  // n = 2: the only split carries g = (2, -1); leaf 0 scores (0.5, -0.5).
  ScoreTable t(2, 2, {0.5, 2.0, 0.0, 0.0, -0.5, -1.0, 0.0, 0.0});
  Chart c = inside_outside(first_order_span_scores(t));
  EXPECT_EQ(binarize(c, TreeNode{0, 1, 0, {}}), (Code{1, -1}));
  EXPECT_EQ(binarize(c, TreeNode{0, 0, -1, {}}), (Code{1, -1}));
}

TEST(Similarity, ZeroScoresQuarterEverywhere) {
  Chart c = zero_chart(2, 3);
  for (Code code : {Code{1, 1}, Code{1, -1}, Code{-1, -1}}) {
    EXPECT_NEAR(similarity(c, TreeNode{0, 2, 0, {}}, code), 0.25, 1e-12);
  }
  EXPECT_THROW(similarity(c, TreeNode{0, 2, 0, {}}, Code{1}), std::invalid_argument);
}

TEST(Similarity, OwnCodeMaximizesAndBitsAreAffine) {
  std::mt19937_64 rng(2);
  const int n = 5, bits = 3;
  std::vector<double> s(bits * n * n);
  for (double& x : s) x = 2.0 * standard_normal(rng);
  Chart c = inside_outside(first_order_span_scores(ScoreTable(bits, n, s)));
  TripleIndex index(n);
  for (int t = 0; t < index.size(); ++t) {
    TreeNode node{index[t].left, index[t].right, index[t].split, {}};
    Code own = binarize(c, node);
    const double best = similarity(c, node, own);
    for (int mask = 0; mask < (1 << bits); ++mask) {
      Code code(bits);
      for (int k = 0; k < bits; ++k) code[k] = (mask >> k) & 1 ? 1 : -1;
      const double v = similarity(c, node, code);
      EXPECT_LE(v, best + 1e-15);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      for (int k = 0; k < bits; ++k) {
        Code flipped = code;
        flipped[k] = -flipped[k];
        const double mu_pos = c.bit_marginal_pos[t * bits + k], mu_neg = c.bit_marginal_neg[t * bits + k];
        const double expect = code[k] > 0 ? (mu_neg - mu_pos) / bits : (mu_pos - mu_neg) / bits;
        EXPECT_NEAR(similarity(c, node, flipped) - v, expect, 1e-15);
      }
    }
  }
}

TEST(Similarity, SingleBitComplement) {
  std::mt19937_64 rng(3);
  const int n = 4;
  std::vector<double> s(n * n);
  for (double& x : s) x = standard_normal(rng);
  Chart c = inside_outside(first_order_span_scores(ScoreTable(1, n, s)));
  TripleIndex index(n);
  for (int t = 0; t < index.size(); ++t) {
    TreeNode node{index[t].left, index[t].right, index[t].split, {}};
    Code own = binarize(c, node);
    Code other = {static_cast<int8_t>(-own[0])};
    EXPECT_NEAR(similarity(c, node, other), c.split_marginal[t] - similarity(c, node, own), 1e-15);
  }
}

TEST(Partition, KeysAndTwins) {
  // Keys of a two-token tree plus a repeated leaf.
  std::vector<std::vector<int>> keys = {{5, 6}, {5}, {6}, {5}};
  auto ids = key_ids(keys);
  EXPECT_EQ(ids, (std::vector<int>{0, 1, 2, 1}));
  Partition p = partition(ids, 1);
  EXPECT_EQ(p.positives, (std::vector<int>{1, 3}));
  EXPECT_EQ(p.negatives, (std::vector<int>{0, 2}));
  Partition solo = partition(ids, 0);
  EXPECT_EQ(solo.positives, (std::vector<int>{0}));
}

// Anchor 0 with keys {a, a, b}: P = {0, 1}, N = {2}.
class ThreeInstance : public ::testing::Test {
 protected:
  std::vector<int> keys = {0, 0, 1};
  std::vector<double> s = {0.8, 0.3, 0.55};
  Partition part = partition(keys, 0);

  double loss(const std::string& name, double tau = 1.0) {
    return *instance_loss(LossSpec::parse(name), 0, s, part, tau);
  }
};

TEST_F(ThreeInstance, NamedVariantsTermForTerm) {
  const double a = s[0], b = s[1], c = s[2];
  EXPECT_NEAR(loss("self"), lse3(a, b, c) - a, 1e-12);
  EXPECT_NEAR(loss("sup"), lse3(a, b, c) - (a + b) / 2, 1e-12);
  EXPECT_NEAR(loss("hash"), lse2(c, a) - a, 1e-12);
  EXPECT_NEAR(loss("max"), lse2(c, a) - lse2(a, b), 1e-12);
  EXPECT_NEAR(loss("min"), lse2(c, a) + lse2(-a, -b), 1e-12);
  const double balanced = -lse2(-a, -b) + std::log(2.0);
  EXPECT_NEAR(loss("bmin"), lse2(c, balanced) + lse2(-a, -b), 1e-12);
}

TEST_F(ThreeInstance, TemperatureScalesEverySimilarity) {
  const double tau = 0.1;
  const double a = s[0] / tau, b = s[1] / tau, c = s[2] / tau;
  EXPECT_NEAR(loss("max", tau), lse2(c, a) - lse2(a, b), 1e-12);
  EXPECT_NEAR(loss("self", tau), lse3(a, b, c) - a, 1e-12);
}

TEST_F(ThreeInstance, MinPositiveDominatesMaxPositive) {
  for (auto neg : {NegativeSet::all, NegativeSet::self, NegativeSet::balanced_min}) {
    const double with_min = *instance_loss({neg, PositiveSet::min}, 0, s, part, 0.1);
    const double with_max = *instance_loss({neg, PositiveSet::max}, 0, s, part, 0.1);
    EXPECT_GE(with_min, with_max);
  }
}

TEST(InstanceLoss, HashWithoutNegativesIsZero) {
  std::vector<int> keys = {0};
  std::vector<double> s = {0.6};
  EXPECT_NEAR(*instance_loss(LossSpec::parse("hash"), 0, s, partition(keys, 0), 0.1), 0.0, 1e-12);
}

TEST(InstanceLoss, SingletonBalancedMinEqualsMin) {
  std::vector<int> keys = {0, 1, 2};
  std::vector<double> s = {0.6, 0.2, 0.9};
  Partition p = partition(keys, 0);
  EXPECT_DOUBLE_EQ(*instance_loss(LossSpec::parse("bmin"), 0, s, p, 0.1),
                   *instance_loss(LossSpec::parse("min"), 0, s, p, 0.1));
}

TEST(InstanceLoss, EmptyPositivesSkipOnlyWhenNeeded) {
  std::vector<double> s = {0.6, 0.2};
  Partition p{{}, {1}};
  EXPECT_FALSE(instance_loss(LossSpec::parse("bmin"), 0, s, p, 0.1).has_value());
  EXPECT_FALSE(instance_loss(LossSpec::parse("sup"), 0, s, p, 0.1).has_value());
  EXPECT_TRUE(instance_loss(LossSpec::parse("hash"), 0, s, p, 0.1).has_value());
}

DirectionInput random_direction(std::mt19937_64& rng, int count, int bits, int distinct) {
  DirectionInput in;
  for (int i = 0; i < count; ++i) {
    for (int k = 0; k < bits; ++k) {
      const double m = uniform01(rng), p = uniform01(rng);
      in.marginals.push_back(m * p);
    }
    for (int k = 0; k < bits; ++k) in.marginals.push_back(uniform01(rng) * 0.5);
    Code c(bits);
    for (auto& b : c) b = uniform01(rng) < 0.5 ? 1 : -1;
    in.codes.push_back(c);
    in.keys.push_back(static_cast<int>(uniform01(rng) * distinct));
  }
  return in;
}

TEST(DirectionLoss, TapeMatchesPlainAndFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (const auto& name : named_losses()) {
    const int count = 9, bits = 3;
    DirectionInput in = random_direction(rng, count, bits, 4);
    LossDiagnostics plain_diag, tape_diag;
    const double plain = direction_loss(LossSpec::parse(name), in, bits, 0.1, &plain_diag);
    grad::Tape tape;
    grad::Var mu = tape.parameter("mu", in.marginals, count, 2 * bits);
    grad::Var loss = record_direction_loss(tape, mu, in.codes, in.keys, LossSpec::parse(name), 0.1, &tape_diag);
    EXPECT_NEAR(tape.scalar(loss), plain, 1e-12) << name;
    EXPECT_EQ(plain_diag.anchors, tape_diag.anchors);
    EXPECT_EQ(plain_diag.positive_total, tape_diag.positive_total);
    tape.backward(loss);
    auto g = tape.gradient(mu);
    const double h = 1e-6;
    for (size_t e = 0; e < in.marginals.size(); ++e) {
      DirectionInput up = in, down = in;
      up.marginals[e] += h;
      down.marginals[e] -= h;
      const double fd = (direction_loss(LossSpec::parse(name), up, bits, 0.1) -
                         direction_loss(LossSpec::parse(name), down, bits, 0.1)) /
                        (2 * h);
      EXPECT_NEAR(g[e], fd, 1e-6) << name << " entry " << e;
    }
  }
}

TEST(DirectionLoss, InvariantToInstanceOrder) {
  std::mt19937_64 rng(5);
  const int count = 12, bits = 4;
  DirectionInput in = random_direction(rng, count, bits, 5);
  std::vector<int> perm(count);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  DirectionInput shuffled;
  for (int i : perm) {
    shuffled.marginals.insert(shuffled.marginals.end(), in.marginals.begin() + i * 2 * bits,
                              in.marginals.begin() + (i + 1) * 2 * bits);
    shuffled.codes.push_back(in.codes[i]);
    shuffled.keys.push_back(in.keys[i]);
  }
  for (const auto& spec : loss_grid()) {
    EXPECT_NEAR(direction_loss(spec, in, bits, 0.1), direction_loss(spec, shuffled, bits, 0.1), 1e-12);
  }
}

TEST(DirectionLoss, DiagnosticsCountPositives) {
  DirectionInput in;
  in.codes = {Code{1}, Code{-1}, Code{1}};
  in.marginals = {0.2, 0.3, 0.4, 0.1, 0.25, 0.25};
  in.keys = {7, 7, 8};
  LossDiagnostics d;
  direction_loss(LossSpec::parse("bmin"), in, 1, 0.1, &d);
  EXPECT_EQ(d.anchors, 3);
  EXPECT_EQ(d.positive_total, 5);
  EXPECT_EQ(d.positive_max, 2);
  EXPECT_EQ(d.singleton_positive, 1);
  EXPECT_NEAR(d.mean_positives(), 5.0 / 3, 1e-15);
}

}  // namespace
}  // namespace hashparse
