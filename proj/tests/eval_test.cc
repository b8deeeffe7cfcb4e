#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hashparse/brute_force.h"
#include "hashparse/eval.h"

namespace hashparse {
namespace {

std::set<Span> spans(std::initializer_list<std::pair<int, int>> list) {
  std::set<Span> out;
  for (auto [l, r] : list) out.insert({l, r});
  return out;
}

std::set<Span> tree_spans(int n, const std::vector<Triple>& splits) {
  std::set<Span> out = {{0, n - 1}};
  for (const Triple& t : splits) {
    out.insert({t.left, t.split});
    out.insert({t.split + 1, t.right});
  }
  return out;
}

TEST(SentenceF1, LeftAgainstRightIsZero) {
  EXPECT_EQ(sentence_f1(left_branching_spans(4), right_branching_spans(4), 4), 0.0);
  EXPECT_EQ(right_branching_spans(4), spans({{0, 3}, {1, 3}, {2, 3}}));
  EXPECT_EQ(left_branching_spans(4), spans({{0, 1}, {0, 2}, {0, 3}}));
}

TEST(SentenceF1, IdenticalTreesScoreOne) {
  auto s = spans({{0, 5}, {0, 1}, {2, 5}, {3, 5}});
  EXPECT_EQ(sentence_f1(s, s, 6), 1.0);
}

TEST(SentenceF1, TwoTokensHaveNoNontrivialSpans) {
  EXPECT_EQ(sentence_f1(spans({{0, 1}}), spans({{0, 1}}), 2), 1.0);
  EXPECT_EQ(sentence_f1(spans({{0, 1}, {0, 0}, {1, 1}}), spans({{0, 1}}), 2), 1.0);
}

TEST(SentenceF1, OneEmptySideScoresZero) {
  EXPECT_EQ(sentence_f1(spans({{0, 1}}), spans({{0, 2}}), 3), 0.0);
  EXPECT_EQ(sentence_f1(spans({{0, 2}}), spans({{1, 2}}), 3), 0.0);
}

TEST(SentenceF1, PartialOverlap) {
  // P = 1/2, R = 1/3.
  EXPECT_NEAR(sentence_f1(spans({{0, 1}, {2, 3}}), spans({{0, 1}, {2, 4}, {3, 4}}), 6), 0.4, 1e-15);
}

std::set<Span> random_spans(std::mt19937_64& rng, int n, int count) {
  std::set<Span> out;
  for (int c = 0; c < count; ++c) {
    int a = static_cast<int>(uniform01(rng) * n), b = static_cast<int>(uniform01(rng) * n);
    out.insert({std::min(a, b), std::max(a, b)});
  }
  return out;
}

TEST(SentenceF1, SymmetricAndMonotone) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 3 + trial % 10;
    auto pred = random_spans(rng, n, 1 + trial % 7);
    auto gold = random_spans(rng, n, 1 + trial % 5);
    const double f = sentence_f1(pred, gold, n);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_DOUBLE_EQ(f, sentence_f1(gold, pred, n));
    for (const Span& s : gold) {
      auto more = pred;
      more.insert(s);
      EXPECT_GE(sentence_f1(more, gold, n), f - 1e-15);
    }
    for (const Span& s : random_spans(rng, n, 3)) {
      if (gold.count(s)) continue;
      auto more = pred;
      more.insert(s);
      EXPECT_LE(sentence_f1(more, gold, n), f + 1e-15);
    }
  }
}

TEST(Oracle, BinaryGoldIsRecovered) {
  std::mt19937_64 rng(2);
  for (int n = 1; n <= 8; ++n) {
    auto trees = oracle::enumerate_trees(n);
    const auto& splits = trees[static_cast<size_t>(uniform01(rng) * trees.size())];
    GoldTree gold{tree_spans(n, splits), n};
    EXPECT_EQ(sentence_f1(oracle_spans(gold), gold.spans, n), 1.0);
    EXPECT_EQ(sentence_f1(right_factored_spans(gold), gold.spans, n), 1.0);
  }
}

TEST(Oracle, BoundsEveryBinaryTree) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 6;
    // Flatten a random binary tree by dropping some of its spans.
    auto trees = oracle::enumerate_trees(n);
    auto full = tree_spans(n, trees[static_cast<size_t>(uniform01(rng) * trees.size())]);
    GoldTree gold{{}, n};
    for (const Span& s : full)
      if (s.width() == n || uniform01(rng) < 0.6) gold.spans.insert(s);
    const double best = sentence_f1(oracle_spans(gold), gold.spans, n);
    EXPECT_GE(best, sentence_f1(right_factored_spans(gold), gold.spans, n) - 1e-15);
    for (const auto& t : trees) EXPECT_LE(sentence_f1(tree_spans(n, t), gold.spans, n), best + 1e-15);
  }
}

TEST(Oracle, LongSentencesUseRightFactoring) {
  const int n = kOracleDpLimit + 5;
  GoldTree gold{{{0, n - 1}, {0, 9}, {10, n - 1}}, n};
  auto o = oracle_spans(gold);
  EXPECT_EQ(o, right_factored_spans(gold));
  EXPECT_EQ(static_cast<int>(o.size()), 2 * n - 1);
}

TEST(Baselines, RightBranchingGoldCorpus) {
  std::vector<Sentence> corpus(5);
  for (int i = 0; i < 5; ++i) {
    const int n = 2 + i;
    corpus[i].tokens.resize(n, Token{"w", "", 2});
    corpus[i].gold = {right_branching_spans(n), n};
  }
  Baselines b = baselines(corpus);
  EXPECT_EQ(b.right.mean(), 1.0);
  EXPECT_EQ(b.oracle.mean(), 1.0);
}

// Hand-scored per-sentence values for tests/fixtures/mini_treebank.txt.
TEST(Baselines, MiniTreebank) {
  SplitStats stats{"mini"};
  auto corpus = read_treebank_file(std::string(HASHPARSE_FIXTURE_DIR) + "/mini_treebank.txt", IngestOptions{}, stats);
  ASSERT_EQ(corpus.size(), 10u);
  Baselines b = baselines(corpus);
  const std::vector<double> left = {1, 0, 1, 0, 0.5, 0, 2.0 / 3, 1, 0, 2.0 / 3};
  const std::vector<double> right = {1, 0, 0, 1, 0.5, 0, 0, 1, 4.0 / 7, 0};
  const std::vector<double> best = {1, 0, 1, 1, 1, 0, 2.0 / 3, 1, 6.0 / 7, 1};
  for (size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_NEAR(b.left.sentence_f1[i], left[i], 1e-12) << "sentence " << i;
    EXPECT_NEAR(b.right.sentence_f1[i], right[i], 1e-12) << "sentence " << i;
    EXPECT_NEAR(b.oracle.sentence_f1[i], best[i], 1e-12) << "sentence " << i;
  }
  EXPECT_NEAR(b.left.mean(), 29.0 / 60, 1e-12);
  EXPECT_NEAR(b.right.mean(), 57.0 / 140, 1e-12);
  EXPECT_NEAR(b.oracle.mean(), 158.0 / 210, 1e-12);
}

TEST(F1Report, MeanAndMedian) {
  F1Report r{"x", {0.2, 1.0, 0.4, 0.6}, {3, 3, 3, 3}};
  EXPECT_NEAR(r.mean(), 0.55, 1e-15);
  EXPECT_NEAR(r.median(), 0.5, 1e-15);
  r.sentence_f1.push_back(0.1);
  EXPECT_NEAR(r.median(), 0.4, 1e-15);
}

std::vector<Sentence> toy_corpus() {
  auto corpus = parse_sexpr(
      "(S (NP (D the) (N dog)) (VP (V saw) (NP (D a) (N cat))))\n"
      "(S (N he) (VP (V ran)))\n"
      "(S (NP (D a) (N cat)) (VP (V saw) (NP (D the) (N dog)) (PP (P in) (N town))))\n"
      "(S (N it))\n");
  Vocabulary v;
  assign_ids(corpus, v, true);
  return corpus;
}

TEST(Evaluate, UntrainedModelIsBoundedAndDeterministic) {
  auto corpus = toy_corpus();
  EncoderParams p = EncoderParams::random({20, 8, 2, 4, 1}, 0.3, 7);
  Evaluation a = evaluate(p, corpus, Order::first, Execution::serial);
  Evaluation b = evaluate(p, corpus, Order::first, Execution::parallel);
  EXPECT_EQ(a.report.sentence_f1, b.report.sentence_f1);
  Baselines base = baselines(corpus);
  for (size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_TRUE(std::isfinite(a.report.sentence_f1[i]));
    EXPECT_LE(a.report.sentence_f1[i], base.oracle.sentence_f1[i] + 1e-15);
    EXPECT_EQ(static_cast<int>(a.trees[i].nodes.size()), 2 * corpus[i].size() - 1);
  }
}

TEST(FormatReport, RowsAndSummary) {
  auto corpus = toy_corpus();
  Baselines base = baselines(corpus);
  F1Report r{"model", {1.0, 0.5, 0.25, 1.0}, {4, 3, 6, 1}};
  std::string text = format_report(r, &base);
  EXPECT_NE(text.find("2\t6\t0.250000\n"), std::string::npos);
  EXPECT_NE(text.find("# mean\t0.687500"), std::string::npos);
  EXPECT_NE(text.find("# median\t0.750000"), std::string::npos);
  EXPECT_NE(text.find("# delta_right_branching\t"), std::string::npos);
  EXPECT_NE(text.find("# oracle\t"), std::string::npos);
}

}  // namespace
}  // namespace hashparse
