#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "hashparse/treebank.h"

namespace hashparse {
namespace {

std::set<Span> spans(std::initializer_list<std::pair<int, int>> list) {
  std::set<Span> out;
  for (auto [l, r] : list) out.insert({l, r});
  return out;
}

TEST(ParseSexpr, ReadsTokensTagsAndSpans) {
  auto s = parse_sexpr("(S (NP (DT the) (NN dog)) (VBZ runs))");
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(s[0].size(), 3);
  EXPECT_EQ(s[0].tokens[0].surface, "the");
  EXPECT_EQ(s[0].tokens[0].pos, "DT");
  EXPECT_EQ(s[0].tokens[2].surface, "runs");
  EXPECT_EQ(s[0].tokens[2].pos, "VBZ");
  EXPECT_EQ(s[0].gold.spans, spans({{0, 2}, {0, 1}}));
  EXPECT_EQ(s[0].gold.n, 3);
}

TEST(ParseSexpr, SingleLeafTree) {
  auto s = parse_sexpr("(X (A a))");
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(s[0].size(), 1);
  EXPECT_EQ(s[0].tokens[0].pos, "A");
  EXPECT_EQ(s[0].gold.spans, spans({{0, 0}}));
}

TEST(ParseSexpr, UnbalancedInputReportsPosition) {
  try {
    parse_sexpr("((A a) (B b");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1);
    EXPECT_GT(e.column(), 0);
  }
}

TEST(ParseSexpr, RejectsEmptyTree) { EXPECT_THROW(parse_sexpr("()"), ParseError); }

TEST(ParseSexpr, UnaryChainsCollapse) {
  auto s = parse_sexpr("(S (VP (VP (V go) (ADV now))))");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].gold.spans, spans({{0, 1}}));
}

TEST(ParseSexpr, ReadsSeveralTreesAcrossLines) {
  auto s = parse_sexpr("(S (A a)\n (B b))\n\n(S (C c) (D d) (E e))");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].size(), 3);
  EXPECT_EQ(s[1].gold.spans, spans({{0, 2}}));
}

TEST(ParseSexpr, PrintRoundTrip) {
  const char* text =
      "(S (NP (DT the) (JJ big) (NN dog)) (VP (VBD saw) (NP (PRP it)) (PP (IN in) (NP (DT the) (NN park)))))";
  auto first = parse_sexpr(text);
  auto second = parse_sexpr(print_sexpr(first[0]));
  ASSERT_EQ(second.size(), 1u);
  EXPECT_EQ(second[0].gold.spans, first[0].gold.spans);
  ASSERT_EQ(second[0].size(), first[0].size());
  for (int i = 0; i < first[0].size(); ++i) {
    EXPECT_EQ(second[0].tokens[i].surface, first[0].tokens[i].surface);
    EXPECT_EQ(second[0].tokens[i].pos, first[0].tokens[i].pos);
  }
}

TEST(StripPunctuation, ReindexesSpans) {
  auto s = parse_sexpr("(S (NP (DT the) (NN dog)) (VBZ runs) (. .))")[0];
  ASSERT_EQ(s.gold.spans, spans({{0, 3}, {0, 1}}));
  ASSERT_TRUE(strip_punctuation(s, default_punctuation_tags()));
  ASSERT_EQ(s.size(), 3);
  EXPECT_EQ(s.tokens[2].surface, "runs");
  EXPECT_EQ(s.gold.spans, spans({{0, 2}, {0, 1}}));
  EXPECT_EQ(s.gold.n, 3);
}

TEST(StripPunctuation, NoPunctuationIsIdentity) {
  auto s = parse_sexpr("(S (NP (DT the) (NN dog)) (VBZ runs))")[0];
  auto before = s;
  ASSERT_TRUE(strip_punctuation(s, default_punctuation_tags()));
  EXPECT_EQ(s.gold.spans, before.gold.spans);
  EXPECT_EQ(s.size(), before.size());
}

TEST(StripPunctuation, AllPunctuationIsDiscarded) {
  auto s = parse_sexpr("(S (. !) (. ?))")[0];
  auto before = s;
  EXPECT_FALSE(strip_punctuation(s, default_punctuation_tags()));
  EXPECT_EQ(s.size(), before.size());
}

TEST(StripPunctuation, DropsEmptiedAndDuplicateSpans) {
  auto s = parse_sexpr("(S (NP (DT a) (NN b)) (PRN (, ,) (: --)) (VP (VB c)))")[0];
  ASSERT_TRUE(strip_punctuation(s, default_punctuation_tags()));
  EXPECT_EQ(s.size(), 3);
  EXPECT_EQ(s.gold.spans, spans({{0, 2}, {0, 1}, {2, 2}}));
}

TEST(StripPunctuation, PreservesNesting) {
  std::mt19937_64 rng(7);
  const char* trees[] = {
      "(S (`` ``) (NP (DT the) (NN dog) (, ,)) (VP (VBD ran) (PP (IN to) (NP (NN town)))) (. .))",
      "(S (NP (NNP A) (, ,) (NNP B)) (: ;) (VP (VBD met) (NP (PRP them))) (. .))",
      "(S (-LRB- -LRB-) (NP (CD 3) ($ $)) (-RRB- -RRB-) (VP (VBD fell)))",
  };
  for (const char* t : trees) {
    auto s = parse_sexpr(t)[0];
    ASSERT_TRUE(strip_punctuation(s, default_punctuation_tags()));
    for (const Span& a : s.gold.spans) {
      EXPECT_GE(a.left, 0);
      EXPECT_LT(a.right, s.size());
      for (const Span& b : s.gold.spans) {
        const bool disjoint = a.right < b.left || b.right < a.left;
        const bool nested = (a.left <= b.left && b.right <= a.right) || (b.left <= a.left && a.right <= b.right);
        EXPECT_TRUE(disjoint || nested);
      }
    }
    EXPECT_TRUE(s.gold.spans.count({0, s.size() - 1}));
  }
}

TEST(Ingest, DropsEmptyElementsAndCountsDiscards) {
  SplitStats stats{"train"};
  auto s = ingest_split("(S (NP (-NONE- *T*)) (VP (VB go)))\n(S (. .))\n(S (A x) (B y))", IngestOptions{}, stats);
  EXPECT_EQ(stats.read, 3);
  EXPECT_EQ(stats.kept, 2);
  EXPECT_EQ(stats.discarded, 1);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].size(), 1);
}

TEST(Vocabulary, ReservedIdsAndUnknowns) {
  Vocabulary v;
  EXPECT_EQ(v.size(), 2);
  const int dog = v.add("dog");
  EXPECT_EQ(v.add("dog"), dog);
  EXPECT_EQ(v.lookup("dog"), dog);
  EXPECT_EQ(v.lookup("cat"), Vocabulary::kUnk);

  auto train = parse_sexpr("(S (A dog) (B runs))");
  auto test = parse_sexpr("(S (A cat) (B runs))");
  Vocabulary grown;
  assign_ids(train, grown, true);
  assign_ids(test, grown, false);
  EXPECT_EQ(test[0].tokens[0].id, Vocabulary::kUnk);
  EXPECT_EQ(test[0].tokens[1].id, train[0].tokens[1].id);
  EXPECT_EQ(grown.size(), 4);
}

TEST(MaskAugment, ZeroProbabilityIsIdentity) {
  std::vector<int> ids = {5, 6, 7, 8, 9};
  EXPECT_EQ(mask_augment(ids, 0.0, 17), ids);
}

TEST(MaskAugment, RateConcentrates) {
  std::vector<int> ids(10000, 3);
  auto out = mask_augment(ids, 0.15, 99);
  const double frac = std::count(out.begin(), out.end(), Vocabulary::kMask) / 10000.0;
  EXPECT_NEAR(frac, 0.15, 0.02);
  for (int x : out) EXPECT_TRUE(x == 3 || x == Vocabulary::kMask);
}

TEST(MaskAugment, Deterministic) {
  std::vector<int> ids(64);
  std::iota(ids.begin(), ids.end(), 2);
  EXPECT_EQ(mask_augment(ids, 0.3, 5), mask_augment(ids, 0.3, 5));
  EXPECT_NE(mask_augment(ids, 0.3, 5), mask_augment(ids, 0.3, 6));
}

TEST(Collate, SmallCorpusFitsOneBatch) {
  std::vector<int> lengths = {5, 7};
  auto b = collate(lengths, 1024, 1);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].total_spans, 22);
  EXPECT_EQ(b[0].items.size(), 2u);
}

TEST(Collate, LongSentenceOverflowsBudget) {
  std::vector<int> lengths = {513};
  auto b = collate(lengths, 1024, 1);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].total_spans, 1025);
}

TEST(Collate, UnitBudgetGivesSingletons) {
  std::vector<int> lengths = {3, 1, 4, 1, 5};
  auto b = collate(lengths, 1, 2);
  ASSERT_EQ(b.size(), lengths.size());
  for (const auto& batch : b) EXPECT_EQ(batch.items.size(), 1u);
}

TEST(Collate, BatchesPartitionCorpusAndRespectBudget) {
  std::mt19937_64 rng(3);
  std::vector<int> lengths(300);
  for (int& n : lengths) n = 1 + static_cast<int>(uniform01(rng) * 30);
  for (int budget : {1, 17, 64, 256}) {
    auto batches = collate(lengths, budget, 11);
    std::vector<int> seen;
    for (size_t b = 0; b < batches.size(); ++b) {
      ASSERT_FALSE(batches[b].items.empty());
      int total = 0;
      for (int i : batches[b].items) {
        total += span_count(lengths[i]);
        seen.push_back(i);
      }
      EXPECT_EQ(total, batches[b].total_spans);
      if (b + 1 < batches.size()) EXPECT_GE(total, budget);
    }
    std::sort(seen.begin(), seen.end());
    std::vector<int> all(lengths.size());
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(seen, all);
  }
  EXPECT_EQ(collate(lengths, 64, 11)[0].items, collate(lengths, 64, 11)[0].items);
}

}  // namespace
}  // namespace hashparse
