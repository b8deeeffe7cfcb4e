#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "hashparse/chart.h"
#include "hashparse/encoder.h"
#include "hashparse/treebank.h"

namespace hashparse {

// Unlabeled F1 after dropping width-1 spans and the whole-sentence span.
// Both filtered sets empty gives 1; exactly one empty gives 0.
double sentence_f1(const std::set<Span>& predicted, const std::set<Span>& gold, int n);
double sentence_f1(std::span<const Span> predicted, const std::set<Span>& gold, int n);

std::set<Span> left_branching_spans(int n);
std::set<Span> right_branching_spans(int n);

// Spans of a binary tree agreeing with as many non-trivial gold spans as
// possible. Exact dynamic program up to kOracleDpLimit tokens, right-factored
// binarization of the gold tree beyond.
constexpr int kOracleDpLimit = 40;
std::set<Span> oracle_spans(const GoldTree& gold);
std::set<Span> right_factored_spans(const GoldTree& gold);

struct F1Report {
  std::string name;
  std::vector<double> sentence_f1;
  std::vector<int> lengths;

  double mean() const;
  double median() const;
};

struct Baselines {
  F1Report left;
  F1Report right;
  F1Report oracle;
};
Baselines baselines(std::span<const Sentence> sentences);

struct Evaluation {
  F1Report report;
  std::vector<BinaryTree> trees;
};

// Decodes every sentence with dropout and masking disabled.
Evaluation evaluate(const EncoderParams& params, std::span<const Sentence> sentences, Order order = Order::first,
                    Execution execution = Execution::serial);
BinaryTree parse_sentence(const EncoderParams& params, std::span<const int> ids, Order order = Order::first);

// Tab-separated rows "index length f1" followed by a summary block of
// "# key value" lines.
std::string format_report(const F1Report& report, const Baselines* baselines = nullptr);

}  // namespace hashparse
