#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hashparse/encoder.h"
#include "hashparse/types.h"

namespace hashparse {

// Overflow-safe log(1 + exp(x)).
inline double log1p_exp(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> values);

// A binary split of span [left, right] into [left, split] and [split+1, right].
struct Triple {
  int left = 0;
  int right = 0;
  int split = 0;
};

// Dense numbering of all split triples of an n-token sentence. Triples are
// grouped by width (right - left), then by left, then by split, so each width
// occupies a contiguous block.
class TripleIndex {
 public:
  explicit TripleIndex(int n);

  int sentence_length() const { return n_; }
  int size() const { return static_cast<int>(triples_.size()); }
  int index(int left, int right, int split) const {
    return span_offset_[static_cast<size_t>(left) * n_ + right] + (split - left);
  }
  // First triple of span [left, right].
  int span_begin(int left, int right) const { return span_offset_[static_cast<size_t>(left) * n_ + right]; }
  int width_begin(int width) const { return width_offset_[width]; }
  const Triple& operator[](int t) const { return triples_[t]; }
  const std::vector<Triple>& triples() const { return triples_; }

 private:
  int n_;
  std::vector<int> span_offset_;
  std::vector<int> width_offset_;
  std::vector<Triple> triples_;
};

// Per-bit scores for the +1 code of every split triple and every leaf. The -1
// code always scores 0.
struct SpanScores {
  int n = 0;
  int bits = 0;
  std::vector<double> split;  // TripleIndex(n).size() x bits
  std::vector<double> leaf;   // n x bits

  double split_score(int t, int k) const { return split[static_cast<size_t>(t) * bits + k]; }
  double leaf_score(int i, int k) const { return leaf[static_cast<size_t>(i) * bits + k]; }
};

// First order: rectangle means over the score table. Zero order: s[k][l][r]
// for every split of [l, r]. Leaves use the diagonal in both cases.
SpanScores first_order_span_scores(const ScoreTable& table);
SpanScores zero_order_span_scores(const ScoreTable& table);
SpanScores span_scores(const ScoreTable& table, Order order);

struct Chart {
  int n = 0;
  int bits = 0;
  std::vector<double> inside;  // n x n; -inf below the diagonal
  double log_partition = 0.0;
  // Filled by compute_marginals.
  std::vector<double> outside;            // n x n
  std::vector<double> split_marginal;     // per triple
  std::vector<double> bit_marginal_pos;   // triple x bits
  std::vector<double> bit_marginal_neg;   // triple x bits
  std::vector<double> leaf_marginal;      // per position
  std::vector<double> leaf_marginal_pos;  // position x bits
  std::vector<double> leaf_marginal_neg;  // position x bits

  double inside_at(int l, int r) const { return inside[static_cast<size_t>(l) * n + r]; }
  bool has_marginals() const { return !split_marginal.empty() || n == 1; }
};

// Sum over bits of log(1 + exp g) for each triple and leaf: the code mass a
// node contributes once its span and split are fixed.
std::vector<double> split_code_mass(const SpanScores& scores);
std::vector<double> leaf_code_mass(const SpanScores& scores);

// Inside pass by increasing width. The parallel variant spreads the spans of
// one width over OpenMP threads and keeps each reduction's order, so both
// produce bit-identical charts.
Chart inside(const SpanScores& scores, Execution execution = Execution::serial);

// Outside pass and all marginals; `chart` must come from inside().
void compute_marginals(const SpanScores& scores, Chart& chart);

Chart inside_outside(const SpanScores& scores, Execution execution = Execution::serial);

inline Chart inside_first(const ScoreTable& table) { return inside(first_order_span_scores(table)); }
inline Chart inside_zero(const ScoreTable& table) { return inside(zero_order_span_scores(table)); }

struct TreeNode {
  int left = 0;
  int right = 0;
  int split = -1;  // -1 for leaves
  Code code;

  bool is_leaf() const { return split < 0; }
};

struct BinaryTree {
  int n = 0;
  std::vector<TreeNode> nodes;  // pre-order, root first
  double score = 0.0;

  // Spans of the internal nodes plus the root, as a sorted list.
  std::vector<Span> spans() const;
  bool is_right_branching() const;
  bool is_left_branching() const;
};

// Max-sum decoding. Each node adds sum_k max(g_k, 0); bit k is +1 iff
// g_k > 0. Ties between split points go to the smallest split.
BinaryTree viterbi(const SpanScores& scores);

double tree_score(const SpanScores& scores, const BinaryTree& tree);

// Plain-text dump of inside values and the ten largest split marginals per
// span.
std::string dump_chart(const Chart& chart, std::span<const std::string> words);

}  // namespace hashparse
