#pragma once

#include <vector>

#include "hashparse/chart.h"
#include "hashparse/encoder.h"

// Exhaustive reference computations over all binary trees and all code
// assignments. Exponential in n; used by tests and `selfcheck` only.
namespace hashparse::oracle {

constexpr int kMaxBruteForceLength = 10;

// Every binary bracketing of n tokens, as its list of internal split triples.
std::vector<std::vector<Triple>> enumerate_trees(int n);

// Span scores computed by direct summation over the score table (no prefix
// sums).
SpanScores naive_span_scores(const ScoreTable& table, Order order);

double brute_force_log_partition(const SpanScores& scores);
double brute_force_log_partition(const ScoreTable& table, Order order);

// Probability that a tree contains split (left, right, split).
double brute_force_split_marginal(const SpanScores& scores, int left, int right, int split);
// Probability that a tree contains the split and codes bit k as +1.
double brute_force_bit_marginal(const SpanScores& scores, int left, int right, int split, int k);
double brute_force_leaf_bit_marginal(const SpanScores& scores, int position, int k);

// Best tree score over all trees and codes.
double brute_force_max(const SpanScores& scores);

}  // namespace hashparse::oracle
