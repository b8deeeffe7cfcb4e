#include "hashparse/brute_force.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hashparse::oracle {

namespace {

void check_length(int n) {
  if (n < 1 || n > kMaxBruteForceLength) {
    throw std::invalid_argument("brute force enumeration refused for n = " + std::to_string(n));
  }
}

std::vector<std::vector<Triple>> trees_over(int l, int r) {
  if (l == r) return {{}};
  std::vector<std::vector<Triple>> out;
  for (int m = l; m < r; ++m) {
    auto lefts = trees_over(l, m);
    auto rights = trees_over(m + 1, r);
    for (const auto& a : lefts) {
      for (const auto& b : rights) {
        std::vector<Triple> tree = {{l, r, m}};
        tree.insert(tree.end(), a.begin(), a.end());
        tree.insert(tree.end(), b.begin(), b.end());
        out.push_back(std::move(tree));
      }
    }
  }
  return out;
}

// log sum over all 2^K codes of exp(sum of g_k over bits coded +1), with an
// optional constraint that bit `fixed` is +1.
double code_log_mass(const double* g, int bits, int fixed = -1) {
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> values;
  for (unsigned code = 0; code < (1u << bits); ++code) {
    if (fixed >= 0 && !(code & (1u << fixed))) continue;
    double v = 0.0;
    for (int k = 0; k < bits; ++k)
      if (code & (1u << k)) v += g[k];
    values.push_back(v);
    top = std::max(top, v);
  }
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

double code_max(const double* g, int bits) {
  double best = -std::numeric_limits<double>::infinity();
  for (unsigned code = 0; code < (1u << bits); ++code) {
    double v = 0.0;
    for (int k = 0; k < bits; ++k)
      if (code & (1u << k)) v += g[k];
    best = std::max(best, v);
  }
  return best;
}

struct Enumeration {
  std::vector<std::vector<Triple>> trees;
  std::vector<double> log_mass;  // per tree, codes summed out
  double log_z = 0.0;
};

int triple_id(const TripleIndex& index, const Triple& t) { return index.index(t.left, t.right, t.split); }

Enumeration enumerate(const SpanScores& scores) {
  check_length(scores.n);
  Enumeration e;
  e.trees = enumerate_trees(scores.n);
  TripleIndex index(scores.n);
  double leaves = 0.0;
  for (int i = 0; i < scores.n; ++i) leaves += code_log_mass(&scores.leaf[static_cast<size_t>(i) * scores.bits], scores.bits);
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& tree : e.trees) {
    double m = leaves;
    for (const auto& t : tree) {
      m += code_log_mass(&scores.split[static_cast<size_t>(triple_id(index, t)) * scores.bits], scores.bits);
    }
    e.log_mass.push_back(m);
    top = std::max(top, m);
  }
  double acc = 0.0;
  for (double m : e.log_mass) acc += std::exp(m - top);
  e.log_z = top + std::log(acc);
  return e;
}

}  // namespace

std::vector<std::vector<Triple>> enumerate_trees(int n) {
  check_length(n);
  return trees_over(0, n - 1);
}

SpanScores naive_span_scores(const ScoreTable& table, Order order) {
  const int n = table.size(), bits = table.bits();
  TripleIndex index(n);
  SpanScores out{n, bits, std::vector<double>(static_cast<size_t>(index.size()) * bits),
                 std::vector<double>(static_cast<size_t>(n) * bits)};
  for (int t = 0; t < index.size(); ++t) {
    const Triple& tr = index[t];
    for (int k = 0; k < bits; ++k) {
      double v = 0.0;
      if (order == Order::zero) {
        v = table.score(k, tr.left, tr.right);
      } else {
        int count = 0;
        for (int i = tr.left; i <= tr.split; ++i) {
          for (int j = tr.split + 1; j <= tr.right; ++j) {
            v += table.score(k, i, j);
            ++count;
          }
        }
        v /= count;
      }
      out.split[static_cast<size_t>(t) * bits + k] = v;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < bits; ++k) out.leaf[static_cast<size_t>(i) * bits + k] = table.score(k, i, i);
  return out;
}

double brute_force_log_partition(const SpanScores& scores) { return enumerate(scores).log_z; }

double brute_force_log_partition(const ScoreTable& table, Order order) {
  return brute_force_log_partition(naive_span_scores(table, order));
}

double brute_force_split_marginal(const SpanScores& scores, int left, int right, int split) {
  Enumeration e = enumerate(scores);
  double acc = 0.0;
  for (size_t i = 0; i < e.trees.size(); ++i) {
    for (const auto& t : e.trees[i]) {
      if (t.left == left && t.right == right && t.split == split) {
        acc += std::exp(e.log_mass[i] - e.log_z);
        break;
      }
    }
  }
  return acc;
}

double brute_force_bit_marginal(const SpanScores& scores, int left, int right, int split, int k) {
  Enumeration e = enumerate(scores);
  TripleIndex index(scores.n);
  const double* g = &scores.split[static_cast<size_t>(index.index(left, right, split)) * scores.bits];
  double swap = code_log_mass(g, scores.bits, k) - code_log_mass(g, scores.bits);
  double acc = 0.0;
  for (size_t i = 0; i < e.trees.size(); ++i) {
    for (const auto& t : e.trees[i]) {
      if (t.left == left && t.right == right && t.split == split) {
        acc += std::exp(e.log_mass[i] + swap - e.log_z);
        break;
      }
    }
  }
  return acc;
}

double brute_force_leaf_bit_marginal(const SpanScores& scores, int position, int k) {
  Enumeration e = enumerate(scores);
  const double* g = &scores.leaf[static_cast<size_t>(position) * scores.bits];
  double swap = code_log_mass(g, scores.bits, k) - code_log_mass(g, scores.bits);
  double acc = 0.0;
  for (double m : e.log_mass) acc += std::exp(m + swap - e.log_z);
  return acc;
}

double brute_force_max(const SpanScores& scores) {
  check_length(scores.n);
  TripleIndex index(scores.n);
  double leaves = 0.0;
  for (int i = 0; i < scores.n; ++i) leaves += code_max(&scores.leaf[static_cast<size_t>(i) * scores.bits], scores.bits);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& tree : enumerate_trees(scores.n)) {
    double v = leaves;
    for (const auto& t : tree) v += code_max(&scores.split[static_cast<size_t>(triple_id(index, t)) * scores.bits], scores.bits);
    best = std::max(best, v);
  }
  return best;
}

}  // namespace hashparse::oracle
