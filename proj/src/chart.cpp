#include "hashparse/chart.h"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hashparse {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

TripleIndex::TripleIndex(int n) : n_(n), span_offset_(static_cast<size_t>(n) * n, -1), width_offset_(n + 1, 0) {
  if (n < 1) throw std::invalid_argument("sentence length must be at least 1");
  for (int w = 1; w < n; ++w) {
    width_offset_[w] = static_cast<int>(triples_.size());
    for (int l = 0; l + w < n; ++l) {
      int r = l + w;
      span_offset_[static_cast<size_t>(l) * n + r] = static_cast<int>(triples_.size());
      for (int m = l; m < r; ++m) triples_.push_back({l, r, m});
    }
  }
  width_offset_[0] = 0;
  width_offset_[n] = static_cast<int>(triples_.size());
}

SpanScores first_order_span_scores(const ScoreTable& table) {
  const int n = table.size(), bits = table.bits();
  TripleIndex index(n);
  SpanScores out{n, bits, std::vector<double>(static_cast<size_t>(index.size()) * bits),
                 std::vector<double>(static_cast<size_t>(n) * bits)};
  for (int t = 0; t < index.size(); ++t) {
    const Triple& tr = index[t];
    for (int k = 0; k < bits; ++k) {
      out.split[static_cast<size_t>(t) * bits + k] = first_order_score(table, k, tr.left, tr.right, tr.split);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < bits; ++k) out.leaf[static_cast<size_t>(i) * bits + k] = leaf_score(table, k, i);
  return out;
}

SpanScores zero_order_span_scores(const ScoreTable& table) {
  const int n = table.size(), bits = table.bits();
  TripleIndex index(n);
  SpanScores out{n, bits, std::vector<double>(static_cast<size_t>(index.size()) * bits),
                 std::vector<double>(static_cast<size_t>(n) * bits)};
  for (int t = 0; t < index.size(); ++t) {
    const Triple& tr = index[t];
    for (int k = 0; k < bits; ++k) out.split[static_cast<size_t>(t) * bits + k] = table.score(k, tr.left, tr.right);
  }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < bits; ++k) out.leaf[static_cast<size_t>(i) * bits + k] = leaf_score(table, k, i);
  return out;
}

SpanScores span_scores(const ScoreTable& table, Order order) {
  return order == Order::first ? first_order_span_scores(table) : zero_order_span_scores(table);
}

std::vector<double> split_code_mass(const SpanScores& scores) {
  size_t count = scores.split.size() / std::max(scores.bits, 1);
  std::vector<double> mass(count, 0.0);
  for (size_t t = 0; t < count; ++t) {
    double acc = 0.0;
    for (int k = 0; k < scores.bits; ++k) acc += log1p_exp(scores.split[t * scores.bits + k]);
    mass[t] = acc;
  }
  return mass;
}

std::vector<double> leaf_code_mass(const SpanScores& scores) {
  std::vector<double> mass(scores.n, 0.0);
  for (int i = 0; i < scores.n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < scores.bits; ++k) acc += log1p_exp(scores.leaf_score(i, k));
    mass[i] = acc;
  }
  return mass;
}

namespace {

// inside[l][r] for one span; terms visited in increasing split order.
double inside_cell(const TripleIndex& index, const std::vector<double>& mass, const std::vector<double>& in,
                   int n, int l, int r, std::vector<double>& terms) {
  terms.clear();
  int base = index.span_begin(l, r);
  for (int m = l; m < r; ++m) {
    terms.push_back(in[static_cast<size_t>(l) * n + m] + in[static_cast<size_t>(m + 1) * n + r] + mass[base + (m - l)]);
  }
  return log_sum_exp(terms);
}

}  // namespace

Chart inside(const SpanScores& scores, Execution execution) {
  const int n = scores.n;
  TripleIndex index(n);
  Chart chart;
  chart.n = n;
  chart.bits = scores.bits;
  chart.inside.assign(static_cast<size_t>(n) * n, kNegInf);
  auto mass = split_code_mass(scores);
  auto leaf_mass = leaf_code_mass(scores);
  for (int i = 0; i < n; ++i) chart.inside[static_cast<size_t>(i) * n + i] = leaf_mass[i];
  for (int w = 1; w < n; ++w) {
    const int spans = n - w;
    if (execution == Execution::parallel) {
#pragma omp parallel
      {
        std::vector<double> terms;
        terms.reserve(w);
#pragma omp for schedule(static)
        for (int l = 0; l < spans; ++l) {
          chart.inside[static_cast<size_t>(l) * n + l + w] = inside_cell(index, mass, chart.inside, n, l, l + w, terms);
        }
      }
    } else {
      std::vector<double> terms;
      for (int l = 0; l < spans; ++l) {
        chart.inside[static_cast<size_t>(l) * n + l + w] = inside_cell(index, mass, chart.inside, n, l, l + w, terms);
      }
    }
  }
  chart.log_partition = chart.inside[n - 1];
  return chart;
}

void compute_marginals(const SpanScores& scores, Chart& chart) {
  const int n = scores.n, bits = scores.bits;
  TripleIndex index(n);
  auto mass = split_code_mass(scores);
  const auto& in = chart.inside;
  auto in_at = [&](int l, int r) { return in[static_cast<size_t>(l) * n + r]; };
  chart.outside.assign(static_cast<size_t>(n) * n, kNegInf);
  auto out_at = [&](int l, int r) -> double& { return chart.outside[static_cast<size_t>(l) * n + r]; };
  out_at(0, n - 1) = 0.0;
  std::vector<double> terms;
  for (int w = n - 2; w >= 0; --w) {
    for (int l = 0; l + w < n; ++l) {
      const int r = l + w;
      terms.clear();
      // [l, r] as a left child of [l, rr], split at r
      for (int rr = r + 1; rr < n; ++rr) {
        terms.push_back(out_at(l, rr) + in_at(r + 1, rr) + mass[index.index(l, rr, r)]);
      }
      // [l, r] as a right child of [ll, r], split at l - 1
      for (int ll = 0; ll < l; ++ll) {
        terms.push_back(out_at(ll, r) + in_at(ll, l - 1) + mass[index.index(ll, r, l - 1)]);
      }
      out_at(l, r) = log_sum_exp(terms);
    }
  }
  const double log_z = chart.log_partition;
  const int count = index.size();
  chart.split_marginal.assign(count, 0.0);
  chart.bit_marginal_pos.assign(static_cast<size_t>(count) * bits, 0.0);
  chart.bit_marginal_neg.assign(static_cast<size_t>(count) * bits, 0.0);
  for (int t = 0; t < count; ++t) {
    const Triple& tr = index[t];
    // Rounding can push a certain node a few ulps past 1.
    double mu = std::min(1.0, std::exp(out_at(tr.left, tr.right) + in_at(tr.left, tr.split) +
                                       in_at(tr.split + 1, tr.right) + mass[t] - log_z));
    chart.split_marginal[t] = mu;
    for (int k = 0; k < bits; ++k) {
      double g = scores.split_score(t, k);
      chart.bit_marginal_pos[static_cast<size_t>(t) * bits + k] = mu * logistic(g);
      chart.bit_marginal_neg[static_cast<size_t>(t) * bits + k] = mu * logistic(-g);
    }
  }
  chart.leaf_marginal.assign(n, 0.0);
  chart.leaf_marginal_pos.assign(static_cast<size_t>(n) * bits, 0.0);
  chart.leaf_marginal_neg.assign(static_cast<size_t>(n) * bits, 0.0);
  for (int i = 0; i < n; ++i) {
    double mu = std::min(1.0, std::exp(out_at(i, i) + in_at(i, i) - log_z));
    chart.leaf_marginal[i] = mu;
    for (int k = 0; k < bits; ++k) {
      double g = scores.leaf_score(i, k);
      chart.leaf_marginal_pos[static_cast<size_t>(i) * bits + k] = mu * logistic(g);
      chart.leaf_marginal_neg[static_cast<size_t>(i) * bits + k] = mu * logistic(-g);
    }
  }
}

Chart inside_outside(const SpanScores& scores, Execution execution) {
  Chart chart = inside(scores, execution);
  compute_marginals(scores, chart);
  return chart;
}

std::vector<Span> BinaryTree::spans() const {
  std::vector<Span> out;
  for (const auto& node : nodes) {
    if (!node.is_leaf() || (node.left == 0 && node.right == n - 1)) out.push_back({node.left, node.right});
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool BinaryTree::is_right_branching() const {
  return std::all_of(nodes.begin(), nodes.end(), [](const TreeNode& t) { return t.is_leaf() || t.split == t.left; });
}

bool BinaryTree::is_left_branching() const {
  return std::all_of(nodes.begin(), nodes.end(),
                     [](const TreeNode& t) { return t.is_leaf() || t.split == t.right - 1; });
}

namespace {

Code sign_code(const SpanScores& scores, int t, bool leaf) {
  Code code(scores.bits);
  for (int k = 0; k < scores.bits; ++k) {
    double g = leaf ? scores.leaf_score(t, k) : scores.split_score(t, k);
    code[k] = g > 0.0 ? 1 : -1;
  }
  return code;
}

double positive_part_sum(const SpanScores& scores, int t, bool leaf) {
  double acc = 0.0;
  for (int k = 0; k < scores.bits; ++k) acc += std::max(leaf ? scores.leaf_score(t, k) : scores.split_score(t, k), 0.0);
  return acc;
}

}  // namespace

BinaryTree viterbi(const SpanScores& scores) {
  const int n = scores.n;
  TripleIndex index(n);
  std::vector<double> best(static_cast<size_t>(n) * n, kNegInf);
  std::vector<int> back(static_cast<size_t>(n) * n, -1);
  for (int i = 0; i < n; ++i) best[static_cast<size_t>(i) * n + i] = positive_part_sum(scores, i, true);
  for (int w = 1; w < n; ++w) {
    for (int l = 0; l + w < n; ++l) {
      const int r = l + w;
      double top = kNegInf;
      int arg = -1;
      for (int m = l; m < r; ++m) {
        double v = best[static_cast<size_t>(l) * n + m] + best[static_cast<size_t>(m + 1) * n + r] +
                   positive_part_sum(scores, index.index(l, r, m), false);
        if (v > top) {
          top = v;
          arg = m;
        }
      }
      best[static_cast<size_t>(l) * n + r] = top;
      back[static_cast<size_t>(l) * n + r] = arg;
    }
  }
  BinaryTree tree;
  tree.n = n;
  tree.score = best[n - 1];
  std::vector<Span> stack = {{0, n - 1}};
  while (!stack.empty()) {
    Span s = stack.back();
    stack.pop_back();
    if (s.left == s.right) {
      tree.nodes.push_back({s.left, s.right, -1, sign_code(scores, s.left, true)});
      continue;
    }
    int m = back[static_cast<size_t>(s.left) * n + s.right];
    tree.nodes.push_back({s.left, s.right, m, sign_code(scores, index.index(s.left, s.right, m), false)});
    stack.push_back({m + 1, s.right});
    stack.push_back({s.left, m});
  }
  return tree;
}

double tree_score(const SpanScores& scores, const BinaryTree& tree) {
  TripleIndex index(scores.n);
  double total = 0.0;
  for (const auto& node : tree.nodes) {
    for (int k = 0; k < scores.bits; ++k) {
      if (node.code[k] < 0) continue;
      total += node.is_leaf() ? scores.leaf_score(node.left, k)
                              : scores.split_score(index.index(node.left, node.right, node.split), k);
    }
  }
  return total;
}

std::string dump_chart(const Chart& chart, std::span<const std::string> words) {
  const int n = chart.n;
  TripleIndex index(n);
  std::ostringstream out;
  out << std::setprecision(6);
  out << "logZ\t" << chart.log_partition << "\n";
  for (int w = n - 1; w >= 0; --w) {
    for (int l = 0; l + w < n; ++l) {
      const int r = l + w;
      out << "span\t" << l << "\t" << r << "\tinside=" << chart.inside_at(l, r);
      if (!chart.outside.empty()) out << "\toutside=" << chart.outside[static_cast<size_t>(l) * n + r];
      if (w == 0) {
        if (static_cast<int>(words.size()) > l) out << "\tword=" << words[l];
        if (!chart.leaf_marginal.empty()) out << "\tmarginal=" << chart.leaf_marginal[l];
        out << "\n";
        continue;
      }
      out << "\n";
      if (chart.split_marginal.empty()) continue;
      std::vector<int> splits(w);
      std::iota(splits.begin(), splits.end(), l);
      auto mu = [&](int m) { return chart.split_marginal[index.index(l, r, m)]; };
      std::stable_sort(splits.begin(), splits.end(), [&](int a, int b) { return mu(a) > mu(b); });
      if (splits.size() > 10) splits.resize(10);
      for (int m : splits) out << "\tsplit\t" << m << "\t" << mu(m) << "\n";
    }
  }
  return out.str();
}

}  // namespace hashparse
