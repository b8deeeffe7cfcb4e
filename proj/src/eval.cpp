#include "hashparse/eval.h"

#include <algorithm>
#include <functional>
#include <iomanip>
#include <sstream>

namespace hashparse {

namespace {

std::set<Span> nontrivial(const std::set<Span>& spans, int n) {
  std::set<Span> out;
  for (const Span& s : spans) {
    if (s.width() > 1 && !(s.left == 0 && s.right == n - 1)) out.insert(s);
  }
  return out;
}

}  // namespace

double sentence_f1(const std::set<Span>& predicted, const std::set<Span>& gold, int n) {
  auto p = nontrivial(predicted, n);
  auto g = nontrivial(gold, n);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  int overlap = 0;
  for (const Span& s : p) overlap += static_cast<int>(g.count(s));
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) / p.size();
  double recall = static_cast<double>(overlap) / g.size();
  return 2.0 * precision * recall / (precision + recall);
}

double sentence_f1(std::span<const Span> predicted, const std::set<Span>& gold, int n) {
  return sentence_f1(std::set<Span>(predicted.begin(), predicted.end()), gold, n);
}

std::set<Span> left_branching_spans(int n) {
  std::set<Span> out;
  for (int r = 1; r < n; ++r) out.insert({0, r});
  return out;
}

std::set<Span> right_branching_spans(int n) {
  std::set<Span> out;
  for (int l = 0; l + 1 < n; ++l) out.insert({l, n - 1});
  return out;
}

std::set<Span> oracle_spans(const GoldTree& gold) {
  const int n = gold.n;
  if (n > kOracleDpLimit) return right_factored_spans(gold);
  auto targets = nontrivial(gold.spans, n);
  std::vector<int> best(static_cast<size_t>(n) * n, 0), split(static_cast<size_t>(n) * n, -1);
  auto at = [n](int l, int r) { return static_cast<size_t>(l) * n + r; };
  for (int w = 1; w < n; ++w) {
    for (int l = 0; l + w < n; ++l) {
      const int r = l + w;
      int top = -1;
      for (int m = l; m < r; ++m) {
        int v = best[at(l, m)] + best[at(m + 1, r)];
        if (v > top) {
          top = v;
          split[at(l, r)] = m;
        }
      }
      best[at(l, r)] = top + static_cast<int>(targets.count({l, r}));
    }
  }
  std::set<Span> out;
  std::function<void(int, int)> walk = [&](int l, int r) {
    out.insert({l, r});
    if (l == r) return;
    int m = split[at(l, r)];
    walk(l, m);
    walk(m + 1, r);
  };
  walk(0, n - 1);
  return out;
}

std::set<Span> right_factored_spans(const GoldTree& gold) {
  const int n = gold.n;
  std::set<Span> out;
  // Children of a gold node: maximal gold spans strictly inside it, with
  // uncovered tokens as single-token children.
  std::function<void(Span)> expand = [&](Span node) {
    out.insert(node);
    if (node.width() == 1) return;
    std::vector<Span> children;
    int pos = node.left;
    while (pos <= node.right) {
      Span child{pos, pos};
      for (const Span& s : gold.spans) {
        if (s.left == pos && s.right <= node.right && s != node && s.width() > child.width()) child = s;
      }
      children.push_back(child);
      pos = child.right + 1;
    }
    for (size_t c = 0; c + 2 < children.size(); ++c) out.insert({children[c + 1].left, node.right});
    for (const Span& c : children) expand(c);
  };
  expand({0, n - 1});
  return out;
}

double F1Report::mean() const {
  if (sentence_f1.empty()) return 0.0;
  double acc = 0.0;
  for (double f : sentence_f1) acc += f;
  return acc / static_cast<double>(sentence_f1.size());
}

double F1Report::median() const {
  if (sentence_f1.empty()) return 0.0;
  std::vector<double> v = sentence_f1;
  std::sort(v.begin(), v.end());
  size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

Baselines baselines(std::span<const Sentence> sentences) {
  Baselines b{{"left_branching", {}, {}}, {"right_branching", {}, {}}, {"oracle", {}, {}}};
  for (const Sentence& s : sentences) {
    const int n = s.size();
    for (F1Report* r : {&b.left, &b.right, &b.oracle}) r->lengths.push_back(n);
    b.left.sentence_f1.push_back(sentence_f1(left_branching_spans(n), s.gold.spans, n));
    b.right.sentence_f1.push_back(sentence_f1(right_branching_spans(n), s.gold.spans, n));
    b.oracle.sentence_f1.push_back(sentence_f1(oracle_spans(s.gold), s.gold.spans, n));
  }
  return b;
}

BinaryTree parse_sentence(const EncoderParams& params, std::span<const int> ids, Order order) {
  HiddenStates h = encode(ids, params, 0);
  return viterbi(span_scores(zero_order_scores(h, params), order));
}

Evaluation evaluate(const EncoderParams& params, std::span<const Sentence> sentences, Order order,
                    Execution execution) {
  EncoderParams frozen = params;
  frozen.dropout_rate = 0.0;
  frozen.check_finite();
  const int count = static_cast<int>(sentences.size());
  Evaluation e;
  e.report.name = "model";
  e.trees.resize(count);
  e.report.sentence_f1.resize(count);
  e.report.lengths.resize(count);
  auto one = [&](int i) {
    const Sentence& s = sentences[i];
    auto ids = s.ids();
    e.trees[i] = parse_sentence(frozen, ids, order);
    auto spans = e.trees[i].spans();
    e.report.sentence_f1[i] = sentence_f1(spans, s.gold.spans, s.size());
    e.report.lengths[i] = s.size();
  };
  if (execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) one(i);
  } else {
    for (int i = 0; i < count; ++i) one(i);
  }
  return e;
}

std::string format_report(const F1Report& report, const Baselines* baselines) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  out << "sentence\tlength\tf1\n";
  for (size_t i = 0; i < report.sentence_f1.size(); ++i) {
    out << i << "\t" << (i < report.lengths.size() ? report.lengths[i] : 0) << "\t" << report.sentence_f1[i] << "\n";
  }
  out << "# sentences\t" << report.sentence_f1.size() << "\n";
  out << "# mean\t" << report.mean() << "\n";
  out << "# median\t" << report.median() << "\n";
  if (baselines) {
    for (const F1Report* b : {&baselines->left, &baselines->right, &baselines->oracle}) {
      out << "# " << b->name << "\t" << b->mean() << "\n";
      out << "# delta_" << b->name << "\t" << report.mean() - b->mean() << "\n";
    }
  }
  return out.str();
}

}  // namespace hashparse
