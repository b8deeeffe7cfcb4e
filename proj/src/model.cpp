#include "hashparse/model.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hashparse {

using grad::Ref;
using grad::Tape;
using grad::Var;

ChartVars record_chart(Tape& tape, Var split_scores, Var leaf_scores, int n, int bits) {
  if (n < 1) throw std::invalid_argument("chart needs at least one token");
  TripleIndex index(n);
  const int count = index.size();
  ChartVars c;
  c.n = n;
  c.bits = bits;
  c.split_scores = split_scores;
  c.leaf_scores = leaf_scores;
  c.split_mass = tape.row_sum(tape.log1p_exp(split_scores));
  c.leaf_mass = tape.row_sum(tape.log1p_exp(leaf_scores));

  // Gather sources: inside by width, then outside by width, then split mass.
  c.inside.assign(n, Var{});
  c.outside.assign(n, Var{});
  c.inside[0] = c.leaf_mass;
  const int mass_source = 2 * n;
  auto sources = [&] {
    std::vector<Var> s(c.inside);
    s.insert(s.end(), c.outside.begin(), c.outside.end());
    s.push_back(c.split_mass);
    return s;
  };
  auto in_ref = [](int l, int r) { return Ref{r - l, l}; };
  auto out_ref = [n](int l, int r) { return Ref{n + (r - l), l}; };

  for (int w = 1; w < n; ++w) {
    const int begin = index.width_begin(w), end = index.width_begin(w + 1);
    std::vector<Ref> refs;
    refs.reserve(static_cast<size_t>(end - begin) * 3);
    for (int t = begin; t < end; ++t) {
      const Triple& tr = index[t];
      refs.push_back(in_ref(tr.left, tr.split));
      refs.push_back(in_ref(tr.split + 1, tr.right));
      refs.push_back({mass_source, t});
    }
    Var terms = tape.row_sum(tape.gather(sources(), std::move(refs), end - begin, 3));
    std::vector<int> offsets;
    for (int s = 0; s <= n - w; ++s) offsets.push_back(s * w);
    c.inside[w] = tape.segment_log_sum_exp(terms, std::move(offsets));
  }
  c.log_partition = c.inside[n - 1];

  c.outside[n - 1] = tape.constant({0.0}, 1, 1);
  for (int w = n - 2; w >= 0; --w) {
    std::vector<Ref> refs;
    std::vector<int> offsets = {0};
    for (int l = 0; l + w < n; ++l) {
      const int r = l + w;
      for (int rr = r + 1; rr < n; ++rr) {
        refs.push_back(out_ref(l, rr));
        refs.push_back(in_ref(r + 1, rr));
        refs.push_back({mass_source, index.index(l, rr, r)});
      }
      for (int ll = 0; ll < l; ++ll) {
        refs.push_back(out_ref(ll, r));
        refs.push_back(in_ref(ll, l - 1));
        refs.push_back({mass_source, index.index(ll, r, l - 1)});
      }
      offsets.push_back(static_cast<int>(refs.size() / 3));
    }
    const int rows = offsets.back();
    Var terms = tape.row_sum(tape.gather(sources(), std::move(refs), rows, 3));
    c.outside[w] = tape.segment_log_sum_exp(terms, std::move(offsets));
  }

  auto broadcast = [&](Var v, int rows, int cols, bool by_row) {
    std::vector<int> idx(static_cast<size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) idx[static_cast<size_t>(i) * cols + k] = by_row ? i : 0;
    return tape.gather(v, std::move(idx), rows, cols);
  };

  {
    std::vector<Ref> refs;
    refs.reserve(static_cast<size_t>(count) * 4);
    for (int t = 0; t < count; ++t) {
      const Triple& tr = index[t];
      refs.push_back(out_ref(tr.left, tr.right));
      refs.push_back(in_ref(tr.left, tr.split));
      refs.push_back(in_ref(tr.split + 1, tr.right));
      refs.push_back({mass_source, t});
    }
    Var sum = tape.row_sum(tape.gather(sources(), std::move(refs), count, 4));
    c.split_marginal = tape.exp(tape.subtract(sum, broadcast(c.log_partition, count, 1, false)));
    Var mu = broadcast(c.split_marginal, count, bits, true);
    c.bit_pos = tape.multiply(mu, tape.logistic(split_scores));
    c.bit_neg = tape.multiply(mu, tape.logistic(tape.negate(split_scores)));
  }
  {
    std::vector<Ref> refs;
    for (int i = 0; i < n; ++i) {
      refs.push_back(out_ref(i, i));
      refs.push_back(in_ref(i, i));
    }
    Var sum = tape.row_sum(tape.gather(sources(), std::move(refs), n, 2));
    c.leaf_marginal = tape.exp(tape.subtract(sum, broadcast(c.log_partition, n, 1, false)));
    Var mu = broadcast(c.leaf_marginal, n, bits, true);
    c.leaf_pos = tape.multiply(mu, tape.logistic(leaf_scores));
    c.leaf_neg = tape.multiply(mu, tape.logistic(tape.negate(leaf_scores)));
  }
  return c;
}

Var SentenceGraph::param(const EncoderParams& params, const std::string& name) {
  ParamBlock b = params.block(name);
  Var v = tape_.parameter(name, params.view(b), b.rows, b.cols);
  params_.emplace_back(std::move(b), v);
  return v;
}

SentenceGraph::SentenceGraph(std::span<const int> ids, const EncoderParams& params, uint64_t view_seed,
                             Order order) {
  params.check_finite();
  const int n = static_cast<int>(ids.size());
  const int d = params.dims.dim;
  if (n < 1) throw std::invalid_argument("cannot encode an empty sentence");
  std::vector<int> rows(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= params.dims.vocab_size) {
      throw std::out_of_range("token id outside vocabulary: " + std::to_string(ids[i]));
    }
    for (int t = 0; t < d; ++t) rows[static_cast<size_t>(i) * d + t] = ids[i] * d + t;
  }
  Var h = tape_.gather(param(params, "embedding"), std::move(rows), n, d);
  auto dropout = [&](Var x, int stage) {
    if (params.dropout_rate <= 0.0) return x;
    return tape_.multiply(x, tape_.constant(dropout_mask(static_cast<size_t>(n) * d, params.dropout_rate, view_seed, stage), n, d));
  };
  h = dropout(h, 0);
  const int w = params.dims.window;
  std::vector<Var> shifts;
  for (int t = 0; t <= 2 * w && params.dims.layers > 0; ++t) {
    shifts.push_back(t == w ? Var{} : tape_.constant(shift_matrix(n, t - w), n, n));
  }
  for (int l = 0; l < params.dims.layers; ++l) {
    Var pre;
    for (int t = 0; t <= 2 * w; ++t) {
      Var x = tape_.matmul_nt(h, param(params, "layer" + std::to_string(l) + ".tap" + std::to_string(t)));
      if (t != w) x = tape_.matmul(shifts[t], x);
      pre = t == 0 ? x : tape_.add(pre, x);
    }
    Var u = tape_.tanh(tape_.add_row(pre, param(params, "layer" + std::to_string(l) + ".bias")));
    h = dropout(tape_.add(h, u), l + 1);
  }
  record_scores(h, params, order);
}

SentenceGraph::SentenceGraph(const HiddenStates& hidden, const EncoderParams& params, Order order) {
  params.check_finite();
  if (hidden.d != params.dims.dim) {
    throw std::invalid_argument("hidden size " + std::to_string(hidden.d) + " does not match model dimension " +
                                std::to_string(params.dims.dim));
  }
  if (hidden.n < 1) throw std::invalid_argument("cannot score an empty sentence");
  record_scores(tape_.constant(hidden.h, hidden.n, hidden.d), params, order);
}

void SentenceGraph::record_scores(Var hidden, const EncoderParams& params, Order order) {
  const int n = tape_.rows(hidden);
  const int bits = params.dims.bits;
  const int dk = params.dims.head_dim();
  Var q = tape_.matmul_nt(hidden, param(params, "hash.query"));
  Var k = tape_.matmul_nt(hidden, param(params, "hash.key"));
  Var s = tape_.head_product(q, k, bits, 1.0 / std::sqrt(static_cast<double>(dk)));

  TripleIndex index(n);
  const size_t plane = static_cast<size_t>(n) * n;
  Var split;
  if (order == Order::first) {
    std::vector<grad::Rect> rects;
    rects.reserve(index.size());
    for (const Triple& t : index.triples()) rects.push_back({t.left, t.split, t.split + 1, t.right});
    split = tape_.rectangle_mean(tape_.prefix_sum_2d(s, n), n, std::move(rects));
  } else {
    std::vector<int> idx(static_cast<size_t>(index.size()) * bits);
    for (int t = 0; t < index.size(); ++t)
      for (int b = 0; b < bits; ++b) idx[static_cast<size_t>(t) * bits + b] = static_cast<int>(b * plane + index[t].left * n + index[t].right);
    split = tape_.gather(s, std::move(idx), index.size(), bits);
  }
  std::vector<int> diag(static_cast<size_t>(n) * bits);
  for (int i = 0; i < n; ++i)
    for (int b = 0; b < bits; ++b) diag[static_cast<size_t>(i) * bits + b] = static_cast<int>(b * plane + i * n + i);
  Var leaf = tape_.gather(s, std::move(diag), n, bits);
  chart_ = record_chart(tape_, split, leaf, n, bits);
}

SpanScores SentenceGraph::span_scores() const {
  auto split = tape_.value(chart_.split_scores);
  auto leaf = tape_.value(chart_.leaf_scores);
  return SpanScores{chart_.n, chart_.bits, {split.begin(), split.end()}, {leaf.begin(), leaf.end()}};
}

Chart SentenceGraph::chart() const {
  const int n = chart_.n;
  Chart c;
  c.n = n;
  c.bits = chart_.bits;
  c.inside.assign(static_cast<size_t>(n) * n, -std::numeric_limits<double>::infinity());
  c.outside.assign(static_cast<size_t>(n) * n, -std::numeric_limits<double>::infinity());
  for (int w = 0; w < n; ++w) {
    auto in = tape_.value(chart_.inside[w]);
    auto out = tape_.value(chart_.outside[w]);
    for (int l = 0; l + w < n; ++l) {
      c.inside[static_cast<size_t>(l) * n + l + w] = in[l];
      c.outside[static_cast<size_t>(l) * n + l + w] = out[l];
    }
  }
  c.log_partition = log_partition();
  auto copy = [&](Var v) {
    auto x = tape_.value(v);
    return std::vector<double>(x.begin(), x.end());
  };
  c.split_marginal = copy(chart_.split_marginal);
  c.bit_marginal_pos = copy(chart_.bit_pos);
  c.bit_marginal_neg = copy(chart_.bit_neg);
  c.leaf_marginal = copy(chart_.leaf_marginal);
  c.leaf_marginal_pos = copy(chart_.leaf_pos);
  c.leaf_marginal_neg = copy(chart_.leaf_neg);
  return c;
}

Var SentenceGraph::select(const BinaryTree& tree) {
  const int n = chart_.n, bits = chart_.bits;
  if (tree.n != n) throw std::invalid_argument("selection tree covers a sentence of different length");
  TripleIndex index(n);
  std::vector<Var> sources = {chart_.bit_pos, chart_.bit_neg, chart_.leaf_pos, chart_.leaf_neg};
  std::vector<Ref> refs;
  refs.reserve(tree.nodes.size() * 2 * bits);
  for (const TreeNode& node : tree.nodes) {
    const bool leaf = node.is_leaf();
    const int row = leaf ? node.left : index.index(node.left, node.right, node.split);
    for (int side = 0; side < 2; ++side)
      for (int k = 0; k < bits; ++k) refs.push_back({(leaf ? 2 : 0) + side, row * bits + k});
  }
  return tape_.gather(std::move(sources), std::move(refs), static_cast<int>(tree.nodes.size()), 2 * bits);
}

void SentenceGraph::backward(std::span<const std::pair<Var, std::vector<double>>> seeds) { tape_.backward(seeds); }

void SentenceGraph::accumulate_gradient(std::span<double> flat) const {
  for (const auto& [block, var] : params_) {
    auto g = tape_.gradient(var);
    if (g.empty()) continue;
    if (block.offset + g.size() > flat.size()) throw std::invalid_argument("gradient buffer too small");
    for (size_t i = 0; i < g.size(); ++i) flat[block.offset + i] += g[i];
  }
}

}  // namespace hashparse
