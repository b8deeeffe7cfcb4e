#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hashparse/chart.h"
#include "hashparse/encoder.h"
#include "hashparse/grad.h"

namespace hashparse {

// Tape nodes for the chart of one sentence. Inside and outside values are
// held as one column vector per span width, indexed by left boundary.
struct ChartVars {
  int n = 0;
  int bits = 0;
  grad::Var split_scores;  // triples x K, TripleIndex order
  grad::Var leaf_scores;   // n x K
  grad::Var split_mass;    // triples x 1
  grad::Var leaf_mass;     // n x 1
  std::vector<grad::Var> inside;   // by width, (n - w) x 1
  std::vector<grad::Var> outside;  // by width, (n - w) x 1
  grad::Var log_partition;
  grad::Var split_marginal;  // triples x 1
  grad::Var bit_pos;         // triples x K
  grad::Var bit_neg;         // triples x K
  grad::Var leaf_marginal;   // n x 1
  grad::Var leaf_pos;        // n x K
  grad::Var leaf_neg;        // n x K
};

// Records inside, outside and all marginals on `tape` from per-bit split and
// leaf scores. Every quantity stays differentiable.
ChartVars record_chart(grad::Tape& tape, grad::Var split_scores, grad::Var leaf_scores, int n, int bits);

// Differentiable forward computation for one view of one sentence: encoder,
// hash layer, first- or zero-order span scores, and the chart.
class SentenceGraph {
 public:
  SentenceGraph(std::span<const int> ids, const EncoderParams& params, uint64_t view_seed, Order order);
  // Hidden states supplied from outside; only the hash layer is trained.
  SentenceGraph(const HiddenStates& hidden, const EncoderParams& params, Order order);

  SentenceGraph(SentenceGraph&&) = default;
  SentenceGraph& operator=(SentenceGraph&&) = default;

  int size() const { return chart_.n; }
  int bits() const { return chart_.bits; }
  double log_partition() const { return tape_.scalar(chart_.log_partition); }
  const ChartVars& chart_vars() const { return chart_; }
  grad::Tape& tape() { return tape_; }
  const grad::Tape& tape() const { return tape_; }

  // Current values as plain chart structures.
  SpanScores span_scores() const;
  Chart chart() const;
  BinaryTree decode() const { return viterbi(span_scores()); }

  // Gathers [mu+ | mu-] (I x 2K) at the nodes of `tree`, which must cover a
  // sentence of the same length. Leaves read the leaf marginals.
  grad::Var select(const BinaryTree& tree);

  // Reverse pass seeded with d(loss)/d(node), then adds the parameter
  // gradients into `flat`, laid out like EncoderParams::values.
  void backward(std::span<const std::pair<grad::Var, std::vector<double>>> seeds);
  void accumulate_gradient(std::span<double> flat) const;

 private:
  void record_scores(grad::Var hidden, const EncoderParams& params, Order order);
  grad::Var param(const EncoderParams& params, const std::string& name);

  grad::Tape tape_;
  std::vector<std::pair<ParamBlock, grad::Var>> params_;
  ChartVars chart_;
};

}  // namespace hashparse
