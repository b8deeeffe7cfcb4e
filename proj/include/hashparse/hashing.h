#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hashparse/chart.h"
#include "hashparse/grad.h"

namespace hashparse {

// Set the negative (uniformity) term takes its smooth maximum over.
enum class NegativeSet {
  all,           // N and P
  self,          // N and the anchor's own column
  balanced_min,  // N and the balanced smooth minimum of P
};

// Similarity the positive (alignment) term pulls up.
enum class PositiveSet {
  self,  // the anchor's own column
  max,   // smooth maximum over P
  min,   // smooth minimum over P
  mean,  // arithmetic mean over P
};

struct LossSpec {
  NegativeSet negative = NegativeSet::balanced_min;
  PositiveSet positive = PositiveSet::min;

  // Accepts the six named objectives (self, sup, hash, max, min, bmin) or an
  // explicit "<negative>/<positive>" pair such as "all/max".
  static LossSpec parse(const std::string& text);
  static LossSpec named(const std::string& name) { return parse(name); }
  // The named objective for this pair, or "<negative>/<positive>".
  std::string name() const;
  bool uses_positives() const { return negative == NegativeSet::balanced_min || positive != PositiveSet::self; }

  bool operator==(const LossSpec&) const = default;
};

std::vector<std::string> named_losses();
// The 3 x 3 grid of negative sets {all, self, bmin} and positives {self, max, min}.
std::vector<LossSpec> loss_grid();

const char* to_string(NegativeSet s);
const char* to_string(PositiveSet s);

double smooth_max(std::span<const double> values);
double smooth_min(std::span<const double> values);
// -log(mean(exp(-x))); equals smooth_min + log|values|.
double smooth_min_balanced(std::span<const double> values);

// Code of a decoded node read from the chart's marginals: bit k is +1 iff
// mu_k(+1) > mu_k(-1).
Code binarize(const Chart& chart, const TreeNode& node);

// (1/K) sum_k mu_k(node, code_k) under `chart`.
double similarity(const Chart& chart, const TreeNode& node, const Code& code);

struct Instance {
  int sentence = 0;
  TreeNode node;
  std::vector<int> key;  // unmasked token ids under the node's span
};

// Column indices j whose key equals the anchor's (P) and the rest (N). The
// anchor's cross-view copy is a column and lands in P.
struct Partition {
  std::vector<int> positives;
  std::vector<int> negatives;
};
Partition partition(std::span<const int> key_ids, int anchor);

// Maps each distinct key to a dense id in first-seen order.
std::vector<int> key_ids(std::span<const std::vector<int>> keys);

// Loss for one anchor from its similarities to every column (unscaled);
// nullopt if the loss needs positives and P is empty.
std::optional<double> instance_loss(const LossSpec& spec, int anchor, std::span<const double> similarities,
                                    const Partition& part, double tau);

// One direction of the two-view objective. Rows of `marginals` (I x 2K,
// [mu+ | mu-]) are the anchors' nodes read from one view; `codes` are the
// same nodes' binarized codes from the other view and define the columns.
struct DirectionInput {
  std::vector<double> marginals;
  std::vector<Code> codes;
  std::vector<int> keys;
};

// I x I similarity matrix, s(i, j) = (1/K) sum_k mu_k(i, c_j^k).
std::vector<double> similarity_matrix(std::span<const double> marginals, std::span<const Code> codes, int bits);

struct LossDiagnostics {
  int anchors = 0;
  int skipped = 0;
  long positive_total = 0;
  int positive_max = 0;
  int singleton_positive = 0;

  void merge(const LossDiagnostics& other);
  double mean_positives() const { return anchors > 0 ? static_cast<double>(positive_total) / anchors : 0.0; }
};

// Mean instance loss over the anchors of one direction; plain arithmetic.
double direction_loss(const LossSpec& spec, const DirectionInput& input, int bits, double tau,
                      LossDiagnostics* diagnostics = nullptr);

// The same value recorded on a tape; `marginals` is an I x 2K node.
grad::Var record_direction_loss(grad::Tape& tape, grad::Var marginals, std::span<const Code> codes,
                                std::span<const int> keys, const LossSpec& spec, double tau,
                                LossDiagnostics* diagnostics = nullptr);

}  // namespace hashparse
