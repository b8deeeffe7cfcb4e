#include "hashparse/hashing.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hashparse {

namespace {

struct Named {
  const char* name;
  LossSpec spec;
};

const std::vector<Named>& named_table() {
  static const std::vector<Named> table = {
      {"self", {NegativeSet::all, PositiveSet::self}},
      {"sup", {NegativeSet::all, PositiveSet::mean}},
      {"hash", {NegativeSet::self, PositiveSet::self}},
      {"max", {NegativeSet::self, PositiveSet::max}},
      {"min", {NegativeSet::self, PositiveSet::min}},
      {"bmin", {NegativeSet::balanced_min, PositiveSet::min}},
  };
  return table;
}

void require_values(std::span<const double> values, const char* what) {
  if (values.empty()) throw std::invalid_argument(std::string(what) + " of an empty set");
}

}  // namespace

const char* to_string(NegativeSet s) {
  switch (s) {
    case NegativeSet::all: return "all";
    case NegativeSet::self: return "self";
    case NegativeSet::balanced_min: return "bmin";
  }
  return "?";
}

const char* to_string(PositiveSet s) {
  switch (s) {
    case PositiveSet::self: return "self";
    case PositiveSet::max: return "max";
    case PositiveSet::min: return "min";
    case PositiveSet::mean: return "mean";
  }
  return "?";
}

LossSpec LossSpec::parse(const std::string& text) {
  for (const auto& n : named_table()) {
    if (text == n.name) return n.spec;
  }
  auto slash = text.find('/');
  if (slash != std::string::npos) {
    std::string neg = text.substr(0, slash), pos = text.substr(slash + 1);
    LossSpec spec;
    if (neg == "all") {
      spec.negative = NegativeSet::all;
    } else if (neg == "self") {
      spec.negative = NegativeSet::self;
    } else if (neg == "bmin") {
      spec.negative = NegativeSet::balanced_min;
    } else {
      throw std::invalid_argument("unknown negative set '" + neg + "'");
    }
    if (pos == "self") {
      spec.positive = PositiveSet::self;
    } else if (pos == "max") {
      spec.positive = PositiveSet::max;
    } else if (pos == "min") {
      spec.positive = PositiveSet::min;
    } else if (pos == "mean") {
      spec.positive = PositiveSet::mean;
    } else {
      throw std::invalid_argument("unknown positive set '" + pos + "'");
    }
    return spec;
  }
  throw std::invalid_argument("unknown loss '" + text + "'");
}

std::string LossSpec::name() const {
  for (const auto& n : named_table()) {
    if (n.spec == *this) return n.name;
  }
  return std::string(to_string(negative)) + "/" + to_string(positive);
}

std::vector<std::string> named_losses() {
  std::vector<std::string> out;
  for (const auto& n : named_table()) out.emplace_back(n.name);
  return out;
}

std::vector<LossSpec> loss_grid() {
  std::vector<LossSpec> out;
  for (auto neg : {NegativeSet::all, NegativeSet::self, NegativeSet::balanced_min})
    for (auto pos : {PositiveSet::self, PositiveSet::max, PositiveSet::min}) out.push_back({neg, pos});
  return out;
}

double smooth_max(std::span<const double> values) {
  require_values(values, "smooth_max");
  return log_sum_exp(values);
}

double smooth_min(std::span<const double> values) {
  require_values(values, "smooth_min");
  std::vector<double> neg(values.size());
  std::transform(values.begin(), values.end(), neg.begin(), [](double x) { return -x; });
  return -log_sum_exp(neg);
}

double smooth_min_balanced(std::span<const double> values) {
  return smooth_min(values) + std::log(static_cast<double>(values.size()));
}

Code binarize(const Chart& chart, const TreeNode& node) {
  if (!chart.has_marginals()) throw std::invalid_argument("binarize needs marginals");
  const int bits = chart.bits;
  Code code(bits);
  const bool leaf = node.is_leaf();
  const size_t row = leaf ? node.left : TripleIndex(chart.n).index(node.left, node.right, node.split);
  const auto& pos = leaf ? chart.leaf_marginal_pos : chart.bit_marginal_pos;
  const auto& neg = leaf ? chart.leaf_marginal_neg : chart.bit_marginal_neg;
  for (int k = 0; k < bits; ++k) code[k] = pos[row * bits + k] > neg[row * bits + k] ? 1 : -1;
  return code;
}

double similarity(const Chart& chart, const TreeNode& node, const Code& code) {
  const int bits = chart.bits;
  if (static_cast<int>(code.size()) != bits) {
    throw std::invalid_argument("code has " + std::to_string(code.size()) + " bits, chart has " + std::to_string(bits));
  }
  const bool leaf = node.is_leaf();
  const size_t row = leaf ? node.left : TripleIndex(chart.n).index(node.left, node.right, node.split);
  const auto& pos = leaf ? chart.leaf_marginal_pos : chart.bit_marginal_pos;
  const auto& neg = leaf ? chart.leaf_marginal_neg : chart.bit_marginal_neg;
  double acc = 0.0;
  for (int k = 0; k < bits; ++k) acc += code[k] > 0 ? pos[row * bits + k] : neg[row * bits + k];
  return acc / bits;
}

Partition partition(std::span<const int> key_ids, int anchor) {
  Partition p;
  for (int j = 0; j < static_cast<int>(key_ids.size()); ++j) {
    (key_ids[j] == key_ids[anchor] ? p.positives : p.negatives).push_back(j);
  }
  return p;
}

std::vector<int> key_ids(std::span<const std::vector<int>> keys) {
  std::map<std::vector<int>, int> seen;
  std::vector<int> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(seen.emplace(k, static_cast<int>(seen.size())).first->second);
  return out;
}

std::optional<double> instance_loss(const LossSpec& spec, int anchor, std::span<const double> similarities,
                                    const Partition& part, double tau) {
  auto scaled = [&](int j) { return similarities[j] / tau; };
  std::vector<double> pos_values;
  for (int j : part.positives) pos_values.push_back(scaled(j));
  if (spec.uses_positives() && pos_values.empty()) return std::nullopt;

  std::vector<double> neg_values;
  for (int j : part.negatives) neg_values.push_back(scaled(j));
  switch (spec.negative) {
    case NegativeSet::all:
      neg_values.insert(neg_values.end(), pos_values.begin(), pos_values.end());
      break;
    case NegativeSet::self:
      neg_values.push_back(scaled(anchor));
      break;
    case NegativeSet::balanced_min:
      neg_values.push_back(smooth_min_balanced(pos_values));
      break;
  }
  double negative = smooth_max(neg_values);

  double positive = 0.0;
  switch (spec.positive) {
    case PositiveSet::self:
      positive = scaled(anchor);
      break;
    case PositiveSet::max:
      positive = smooth_max(pos_values);
      break;
    case PositiveSet::min:
      positive = smooth_min(pos_values);
      break;
    case PositiveSet::mean: {
      double acc = 0.0;
      for (double v : pos_values) acc += v;
      positive = acc / static_cast<double>(pos_values.size());
      break;
    }
  }
  return negative - positive;
}

std::vector<double> similarity_matrix(std::span<const double> marginals, std::span<const Code> codes, int bits) {
  const size_t count = codes.size();
  if (marginals.size() != count * 2 * bits) throw std::invalid_argument("marginal rows do not match codes");
  std::vector<double> s(count * count);
  for (size_t i = 0; i < count; ++i) {
    const double* row = marginals.data() + i * 2 * bits;
    for (size_t j = 0; j < count; ++j) {
      double acc = 0.0;
      for (int k = 0; k < bits; ++k) acc += codes[j][k] > 0 ? row[k] : row[bits + k];
      s[i * count + j] = acc / bits;
    }
  }
  return s;
}

void LossDiagnostics::merge(const LossDiagnostics& other) {
  anchors += other.anchors;
  skipped += other.skipped;
  positive_total += other.positive_total;
  positive_max = std::max(positive_max, other.positive_max);
  singleton_positive += other.singleton_positive;
}

namespace {

void note_positives(LossDiagnostics* diagnostics, size_t count) {
  if (!diagnostics) return;
  diagnostics->positive_total += static_cast<long>(count);
  diagnostics->positive_max = std::max(diagnostics->positive_max, static_cast<int>(count));
  if (count == 1) ++diagnostics->singleton_positive;
}

}  // namespace

double direction_loss(const LossSpec& spec, const DirectionInput& input, int bits, double tau,
                      LossDiagnostics* diagnostics) {
  const int count = static_cast<int>(input.codes.size());
  auto sims = similarity_matrix(input.marginals, input.codes, bits);
  double total = 0.0;
  int used = 0;
  for (int i = 0; i < count; ++i) {
    Partition part = partition(input.keys, i);
    auto loss = instance_loss(spec, i, std::span<const double>(sims).subspan(static_cast<size_t>(i) * count, count), part, tau);
    if (!loss) {
      if (diagnostics) ++diagnostics->skipped;
      continue;
    }
    if (diagnostics) ++diagnostics->anchors;
    note_positives(diagnostics, part.positives.size());
    total += *loss;
    ++used;
  }
  if (used == 0) throw std::invalid_argument("no anchor produced a loss");
  return total / used;
}

grad::Var record_direction_loss(grad::Tape& tape, grad::Var marginals, std::span<const Code> codes,
                                std::span<const int> keys, const LossSpec& spec, double tau,
                                LossDiagnostics* diagnostics) {
  const int count = static_cast<int>(codes.size());
  if (count == 0) throw std::invalid_argument("direction has no instances");
  const int bits = static_cast<int>(codes[0].size());
  if (tape.rows(marginals) != count || tape.cols(marginals) != 2 * bits) {
    throw std::invalid_argument("marginal node shape does not match codes");
  }
  std::vector<double> indicator(static_cast<size_t>(count) * 2 * bits, 0.0);
  for (int j = 0; j < count; ++j)
    for (int k = 0; k < bits; ++k) indicator[static_cast<size_t>(j) * 2 * bits + (codes[j][k] > 0 ? k : bits + k)] = 1.0;
  grad::Var sims = tape.scale(tape.matmul_nt(marginals, tape.constant(std::move(indicator), count, 2 * bits)),
                              1.0 / (bits * tau));

  std::vector<int> anchors;
  std::vector<Partition> parts;
  for (int i = 0; i < count; ++i) {
    Partition part = partition(keys, i);
    if (spec.uses_positives() && part.positives.empty()) {
      if (diagnostics) ++diagnostics->skipped;
      continue;
    }
    if (diagnostics) ++diagnostics->anchors;
    note_positives(diagnostics, part.positives.size());
    anchors.push_back(i);
    parts.push_back(std::move(part));
  }
  if (anchors.empty()) throw std::invalid_argument("no anchor produced a loss");
  const int used = static_cast<int>(anchors.size());
  auto cell = [count](int i, int j) { return i * count + j; };

  // Positive-set gathers shared by the terms that need them.
  grad::Var pos_values, neg_pos_lse;
  std::vector<int> pos_offsets = {0};
  if (spec.uses_positives()) {
    std::vector<int> idx;
    for (int a = 0; a < used; ++a) {
      for (int j : parts[a].positives) idx.push_back(cell(anchors[a], j));
      pos_offsets.push_back(static_cast<int>(idx.size()));
    }
    const int rows = static_cast<int>(idx.size());
    pos_values = tape.gather(sims, std::move(idx), rows, 1);
    if (spec.negative == NegativeSet::balanced_min || spec.positive == PositiveSet::min) {
      neg_pos_lse = tape.segment_log_sum_exp(tape.negate(pos_values), pos_offsets);
    }
  }

  grad::Var negative;
  if (spec.negative == NegativeSet::balanced_min) {
    std::vector<double> log_sizes(used);
    for (int a = 0; a < used; ++a) log_sizes[a] = std::log(static_cast<double>(parts[a].positives.size()));
    grad::Var balanced = tape.add(tape.negate(neg_pos_lse), tape.constant(std::move(log_sizes), used, 1));
    std::vector<grad::Ref> refs;
    std::vector<int> offsets = {0};
    for (int a = 0; a < used; ++a) {
      for (int j : parts[a].negatives) refs.push_back({0, cell(anchors[a], j)});
      refs.push_back({1, a});
      offsets.push_back(static_cast<int>(refs.size()));
    }
    const int rows = static_cast<int>(refs.size());
    negative = tape.segment_log_sum_exp(tape.gather({sims, balanced}, std::move(refs), rows, 1), std::move(offsets));
  } else {
    std::vector<int> idx;
    std::vector<int> offsets = {0};
    for (int a = 0; a < used; ++a) {
      const int i = anchors[a];
      if (spec.negative == NegativeSet::all) {
        for (int j = 0; j < count; ++j) idx.push_back(cell(i, j));
      } else {
        for (int j : parts[a].negatives) idx.push_back(cell(i, j));
        idx.push_back(cell(i, i));
      }
      offsets.push_back(static_cast<int>(idx.size()));
    }
    const int rows = static_cast<int>(idx.size());
    negative = tape.segment_log_sum_exp(tape.gather(sims, std::move(idx), rows, 1), std::move(offsets));
  }

  grad::Var positive;
  switch (spec.positive) {
    case PositiveSet::self: {
      std::vector<int> idx;
      for (int i : anchors) idx.push_back(cell(i, i));
      positive = tape.gather(sims, std::move(idx), used, 1);
      break;
    }
    case PositiveSet::max:
      positive = tape.segment_log_sum_exp(pos_values, pos_offsets);
      break;
    case PositiveSet::min:
      positive = tape.negate(neg_pos_lse);
      break;
    case PositiveSet::mean:
      positive = tape.segment_mean(pos_values, pos_offsets);
      break;
  }
  return tape.mean(tape.subtract(negative, positive));
}

}  // namespace hashparse
