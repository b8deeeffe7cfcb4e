#include "hashparse/selfcheck.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "hashparse/brute_force.h"
#include "hashparse/chart.h"
#include "hashparse/hashing.h"
#include "hashparse/model.h"
#include "hashparse/trainer.h"

namespace hashparse::oracle {

std::vector<double> finite_difference_gradient(const std::function<double(const EncoderParams&)>& f,
                                               const EncoderParams& params, double step) {
  EncoderParams probe = params;
  std::vector<double> out(params.values.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double keep = probe.values[i];
    probe.values[i] = keep + step;
    const double up = f(probe);
    probe.values[i] = keep - step;
    const double down = f(probe);
    probe.values[i] = keep;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

namespace {

ScoreTable random_table(std::mt19937_64& rng, int n, int bits) {
  std::vector<double> s(static_cast<size_t>(bits) * n * n);
  for (double& x : s) x = 1.5 * standard_normal(rng);
  return ScoreTable(bits, n, std::move(s));
}

int draw(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

struct Suite {
  std::string name;
  int checks = 0;
  int failures = 0;
  double worst = 0.0;

  void check(double error, double tolerance) {
    ++checks;
    worst = std::max(worst, error);
    if (!(error <= tolerance)) ++failures;
  }
  std::string line() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-22s %s  checks=%d failures=%d worst=%.3g", name.c_str(),
                  failures == 0 ? "ok  " : "FAIL", checks, failures, worst);
    return buf;
  }
};

double relative(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

SelfcheckReport run_selfcheck(const SelfcheckOptions& options) {
  const int max_n = std::clamp(options.max_n, 1, kMaxBruteForceLength);
  const int max_k = std::max(1, options.max_k);
  std::mt19937_64 rng(options.seed);
  Suite partition{"partition"}, marginal{"marginals"}, decode{"viterbi"}, tape_identity{"tape-marginals"},
      gradient{"end-to-end-gradient"};
  const auto variants = named_losses();

  for (int trial = 0; trial < options.trials; ++trial) {
    const int n = draw(rng, 1, max_n);
    const int bits = draw(rng, 1, max_k);
    ScoreTable table = random_table(rng, n, bits);
    for (Order order : {Order::first, Order::zero}) {
      SpanScores scores = span_scores(table, order);
      partition.check(relative(inside(scores).log_partition, brute_force_log_partition(table, order)), 1e-9);
    }
    SpanScores scores = first_order_span_scores(table);
    Chart chart = inside_outside(scores);
    TripleIndex index(n);
    for (int t = 0; t < index.size(); ++t) {
      const Triple& tr = index[t];
      marginal.check(std::abs(chart.split_marginal[t] - brute_force_split_marginal(scores, tr.left, tr.right, tr.split)), 1e-9);
      for (int k = 0; k < bits; ++k) {
        marginal.check(std::abs(chart.bit_marginal_pos[static_cast<size_t>(t) * bits + k] -
                                brute_force_bit_marginal(scores, tr.left, tr.right, tr.split, k)),
                       1e-9);
      }
    }
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < bits; ++k)
        marginal.check(std::abs(chart.leaf_marginal_pos[static_cast<size_t>(i) * bits + k] -
                                brute_force_leaf_bit_marginal(scores, i, k)),
                       1e-9);

    BinaryTree tree = viterbi(scores);
    decode.check(relative(tree.score, brute_force_max(scores)), 1e-9);
    decode.check(relative(tree_score(scores, tree), tree.score), 1e-9);
    for (const TreeNode& node : tree.nodes) {
      Code rule = binarize(chart, node);
      decode.check(rule == node.code ? 0.0 : 1.0, 0.0);
    }

    {
      grad::Tape tape;
      grad::Var split = tape.parameter("split", scores.split, index.size(), bits);
      grad::Var leaf = tape.parameter("leaf", scores.leaf, n, bits);
      ChartVars vars = record_chart(tape, split, leaf, n, bits);
      tape.backward(vars.log_partition);
      auto gs = tape.gradient(split);
      for (size_t e = 0; e < gs.size(); ++e) tape_identity.check(std::abs(gs[e] - chart.bit_marginal_pos[e]), 1e-9);
      auto gl = tape.gradient(leaf);
      for (size_t e = 0; e < gl.size(); ++e) tape_identity.check(std::abs(gl[e] - chart.leaf_marginal_pos[e]), 1e-9);
    }

    if (trial % 5 == 0) {
      TrainConfig config;
      config.bits = std::min(bits, 2);
      config.dim = 4;
      config.layers = 1;
      config.dropout = 0.1;
      config.p_mask = 0.2;
      config.seed = options.seed + trial;
      config.loss = LossSpec::parse(variants[(trial / 5) % variants.size()]);
      config.execution = Execution::serial;
      const int vocab = 6;
      std::vector<Sentence> sentences(2);
      for (auto& s : sentences) {
        const int len = draw(rng, 1, std::min(max_n, 4));
        for (int i = 0; i < len; ++i) s.tokens.push_back({"w", "", draw(rng, 2, vocab - 1)});
        s.gold.n = len;
      }
      std::vector<int> items = {0, 1};
      EncoderParams params = EncoderParams::random(config.dims(vocab), config.dropout, config.seed);
      for (double& x : params.values) x *= 0.5;
      BatchResult base = evaluate_batch(params, sentences, items, config, 1, true);
      auto loss = [&](const EncoderParams& p) {
        return evaluate_batch(p, sentences, items, config, 1, false, &base.trees).loss;
      };
      auto numeric = finite_difference_gradient(loss, params, 1e-4);
      double worst = 0.0;
      for (size_t i = 0; i < numeric.size(); ++i) worst = std::max(worst, std::abs(numeric[i] - base.gradient[i]));
      gradient.check(worst, 1e-5);
    }
  }

  SelfcheckReport report;
  for (const Suite* s : {&partition, &marginal, &decode, &tape_identity, &gradient}) {
    report.checks += s->checks;
    report.failures += s->failures;
    report.lines.push_back(s->line());
  }
  return report;
}

}  // namespace hashparse::oracle
