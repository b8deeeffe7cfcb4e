#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hashparse/chart.h"
#include "hashparse/encoder.h"
#include "hashparse/hashing.h"
#include "hashparse/treebank.h"

namespace hashparse {

struct TrainConfig {
  int bits = 16;
  int dim = 64;
  int layers = 2;
  int window = 1;
  Order order = Order::first;
  double p_mask = 0.15;
  double dropout = 0.1;
  int span_budget = 1024;
  int warmup_steps = 4000;
  int train_steps = 20000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 0.0;  // global-norm clipping; 0 disables it
  uint64_t seed = 0;
  LossSpec loss;
  double tau = 0.1;
  int dev_every = 500;
  int max_length = 0;  // training sentences longer than this are skipped; 0 keeps all
  Execution execution = Execution::parallel;

  // Throws std::invalid_argument on out-of-range values.
  void validate() const;
  // Hash of the fields that fix the parameter layout and decoding.
  uint64_t architecture_hash() const;
  EncoderDims dims(int vocab_size) const { return {vocab_size, dim, layers, bits, window}; }
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat "key = value" text with '#' comments. Unknown keys are errors.
TrainConfig parse_config(const std::string& text);
TrainConfig read_config_file(const std::string& path);
std::string format_config(const TrainConfig& config);

// Linear warmup from 0 to the peak, then linear decay to 0 at train_steps.
double lr_at(long step, const TrainConfig& config);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long steps = 0;

  static AdamState zeros(size_t count) { return {std::vector<double>(count, 0.0), std::vector<double>(count, 0.0), 0}; }
};

// Adam with decoupled weight decay; a pure function of its inputs.
void adam_update(std::span<double> params, std::span<const double> gradient, AdamState& state, double lr,
                 const TrainConfig& config);

// Trees that pick the instances of each view; index [sentence][view].
using Selection = std::vector<std::array<BinaryTree, 2>>;

struct BatchResult {
  double loss = 0.0;
  std::vector<double> gradient;  // empty unless requested
  LossDiagnostics diagnostics;
  Selection trees;
  int branching_candidates = 0;  // decoded trees with at least 3 tokens
  int right_branching = 0;

  double right_branching_fraction() const {
    return branching_candidates > 0 ? static_cast<double>(right_branching) / branching_candidates : 0.0;
  }
};

// Seeds of the two augmented views of a sentence at a training step.
uint64_t view_seed(uint64_t run_seed, long step, int view);
uint64_t sentence_seed(uint64_t view_seed, int sentence);

// Two-view loss (and optionally its gradient) on the listed sentences. The
// views are decoded from the model unless `fixed` supplies the trees.
// `external`, when given, holds hidden states aligned with `sentences`.
BatchResult evaluate_batch(const EncoderParams& params, std::span<const Sentence> sentences,
                           std::span<const int> items, const TrainConfig& config, long step, bool need_gradient,
                           const Selection* fixed = nullptr, const std::vector<HiddenStates>* external = nullptr);

struct StepOutcome {
  bool applied = false;
  double loss = 0.0;
  double lr = 0.0;
  BatchResult batch;
  std::string fault;
};

// Loss, gradient and one optimizer update. A non-finite loss or gradient
// leaves params and state untouched.
StepOutcome train_step(EncoderParams& params, AdamState& state, std::span<const Sentence> sentences,
                       std::span<const int> items, const TrainConfig& config, long step,
                       const std::vector<HiddenStates>* external = nullptr);

struct TrainState {
  EncoderParams params;
  AdamState adam;
  long step = 0;
};

struct TrainResult {
  TrainState final_state;
  EncoderParams best_params;
  double best_dev_f1 = -1.0;
  long best_step = 0;
  double last_dev_f1 = -1.0;
  std::vector<std::string> metrics;      // one line per step, then dev lines
  std::vector<std::string> diagnostics;  // one line per step
  int aborted_steps = 0;
  bool collapse_warned = false;
};

struct TrainHooks {
  std::function<void(const std::string&)> log;  // progress and warnings
  long stop_after = 0;  // when positive, return after this step as if interrupted
};

constexpr double kCollapseThreshold = 0.98;
constexpr int kCollapseWindow = 100;

// Runs config.train_steps steps over span-budgeted batches, reshuffled each
// pass. Dev F1 is measured every dev_every steps and at the end; the best
// parameters are kept.
TrainResult train(const Corpus& corpus, std::span<const Sentence> dev, const TrainConfig& config,
                  const TrainHooks& hooks = {}, std::optional<TrainState> resume = std::nullopt);

std::string format_metrics_line(long step, double lr, double loss, double collapse_fraction);
std::string format_dev_line(long step, double f1);

struct SeedSummary {
  std::vector<uint64_t> seeds;
  std::vector<double> dev_f1;
  std::vector<double> test_f1;  // empty when no test split was given

  std::string format() const;
};

}  // namespace hashparse
