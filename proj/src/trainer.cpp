#include "hashparse/trainer.h"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>

#include "hashparse/eval.h"
#include "hashparse/model.h"

namespace hashparse {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !in.eof()) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Runs fn(i) for i in [0, count), in parallel when asked; the first
// exception by index is rethrown after the loop.
template <typename Fn>
void for_each_index(int count, Execution execution, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  if (execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (bits < 1) fail("bits must be at least 1");
  if (dim < bits) fail("dim must be at least bits");
  if (layers < 0) fail("layers must be non-negative");
  if (window < 0) fail("window must be non-negative");
  if (!(p_mask >= 0.0 && p_mask < 1.0)) fail("p_mask must lie in [0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (span_budget < 1) fail("span_budget must be at least 1");
  if (train_steps < 0 || warmup_steps < 0) fail("step counts must be non-negative");
  if (warmup_steps > train_steps) fail("warmup_steps must not exceed train_steps");
  if (!(lr >= 0.0)) fail("lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be non-negative");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (dev_every < 1) fail("dev_every must be at least 1");
  if (max_length < 0) fail("max_length must be non-negative");
}

uint64_t TrainConfig::architecture_hash() const {
  std::ostringstream s;
  s << "bits=" << bits << ";dim=" << dim << ";layers=" << layers << ";window=" << window
    << ";order=" << (order == Order::first ? "first" : "zero");
  return fnv1a(s.str());
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"bits", [&](auto& k, auto& v) { c.bits = parse_number<int>(k, v); }},
      {"dim", [&](auto& k, auto& v) { c.dim = parse_number<int>(k, v); }},
      {"layers", [&](auto& k, auto& v) { c.layers = parse_number<int>(k, v); }},
      {"window", [&](auto& k, auto& v) { c.window = parse_number<int>(k, v); }},
      {"order",
       [&](auto& k, auto& v) {
         if (v == "first") {
           c.order = Order::first;
         } else if (v == "zero") {
           c.order = Order::zero;
         } else {
           throw ConfigError("bad value for " + k + ": '" + v + "' (expected first or zero)");
         }
       }},
      {"p_mask", [&](auto& k, auto& v) { c.p_mask = parse_number<double>(k, v); }},
      {"dropout", [&](auto& k, auto& v) { c.dropout = parse_number<double>(k, v); }},
      {"span_budget", [&](auto& k, auto& v) { c.span_budget = parse_number<int>(k, v); }},
      {"warmup_steps", [&](auto& k, auto& v) { c.warmup_steps = parse_number<int>(k, v); }},
      {"train_steps", [&](auto& k, auto& v) { c.train_steps = parse_number<int>(k, v); }},
      {"lr", [&](auto& k, auto& v) { c.lr = parse_number<double>(k, v); }},
      {"beta1", [&](auto& k, auto& v) { c.beta1 = parse_number<double>(k, v); }},
      {"beta2", [&](auto& k, auto& v) { c.beta2 = parse_number<double>(k, v); }},
      {"eps", [&](auto& k, auto& v) { c.eps = parse_number<double>(k, v); }},
      {"weight_decay", [&](auto& k, auto& v) { c.weight_decay = parse_number<double>(k, v); }},
      {"grad_clip", [&](auto& k, auto& v) { c.grad_clip = parse_number<double>(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<uint64_t>(k, v); }},
      {"loss",
       [&](auto&, auto& v) {
         try {
           c.loss = LossSpec::parse(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       }},
      {"tau", [&](auto& k, auto& v) { c.tau = parse_number<double>(k, v); }},
      {"dev_every", [&](auto& k, auto& v) { c.dev_every = parse_number<int>(k, v); }},
      {"max_length", [&](auto& k, auto& v) { c.max_length = parse_number<int>(k, v); }},
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

TrainConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "bits = " << c.bits << "\n"
      << "dim = " << c.dim << "\n"
      << "layers = " << c.layers << "\n"
      << "window = " << c.window << "\n"
      << "order = " << (c.order == Order::first ? "first" : "zero") << "\n"
      << "p_mask = " << number(c.p_mask) << "\n"
      << "dropout = " << number(c.dropout) << "\n"
      << "span_budget = " << c.span_budget << "\n"
      << "warmup_steps = " << c.warmup_steps << "\n"
      << "train_steps = " << c.train_steps << "\n"
      << "lr = " << number(c.lr) << "\n"
      << "beta1 = " << number(c.beta1) << "\n"
      << "beta2 = " << number(c.beta2) << "\n"
      << "eps = " << number(c.eps) << "\n"
      << "weight_decay = " << number(c.weight_decay) << "\n"
      << "grad_clip = " << number(c.grad_clip) << "\n"
      << "seed = " << c.seed << "\n"
      << "loss = " << c.loss.name() << "\n"
      << "tau = " << number(c.tau) << "\n"
      << "dev_every = " << c.dev_every << "\n"
      << "max_length = " << c.max_length << "\n";
  return out.str();
}

double lr_at(long step, const TrainConfig& config) {
  if (step <= 0) return config.warmup_steps == 0 && config.train_steps > 0 ? config.lr : 0.0;
  if (step < config.warmup_steps) return config.lr * static_cast<double>(step) / config.warmup_steps;
  if (step == config.warmup_steps || config.train_steps == config.warmup_steps) return config.lr;
  if (step >= config.train_steps) return 0.0;
  return config.lr * static_cast<double>(config.train_steps - step) / (config.train_steps - config.warmup_steps);
}

void adam_update(std::span<double> params, std::span<const double> gradient, AdamState& state, double lr,
                 const TrainConfig& config) {
  if (gradient.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("optimizer state does not match parameter count");
  }
  ++state.steps;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.steps));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double update = (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + config.eps);
    params[i] -= lr * (update + config.weight_decay * params[i]);
  }
}

uint64_t view_seed(uint64_t run_seed, long step, int view) {
  return derive_seed(run_seed, static_cast<uint64_t>(step), static_cast<uint64_t>(view));
}

uint64_t sentence_seed(uint64_t view_seed, int sentence) {
  return derive_seed(view_seed, static_cast<uint64_t>(sentence), 0x5e);
}

BatchResult evaluate_batch(const EncoderParams& params, std::span<const Sentence> sentences,
                           std::span<const int> items, const TrainConfig& config, long step, bool need_gradient,
                           const Selection* fixed, const std::vector<HiddenStates>* external) {
  const int count = static_cast<int>(items.size());
  if (count == 0) throw std::invalid_argument("empty batch");
  if (fixed && static_cast<int>(fixed->size()) != count) throw std::invalid_argument("selection does not match batch");
  const int bits = params.dims.bits;
  EncoderParams view_params = params;
  view_params.dropout_rate = config.dropout;

  // Phase 1: both views of every sentence, forward to the marginals.
  std::vector<std::optional<SentenceGraph>> graphs(2 * count);
  BatchResult result;
  result.trees.resize(count);
  for_each_index(2 * count, config.execution, [&](int g) {
    const int s = g / 2, v = g % 2;
    const int item = items[s];
    if (external) {
      graphs[g].emplace((*external).at(item), view_params, config.order);
    } else {
      uint64_t seed = sentence_seed(view_seed(config.seed, step, v + 1), item);
      auto ids = mask_augment(sentences[item].ids(), config.p_mask, derive_seed(seed, 0x6d61736b));
      graphs[g].emplace(ids, view_params, seed, config.order);
    }
    result.trees[s][v] = fixed ? (*fixed)[s][v] : graphs[g]->decode();
  });

  // Phase 1b: each view's marginals at the other view's nodes.
  std::vector<grad::Var> selected(2 * count);
  std::array<std::vector<double>, 2> marginals;
  std::array<std::vector<Code>, 2> codes;
  std::array<std::vector<std::vector<int>>, 2> keys;
  std::array<std::vector<int>, 2> row_offset;
  for (int d = 0; d < 2; ++d) row_offset[d].push_back(0);
  for (int s = 0; s < count; ++s) {
    const auto ids = sentences[items[s]].ids();
    for (int d = 0; d < 2; ++d) {
      const BinaryTree& anchors = result.trees[s][1 - d];
      SentenceGraph& graph = *graphs[2 * s + d];
      grad::Var m = graph.select(anchors);
      selected[2 * s + d] = m;
      auto values = graph.tape().value(m);
      marginals[d].insert(marginals[d].end(), values.begin(), values.end());
      for (const TreeNode& node : anchors.nodes) {
        codes[d].push_back(node.code);
        keys[d].emplace_back(ids.begin() + node.left, ids.begin() + node.right + 1);
      }
      row_offset[d].push_back(row_offset[d].back() + static_cast<int>(anchors.nodes.size()));
    }
    for (int v = 0; v < 2; ++v) {
      const BinaryTree& t = result.trees[s][v];
      if (t.n >= 3) {
        ++result.branching_candidates;
        if (t.is_right_branching()) ++result.right_branching;
      }
    }
  }

  // Phase 2: the batch loss over both directions.
  grad::Tape tape;
  std::array<grad::Var, 2> m_vars;
  grad::Var loss;
  for (int d = 0; d < 2; ++d) {
    const int rows = row_offset[d].back();
    m_vars[d] = tape.parameter("marginals", marginals[d], rows, 2 * bits);
    auto ids = key_ids(keys[d]);
    grad::Var term = record_direction_loss(tape, m_vars[d], codes[d], ids, config.loss, config.tau, &result.diagnostics);
    loss = d == 0 ? term : tape.add(loss, term);
  }
  result.loss = tape.scalar(loss);
  if (!need_gradient) return result;
  tape.backward(loss);

  // Phase 3: push the marginal gradients back through every sentence.
  const size_t pcount = params.values.size();
  std::vector<std::vector<double>> partial(2 * count);
  for_each_index(2 * count, config.execution, [&](int g) {
    const int s = g / 2, d = g % 2;
    auto gm = tape.gradient(m_vars[d]);
    const size_t width = 2 * static_cast<size_t>(bits);
    std::vector<double> rows(gm.begin() + row_offset[d][s] * width, gm.begin() + row_offset[d][s + 1] * width);
    std::pair<grad::Var, std::vector<double>> seed{selected[g], std::move(rows)};
    graphs[g]->backward(std::span(&seed, 1));
    partial[g].assign(pcount, 0.0);
    graphs[g]->accumulate_gradient(partial[g]);
    graphs[g].reset();
  });
  result.gradient.assign(pcount, 0.0);
  for (const auto& p : partial)
    for (size_t i = 0; i < pcount; ++i) result.gradient[i] += p[i];
  return result;
}

StepOutcome train_step(EncoderParams& params, AdamState& state, std::span<const Sentence> sentences,
                       std::span<const int> items, const TrainConfig& config, long step,
                       const std::vector<HiddenStates>* external) {
  StepOutcome out;
  out.lr = lr_at(step, config);
  try {
    out.batch = evaluate_batch(params, sentences, items, config, step, true, nullptr, external);
  } catch (const grad::NumericFault& e) {
    out.loss = std::nan("");
    out.fault = e.what();
    return out;
  }
  out.loss = out.batch.loss;
  if (!std::isfinite(out.loss)) {
    out.fault = "non-finite loss";
    return out;
  }
  double norm = 0.0;
  for (double g : out.batch.gradient) norm += g * g;
  norm = std::sqrt(norm);
  if (!std::isfinite(norm)) {
    out.fault = "non-finite gradient";
    return out;
  }
  if (config.grad_clip > 0.0 && norm > config.grad_clip) {
    const double factor = config.grad_clip / norm;
    for (double& g : out.batch.gradient) g *= factor;
  }
  adam_update(params.values, out.batch.gradient, state, out.lr, config);
  out.applied = true;
  return out;
}

std::string format_metrics_line(long step, double lr, double loss, double collapse_fraction) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%ld\t%.6e\t%.9f\t%.4f", step, lr, loss, collapse_fraction);
  return buf;
}

std::string format_dev_line(long step, double f1) {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "dev\t%ld\t%.6f", step, f1);
  return buf;
}

TrainResult train(const Corpus& corpus, std::span<const Sentence> dev, const TrainConfig& config,
                  const TrainHooks& hooks, std::optional<TrainState> resume) {
  config.validate();
  if (corpus.sentences.empty()) throw std::invalid_argument("training corpus is empty");
  auto log = [&](const std::string& msg) {
    if (hooks.log) hooks.log(msg);
  };
  std::vector<int> eligible, lengths;
  for (int i = 0; i < static_cast<int>(corpus.sentences.size()); ++i) {
    const int n = corpus.sentences[i].size();
    if (n < 1 || (config.max_length > 0 && n > config.max_length)) continue;
    eligible.push_back(i);
    lengths.push_back(n);
  }
  if (eligible.empty()) throw std::invalid_argument("no training sentence within max_length");

  const EncoderDims dims = config.dims(corpus.vocab.size());
  TrainResult result;
  if (resume) {
    if (resume->params.dims != dims) throw std::invalid_argument("resumed parameters do not match the configuration");
    result.final_state = std::move(*resume);
    result.final_state.params.dropout_rate = config.dropout;
  } else {
    result.final_state.params = EncoderParams::random(dims, config.dropout, derive_seed(config.seed, 0x1417));
    result.final_state.adam = AdamState::zeros(result.final_state.params.values.size());
  }
  TrainState& state = result.final_state;
  result.best_params = state.params;

  auto run_dev = [&](long step) {
    if (dev.empty()) return;
    double f1 = evaluate(state.params, dev, config.order, config.execution).report.mean();
    result.metrics.push_back(format_dev_line(step, f1));
    result.last_dev_f1 = f1;
    if (f1 > result.best_dev_f1) {
      result.best_dev_f1 = f1;
      result.best_step = step;
      result.best_params = state.params;
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "step %ld dev F1 %.4f", step, f1);
    log(buf);
  };

  if (state.step >= config.train_steps) {
    run_dev(state.step);
    return result;
  }

  // Batches for the pass containing the current step.
  long epoch = -1;
  std::vector<Batch> batches;
  size_t next = 0;
  auto refill = [&] {
    ++epoch;
    batches = collate(lengths, config.span_budget, derive_seed(config.seed, static_cast<uint64_t>(epoch), 0xc011a7e));
    next = 0;
  };
  refill();
  // Replaying the batch stream keeps resumed runs on the same schedule.
  for (long s = 0; s < state.step; ++s) {
    if (next == batches.size()) refill();
    ++next;
  }

  int streak = 0;
  std::vector<int> items;
  for (long step = state.step + 1; step <= config.train_steps; ++step) {
    if (next == batches.size()) refill();
    const Batch& batch = batches[next++];
    items.clear();
    for (int b : batch.items) items.push_back(eligible[b]);
    StepOutcome out = train_step(state.params, state.adam, corpus.sentences, items, config, step);
    state.step = step;
    const double collapse = out.batch.right_branching_fraction();
    if (!out.applied) {
      ++result.aborted_steps;
      log("step " + std::to_string(step) + " aborted: " + out.fault);
    }
    result.metrics.push_back(format_metrics_line(step, out.lr, out.loss, collapse));
    {
      const auto& d = out.batch.diagnostics;
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%ld\t%s\t%.9f\t%d\t%.4f\t%d\t%.4f\t%.4f", step, config.loss.name().c_str(),
                    out.loss, d.anchors, d.mean_positives(), d.positive_max,
                    d.anchors > 0 ? static_cast<double>(d.singleton_positive) / d.anchors : 0.0, collapse);
      result.diagnostics.push_back(buf);
    }
    streak = collapse > kCollapseThreshold ? streak + 1 : 0;
    if (streak == kCollapseWindow) {
      result.collapse_warned = true;
      log("warning: over " + std::to_string(kCollapseWindow) + " consecutive steps more than 98% of decoded trees are right-branching (step " +
          std::to_string(step) + ")");
    }
    if (step % config.dev_every == 0 || step == config.train_steps) run_dev(step);
    if (hooks.stop_after > 0 && step >= hooks.stop_after) return result;
  }
  if (!dev.empty() && result.best_dev_f1 < 0.0) run_dev(state.step);
  return result;
}

std::string SeedSummary::format() const {
  std::ostringstream out;
  char buf[160];
  out << "seed\tdev_f1" << (test_f1.empty() ? "" : "\ttest_f1") << "\n";
  for (size_t i = 0; i < seeds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%" PRIu64 "\t%.6f", seeds[i], i < dev_f1.size() ? dev_f1[i] : 0.0);
    out << buf;
    if (!test_f1.empty()) {
      std::snprintf(buf, sizeof(buf), "\t%.6f", test_f1[i]);
      out << buf;
    }
    out << "\n";
  }
  auto stats = [&](const char* name, const std::vector<double>& v) {
    if (v.empty()) return;
    double sum = 0.0, top = v[0];
    for (double x : v) {
      sum += x;
      top = std::max(top, x);
    }
    std::snprintf(buf, sizeof(buf), "# mean_%s\t%.6f\n# max_%s\t%.6f\n", name, sum / v.size(), name, top);
    out << buf;
  };
  stats("dev_f1", dev_f1);
  stats("test_f1", test_f1);
  return out.str();
}

}  // namespace hashparse
