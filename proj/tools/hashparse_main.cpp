#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hashparse/checkpoint.h"
#include "hashparse/eval.h"
#include "hashparse/render.h"
#include "hashparse/selfcheck.h"
#include "hashparse/trainer.h"
#include "hashparse/treebank.h"

namespace fs = std::filesystem;
using namespace hashparse;

namespace {

constexpr int kExitFault = 1;
constexpr int kExitUsage = 2;

struct TrainArgs {
  std::string config, train, dev, test, out;
  uint64_t seed = 0;
  bool seed_given = false;
  int seeds = 1;
};

struct ParseArgs {
  std::string ckpt, input = "-";
  std::string format = "brackets";
};

struct EvalArgs {
  std::string ckpt, test, report, config;
  int bits = 0;
};

struct InspectArgs {
  std::string ckpt, sentence;
};

struct SelfcheckArgs {
  int n = 5, k = 2, trials = 50;
  uint64_t seed = 1;
};

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw std::runtime_error("cannot open input " + path);
    in = &file;
  }
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(*in, line)) {
    std::istringstream words(line);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) tokens.push_back(w);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  return out;
}

std::vector<int> lookup_ids(const Vocabulary& vocab, const std::vector<std::string>& words) {
  std::vector<int> ids;
  for (const auto& w : words) ids.push_back(vocab.lookup(w));
  return ids;
}

int run_train(const TrainArgs& args) {
  TrainConfig config = read_config_file(args.config);
  if (args.seed_given) config.seed = args.seed;
  if (const char* env = std::getenv("PARSER_SEED")) config.seed = std::stoull(env);

  IngestOptions options;
  std::vector<SplitStats> stats(3);
  stats[0].name = "train";
  stats[1].name = "dev";
  stats[2].name = "test";
  Corpus corpus;
  corpus.sentences = read_treebank_file(args.train, options, stats[0]);
  assign_ids(corpus.sentences, corpus.vocab, true);
  std::vector<Sentence> dev, test;
  if (!args.dev.empty()) {
    dev = read_treebank_file(args.dev, options, stats[1]);
    assign_ids(dev, corpus.vocab, false);
  }
  if (!args.test.empty()) {
    test = read_treebank_file(args.test, options, stats[2]);
    assign_ids(test, corpus.vocab, false);
  }
  std::cerr << format_ingest_report(stats, corpus.vocab.size());

  fs::create_directories(args.out);
  SeedSummary summary;
  for (int i = 0; i < args.seeds; ++i) {
    TrainConfig run = config;
    run.seed = config.seed + static_cast<uint64_t>(i);
    fs::path dir = args.seeds > 1 ? fs::path(args.out) / ("seed" + std::to_string(run.seed)) : fs::path(args.out);
    fs::create_directories(dir);
    TrainHooks hooks;
    hooks.log = [&](const std::string& msg) { std::cerr << "[seed " << run.seed << "] " << msg << "\n"; };
    TrainResult result = train(corpus, dev, run, hooks);

    Checkpoint ckpt{run, corpus.vocab, result.final_state.params, result.final_state.adam, result.final_state.step};
    save_checkpoint((dir / "checkpoint.bin").string(), ckpt);
    EncoderParams chosen = result.final_state.params;
    if (!dev.empty()) {
      Checkpoint best = ckpt;
      best.params = result.best_params;
      save_checkpoint((dir / "best.bin").string(), best);
      chosen = result.best_params;
    }
    write_lines(dir / "metrics.tsv", result.metrics);
    write_lines(dir / "diagnostics.tsv", result.diagnostics);

    summary.seeds.push_back(run.seed);
    summary.dev_f1.push_back(dev.empty() ? 0.0 : result.best_dev_f1);
    std::ostringstream text;
    text << "seed\t" << run.seed << "\nsteps\t" << result.final_state.step << "\naborted_steps\t"
         << result.aborted_steps << "\ncollapse_warning\t" << (result.collapse_warned ? "yes" : "no") << "\n";
    if (!dev.empty()) text << "best_dev_f1\t" << result.best_dev_f1 << "\nbest_step\t" << result.best_step << "\n";
    if (!test.empty()) {
      double f1 = evaluate(chosen, test, run.order, run.execution).report.mean();
      summary.test_f1.push_back(f1);
      text << "test_f1\t" << f1 << "\n";
    }
    write_text(dir / "summary.txt", text.str());
  }
  write_text(fs::path(args.out) / "run_summary.tsv", summary.format());
  std::cout << summary.format();
  return 0;
}

int run_parse(const ParseArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.ckpt);
  EncoderParams params = ckpt.params;
  params.dropout_rate = 0.0;
  TreeFormat format = args.format == "codes" ? TreeFormat::codes : TreeFormat::brackets;
  for (const auto& words : read_token_lines(args.input)) {
    BinaryTree tree = parse_sentence(params, lookup_ids(ckpt.vocab, words), ckpt.config.order);
    std::cout << render_tree(tree, words, format) << "\n";
  }
  return 0;
}

int run_eval(const EvalArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.ckpt);
  TrainConfig expected = ckpt.config;
  if (!args.config.empty()) expected = read_config_file(args.config);
  if (args.bits > 0) expected.bits = args.bits;
  check_compatible(ckpt, expected);

  SplitStats stats{"test"};
  auto sentences = read_treebank_file(args.test, IngestOptions{}, stats);
  assign_ids(sentences, ckpt.vocab, false);
  Evaluation e = evaluate(ckpt.params, sentences, ckpt.config.order, Execution::parallel);
  Baselines b = baselines(sentences);
  std::string report = format_report(e.report, &b);
  if (args.report.empty()) {
    std::cout << report;
  } else {
    write_text(args.report, report);
  }
  std::cerr << "mean F1 " << e.report.mean() << " over " << sentences.size() << " sentences\n";
  return 0;
}

int run_inspect(const InspectArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.ckpt);
  EncoderParams params = ckpt.params;
  params.dropout_rate = 0.0;
  std::istringstream in(args.sentence);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  if (words.empty()) throw std::runtime_error("inspect needs a non-empty sentence");
  auto ids = lookup_ids(ckpt.vocab, words);
  SpanScores scores = span_scores(zero_order_scores(encode(ids, params, 0), params), ckpt.config.order);
  Chart chart = inside_outside(scores);
  BinaryTree tree = viterbi(scores);
  std::cout << dump_chart(chart, words);
  std::cout << "tree\t" << render_tree(tree, words, TreeFormat::codes) << "\n";
  return 0;
}

int run_selfcheck(const SelfcheckArgs& args) {
  oracle::SelfcheckOptions options{args.n, args.k, args.trials, args.seed};
  auto report = oracle::run_selfcheck(options);
  for (const auto& line : report.lines) std::cout << line << "\n";
  std::cout << (report.ok() ? "selfcheck passed" : "selfcheck FAILED") << " (" << report.checks << " checks, "
            << report.failures << " failures)\n";
  return report.ok() ? 0 : kExitFault;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised constituency parsing with bit-level span codes"};
  app.require_subcommand(1);
  int jobs = omp_get_num_procs();
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", train_args.config, "config file (key = value)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--train", train_args.train, "training treebank")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", train_args.dev, "development treebank")->check(CLI::ExistingFile);
  train_cmd->add_option("--test", train_args.test, "test treebank, scored in the run summary")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "output directory")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_args.seed, "run seed (PARSER_SEED overrides)");
  train_cmd->add_option("--seeds", train_args.seeds, "number of consecutive seeds to run")->check(CLI::PositiveNumber);

  ParseArgs parse_args;
  auto* parse_cmd = app.add_subcommand("parse", "parse plain-text sentences, one per line");
  parse_cmd->add_option("--ckpt", parse_args.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  parse_cmd->add_option("--input", parse_args.input, "input file, '-' for stdin");
  parse_cmd->add_option("--format", parse_args.format, "output format")->check(CLI::IsMember({"brackets", "codes"}));

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "score a treebank against the decoded trees");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--test", eval_args.test, "gold treebank")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--report", eval_args.report, "report file (default stdout)");
  eval_cmd->add_option("--config", eval_args.config, "config that must match the checkpoint")->check(CLI::ExistingFile);
  eval_cmd->add_option("--bits", eval_args.bits, "expected code length")->check(CLI::PositiveNumber);

  InspectArgs inspect_args;
  auto* inspect_cmd = app.add_subcommand("inspect", "dump the chart of one sentence");
  inspect_cmd->add_option("--ckpt", inspect_args.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--sentence", inspect_args.sentence, "space-separated tokens")->required();

  SelfcheckArgs check_args;
  auto* check_cmd = app.add_subcommand("selfcheck", "run the brute-force and gradient oracles");
  check_cmd->add_option("--n", check_args.n, "largest sentence length")->check(CLI::Range(1, 10));
  check_cmd->add_option("--k", check_args.k, "largest code length")->check(CLI::Range(1, 8));
  check_cmd->add_option("--trials", check_args.trials, "random problems")->check(CLI::PositiveNumber);
  check_cmd->add_option("--seed", check_args.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  omp_set_num_threads(jobs);
  train_args.seed_given = seed_opt->count() > 0;

  try {
    if (*train_cmd) return run_train(train_args);
    if (*parse_cmd) return run_parse(parse_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*inspect_cmd) return run_inspect(inspect_args);
    if (*check_cmd) return run_selfcheck(check_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFault;
  }
  return kExitUsage;
}
