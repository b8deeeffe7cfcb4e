// Samples bracketed trees from a small fixed English-like PCFG with six
// phrase categories (S, NP, NOM, AP, VP, PP).

#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hashparse/types.h"

namespace {

struct Rule {
  double weight;
  std::vector<std::string> rhs;
};

const std::map<std::string, std::vector<Rule>>& grammar() {
  static const std::map<std::string, std::vector<Rule>> g = {
      {"S", {{1.0, {"NP", "VP"}}}},
      {"NP", {{0.50, {"Det", "NOM"}}, {0.15, {"Name"}}, {0.20, {"NP", "PP"}}, {0.15, {"Pron"}}}},
      {"NOM", {{0.65, {"N"}}, {0.35, {"AP", "NOM"}}}},
      {"AP", {{0.7, {"Adj"}}, {0.3, {"Adv", "Adj"}}}},
      {"VP", {{0.45, {"V", "NP"}}, {0.20, {"Vi"}}, {0.20, {"VP", "PP"}}, {0.15, {"Vs", "Comp", "S"}}}},
      {"PP", {{1.0, {"P", "NP"}}}},
  };
  return g;
}

const std::map<std::string, std::vector<std::string>>& lexicon() {
  static const std::map<std::string, std::vector<std::string>> l = {
      {"Det", {"the", "a", "every", "this", "some"}},
      {"N", {"dog", "cat", "man", "woman", "park", "telescope", "house", "bird", "tree", "child", "book", "car"}},
      {"Name", {"john", "mary", "alice", "bob"}},
      {"Pron", {"she", "he", "they"}},
      {"Adj", {"big", "small", "old", "red", "happy", "green"}},
      {"Adv", {"very", "quite", "rather"}},
      {"V", {"saw", "liked", "found", "chased", "took", "watched"}},
      {"Vi", {"slept", "ran", "smiled", "left"}},
      {"Vs", {"said", "thought", "knew"}},
      {"Comp", {"that"}},
      {"P", {"in", "on", "with", "near", "under"}},
  };
  return l;
}

struct Sampler {
  std::mt19937_64 rng;
  int tokens = 0;
  int budget = 0;

  size_t pick(size_t count) { return static_cast<size_t>(hashparse::uniform01(rng) * static_cast<double>(count)); }

  std::string expand(const std::string& symbol, int depth) {
    if (depth > 30) throw std::length_error("too deep");
    auto lex = lexicon().find(symbol);
    if (lex != lexicon().end()) {
      if (++tokens > budget) throw std::length_error("too long");
      return "(" + symbol + " " + lex->second[pick(lex->second.size())] + ")";
    }
    const auto& rules = grammar().at(symbol);
    double u = hashparse::uniform01(rng), acc = 0.0;
    const Rule* chosen = &rules.back();
    for (const auto& r : rules) {
      acc += r.weight;
      if (u < acc) {
        chosen = &r;
        break;
      }
    }
    std::string out = "(" + symbol;
    for (const auto& child : chosen->rhs) out += " " + expand(child, depth + 1);
    return out + ")";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sample bracketed trees from a fixed six-category PCFG"};
  uint64_t seed = 1;
  int count = 100, min_length = 3, max_length = 20;
  app.add_option("--seed", seed, "random seed");
  app.add_option("--count", count, "number of trees")->check(CLI::PositiveNumber);
  app.add_option("--min-length", min_length, "shortest accepted sentence")->check(CLI::PositiveNumber);
  app.add_option("--max-length", max_length, "longest accepted sentence")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  Sampler sampler{std::mt19937_64(seed)};
  int produced = 0;
  while (produced < count) {
    sampler.tokens = 0;
    sampler.budget = max_length;
    std::string tree;
    try {
      tree = sampler.expand("S", 0);
    } catch (const std::length_error&) {
      continue;
    }
    const int n = sampler.tokens;
    if (n < min_length) continue;
    std::cout << tree << "\n";
    ++produced;
  }
  return 0;
}
