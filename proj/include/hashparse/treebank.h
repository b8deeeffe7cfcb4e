#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hashparse/types.h"

namespace hashparse {

struct Token {
  std::string surface;
  std::string pos;
  int id = 0;
};

// Unlabeled gold bracketing. Spans may be non-binary but always nest.
struct GoldTree {
  std::set<Span> spans;
  int n = 0;
};

struct Sentence {
  std::vector<Token> tokens;
  GoldTree gold;

  int size() const { return static_cast<int>(tokens.size()); }
  std::vector<int> ids() const;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  int line_;
  int column_;
};

// Reads PTB-style bracketed trees, one tree per top-level expression.
// Preterminals "(TAG word)" become tokens; every other bracket becomes a span
// over the tokens it dominates. Unary chains collapse into one span.
std::vector<Sentence> parse_sexpr(std::string_view text);

// Writes a sentence back as a bracketed tree with placeholder label "X" on
// every phrase node. parse_sexpr(print_sexpr(s)) recovers tokens and spans.
std::string print_sexpr(const Sentence& sentence);

const std::set<std::string>& default_punctuation_tags();

// Removes tokens whose POS tag is in `tags` and re-indexes the gold spans.
// Returns false when nothing survives; `sentence` is left untouched then.
bool strip_punctuation(Sentence& sentence, const std::set<std::string>& tags);

class Vocabulary {
 public:
  static constexpr int kMask = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  int add(const std::string& word);
  int lookup(const std::string& word) const;
  const std::string& word(int id) const { return words_.at(id); }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  static Vocabulary from_words(std::vector<std::string> words);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct Corpus {
  std::vector<Sentence> sentences;
  Vocabulary vocab;
};

// Replaces each position by Vocabulary::kMask independently with probability
// p_mask. Deterministic in (ids, p_mask, seed).
std::vector<int> mask_augment(std::span<const int> ids, double p_mask, uint64_t seed);

struct Batch {
  std::vector<int> items;
  int total_spans = 0;
};

inline int span_count(int n) { return 2 * n - 1; }

// Shuffles sentence indices by seed and greedily fills batches until the
// accumulated span count reaches span_budget. The last batch may fall short.
std::vector<Batch> collate(std::span<const int> lengths, int span_budget, uint64_t seed);
std::vector<Batch> collate(const Corpus& corpus, int span_budget, uint64_t seed);

struct IngestOptions {
  std::set<std::string> punctuation = default_punctuation_tags();
  // Empty elements (PTB traces) are always dropped before punctuation.
  std::set<std::string> empty_elements = {"-NONE-"};
};

struct SplitStats {
  std::string name;
  int read = 0;
  int kept = 0;
  int discarded = 0;
};

// Assigns token ids against `vocab`. When `grow` is set unseen words are
// added, otherwise they map to UNK.
void assign_ids(std::vector<Sentence>& sentences, Vocabulary& vocab, bool grow);

// Parses, strips and indexes one split.
std::vector<Sentence> ingest_split(std::string_view text, const IngestOptions& options,
                                   SplitStats& stats);

std::vector<Sentence> read_treebank_file(const std::string& path, const IngestOptions& options,
                                         SplitStats& stats);

std::string format_ingest_report(std::span<const SplitStats> splits, int vocab_size);

}  // namespace hashparse
