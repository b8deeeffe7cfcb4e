#include "hashparse/treebank.h"

#include <algorithm>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

namespace hashparse {

std::vector<int> Sentence::ids() const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.id);
  return out;
}

ParseError::ParseError(const std::string& what, int line, int column)
    : std::runtime_error(what + " at line " + std::to_string(line) + ", column " +
                         std::to_string(column)),
      message_(what),
      line_(line),
      column_(column) {}

namespace {

struct Lexeme {
  enum Kind { open, close, atom, end } kind;
  std::string text;
  int line;
  int column;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Lexeme next() {
    skip_space();
    if (pos_ >= text_.size()) return {Lexeme::end, "", line_, column_};
    int line = line_, column = column_;
    char c = text_[pos_];
    if (c == '(' || c == ')') {
      advance();
      return {c == '(' ? Lexeme::open : Lexeme::close, std::string(1, c), line, column};
    }
    size_t start = pos_;
    while (pos_ < text_.size()) {
      char d = text_[pos_];
      if (d == '(' || d == ')' || std::isspace(static_cast<unsigned char>(d))) break;
      advance();
    }
    return {Lexeme::atom, std::string(text_.substr(start, pos_ - start)), line, column};
  }

  Lexeme peek() {
    auto saved = std::make_tuple(pos_, line_, column_);
    Lexeme l = next();
    std::tie(pos_, line_, column_) = saved;
    return l;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
  }

  std::string_view text_;
  size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

struct Node {
  std::string label;
  std::string word;  // set for leaves
  bool leaf = false;
  std::vector<std::unique_ptr<Node>> children;
};

// Parses the body of a bracket whose '(' has already been consumed.
std::unique_ptr<Node> parse_bracket(Lexer& lex, const Lexeme& open) {
  auto node = std::make_unique<Node>();
  Lexeme first = lex.peek();
  if (first.kind == Lexeme::atom) {
    node->label = lex.next().text;
  }
  while (true) {
    Lexeme l = lex.next();
    switch (l.kind) {
      case Lexeme::end:
        throw ParseError("unbalanced parentheses: '(' never closed", open.line, open.column);
      case Lexeme::close:
        if (node->children.empty()) throw ParseError("empty tree", open.line, open.column);
        return node;
      case Lexeme::open:
        node->children.push_back(parse_bracket(lex, l));
        break;
      case Lexeme::atom: {
        auto leaf = std::make_unique<Node>();
        leaf->leaf = true;
        leaf->word = l.text;
        node->children.push_back(std::move(leaf));
        break;
      }
    }
  }
}

bool is_preterminal(const Node& node) {
  return node.children.size() == 1 && node.children[0]->leaf;
}

// Returns the inclusive token range covered by `node`, or {-1,-1} if empty.
std::pair<int, int> collect(const Node& node, Sentence& out) {
  if (node.leaf) {
    int index = out.size();
    out.tokens.push_back({node.word, "", 0});
    return {index, index};
  }
  if (is_preterminal(node)) {
    int index = out.size();
    out.tokens.push_back({node.children[0]->word, node.label, 0});
    return {index, index};
  }
  int first = -1, last = -1;
  for (const auto& child : node.children) {
    auto [a, b] = collect(*child, out);
    if (a < 0) continue;
    if (first < 0) first = a;
    last = b;
  }
  if (first >= 0) out.gold.spans.insert({first, last});
  return {first, last};
}

}  // namespace

std::vector<Sentence> parse_sexpr(std::string_view text) {
  Lexer lex(text);
  std::vector<Sentence> out;
  while (true) {
    Lexeme l = lex.next();
    if (l.kind == Lexeme::end) break;
    if (l.kind != Lexeme::open) {
      throw ParseError(l.kind == Lexeme::close ? "unbalanced parentheses: unexpected ')'"
                                               : "expected '(' before '" + l.text + "'",
                       l.line, l.column);
    }
    auto root = parse_bracket(lex, l);
    Sentence sentence;
    collect(*root, sentence);
    if (sentence.tokens.empty()) throw ParseError("empty tree", l.line, l.column);
    sentence.gold.n = sentence.size();
    sentence.gold.spans.insert({0, sentence.size() - 1});
    out.push_back(std::move(sentence));
  }
  return out;
}

namespace {

void print_range(const Sentence& s, const std::vector<Span>& spans, size_t& cursor, int left,
                 int right, std::string& out) {
  // `spans` is sorted by (left asc, right desc); children of the current span
  // follow it in that order.
  out += "(X";
  int pos = left;
  while (pos <= right) {
    out += ' ';
    if (cursor < spans.size() && spans[cursor].left == pos && spans[cursor].right <= right) {
      Span child = spans[cursor++];
      print_range(s, spans, cursor, child.left, child.right, out);
      pos = child.right + 1;
    } else {
      const Token& t = s.tokens[pos];
      out += "(" + (t.pos.empty() ? std::string("X") : t.pos) + " " + t.surface + ")";
      ++pos;
    }
  }
  out += ')';
}

}  // namespace

std::string print_sexpr(const Sentence& sentence) {
  std::vector<Span> spans(sentence.gold.spans.begin(), sentence.gold.spans.end());
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
    return a.left != b.left ? a.left < b.left : a.right > b.right;
  });
  int n = sentence.size();
  if (n == 0) return "";
  std::string out;
  size_t cursor = 0;
  // The root span is always first after sorting.
  if (!spans.empty() && spans[0] == Span{0, n - 1}) cursor = 1;
  // A single-token sentence whose only span is the root prints as a
  // preterminal under a phrase node, which parses back to span (0,0).
  print_range(sentence, spans, cursor, 0, n - 1, out);
  return out;
}

const std::set<std::string>& default_punctuation_tags() {
  static const std::set<std::string> tags = {"``", "''", ".", ",", ":", "-LRB-", "-RRB-", "#", "$"};
  return tags;
}

bool strip_punctuation(Sentence& sentence, const std::set<std::string>& tags) {
  int n = sentence.size();
  std::vector<int> new_index(n, -1);
  Sentence out;
  for (int i = 0; i < n; ++i) {
    if (tags.count(sentence.tokens[i].pos)) continue;
    new_index[i] = out.size();
    out.tokens.push_back(sentence.tokens[i]);
  }
  if (out.tokens.empty()) return false;
  if (out.size() == n) return true;
  // first surviving index at or after i, last surviving at or before i
  std::vector<int> next(n + 1, -1), prev(n, -1);
  for (int i = n - 1; i >= 0; --i) next[i] = new_index[i] >= 0 ? new_index[i] : next[i + 1];
  for (int i = 0; i < n; ++i) prev[i] = new_index[i] >= 0 ? new_index[i] : (i ? prev[i - 1] : -1);
  for (const Span& s : sentence.gold.spans) {
    int l = next[s.left], r = prev[s.right];
    if (l < 0 || r < 0 || l > r) continue;
    out.gold.spans.insert({l, r});
  }
  out.gold.n = out.size();
  out.gold.spans.insert({0, out.size() - 1});
  sentence = std::move(out);
  return true;
}

Vocabulary::Vocabulary() {
  add("[MASK]");
  add("[UNK]");
}

int Vocabulary::add(const std::string& word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  int id = size();
  words_.push_back(word);
  index_.emplace(word, id);
  return id;
}

int Vocabulary::lookup(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  v.words_.clear();
  v.index_.clear();
  for (auto& w : words) v.add(w);
  return v;
}

std::vector<int> mask_augment(std::span<const int> ids, double p_mask, uint64_t seed) {
  std::vector<int> out(ids.begin(), ids.end());
  if (p_mask <= 0.0) return out;
  std::mt19937_64 rng(seed);
  for (auto& id : out) {
    if (uniform01(rng) < p_mask) id = Vocabulary::kMask;
  }
  return out;
}

std::vector<Batch> collate(std::span<const int> lengths, int span_budget, uint64_t seed) {
  if (span_budget < 1) throw std::invalid_argument("span_budget must be at least 1");
  std::vector<int> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with our own draws so the order is stable across standard
  // library implementations.
  for (size_t i = order.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<Batch> batches;
  Batch current;
  for (int index : order) {
    current.items.push_back(index);
    current.total_spans += span_count(lengths[index]);
    if (current.total_spans >= span_budget) {
      batches.push_back(std::move(current));
      current = Batch{};
    }
  }
  if (!current.items.empty()) batches.push_back(std::move(current));
  return batches;
}

std::vector<Batch> collate(const Corpus& corpus, int span_budget, uint64_t seed) {
  std::vector<int> lengths;
  lengths.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) lengths.push_back(s.size());
  return collate(lengths, span_budget, seed);
}

void assign_ids(std::vector<Sentence>& sentences, Vocabulary& vocab, bool grow) {
  for (auto& s : sentences) {
    for (auto& t : s.tokens) t.id = grow ? vocab.add(t.surface) : vocab.lookup(t.surface);
  }
}

std::vector<Sentence> ingest_split(std::string_view text, const IngestOptions& options,
                                   SplitStats& stats) {
  std::vector<Sentence> parsed = parse_sexpr(text);
  std::vector<Sentence> kept;
  stats.read += static_cast<int>(parsed.size());
  for (auto& s : parsed) {
    if (strip_punctuation(s, options.empty_elements) && strip_punctuation(s, options.punctuation)) {
      kept.push_back(std::move(s));
    } else {
      ++stats.discarded;
    }
  }
  stats.kept += static_cast<int>(kept.size());
  return kept;
}

std::vector<Sentence> read_treebank_file(const std::string& path, const IngestOptions& options,
                                         SplitStats& stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open treebank file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return ingest_split(buffer.str(), options, stats);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.message(), e.line(), e.column());
  }
}

std::string format_ingest_report(std::span<const SplitStats> splits, int vocab_size) {
  std::ostringstream out;
  int discarded = 0;
  for (const auto& s : splits) {
    out << s.name << ": read " << s.read << ", kept " << s.kept << ", discarded " << s.discarded
        << "\n";
    discarded += s.discarded;
  }
  out << "discarded total: " << discarded << "\n";
  out << "vocabulary size: " << vocab_size << "\n";
  return out.str();
}

}  // namespace hashparse
