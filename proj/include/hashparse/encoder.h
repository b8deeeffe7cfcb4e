#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hashparse {

struct EncoderDims {
  int vocab_size = 0;
  int dim = 0;     // hidden size d
  int layers = 0;  // mixing layers L
  int bits = 0;    // code length K
  int window = 1;  // mixing reaches this many neighbours on each side

  // Rows per bit in the query/key matrices, ceil(d / K).
  int head_dim() const { return (dim + bits - 1) / bits; }
  bool operator==(const EncoderDims&) const = default;
};

// One named block inside the flat parameter vector.
struct ParamBlock {
  std::string name;
  size_t offset = 0;
  int rows = 0;
  int cols = 0;
  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

// Trainable weights stored contiguously so optimizers and checkpoints can
// treat them as one vector. Blocks, in order:
//   embedding                 vocab_size x d
//   layer<i>.tap<t>           d x d            (t = 0..2w, reading position i + t - w)
//   layer<i>.bias             1 x d
//   hash.query, hash.key      (K * head_dim) x d
struct EncoderParams {
  EncoderDims dims;
  double dropout_rate = 0.0;
  std::vector<double> values;

  static EncoderParams zeros(const EncoderDims& dims, double dropout_rate = 0.0);
  static EncoderParams random(const EncoderDims& dims, double dropout_rate, uint64_t seed);

  std::vector<ParamBlock> blocks() const;
  ParamBlock block(const std::string& name) const;

  std::span<double> view(const ParamBlock& b) { return {values.data() + b.offset, b.size()}; }
  std::span<const double> view(const ParamBlock& b) const {
    return {values.data() + b.offset, b.size()};
  }
  std::span<const double> embedding() const;
  std::span<const double> layer_tap(int layer, int tap) const;
  std::span<const double> layer_bias(int layer) const;
  std::span<const double> hash_query() const;
  std::span<const double> hash_key() const;

  // Throws std::domain_error naming the first block with a non-finite entry.
  void check_finite() const;
};

size_t parameter_count(const EncoderDims& dims);

struct HiddenStates {
  int n = 0;
  int d = 0;
  std::vector<double> h;  // n x d row-major
  uint64_t view_seed = 0;

  std::span<const double> row(int i) const { return {h.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)}; }
};

// Inverted-dropout multipliers (0 or 1/(1-rate)) for one activation stage.
std::vector<double> dropout_mask(size_t count, double rate, uint64_t view_seed, int stage);

// n x n matrix with a one at (i, i + offset) wherever that column exists.
std::vector<double> shift_matrix(int n, int offset);

// Embedding lookup followed by the mixing layers; dropout is drawn from
// view_seed. With dropout_rate == 0 the result does not depend on the seed.
HiddenStates encode(std::span<const int> ids, const EncoderParams& params, uint64_t view_seed);

// Per-bit zero-order scores s[k][i][j] over the full n x n grid and their
// inclusive 2-D prefix sums.
class ScoreTable {
 public:
  ScoreTable() = default;
  ScoreTable(int bits, int n, std::vector<double> scores);

  int bits() const { return bits_; }
  int size() const { return n_; }
  double score(int k, int i, int j) const { return s_[(static_cast<size_t>(k) * n_ + i) * n_ + j]; }
  // prefix(k, a, b) = sum of score(k, i, j) over i < a, j < b.
  double prefix(int k, int a, int b) const {
    return p_[(static_cast<size_t>(k) * (n_ + 1) + a) * (n_ + 1) + b];
  }
  // Sum over i0 <= i <= i1, j0 <= j <= j1.
  double rectangle_sum(int k, int i0, int i1, int j0, int j1) const;
  const std::vector<double>& scores() const { return s_; }
  const std::vector<double>& prefix_table() const { return p_; }

 private:
  int bits_ = 0;
  int n_ = 0;
  std::vector<double> s_;
  std::vector<double> p_;
};

ScoreTable zero_order_scores(const HiddenStates& h, const EncoderParams& params);

// Mean of score(k, i, j) over left <= i <= split < j <= right, in O(1).
double first_order_score(const ScoreTable& table, int k, int left, int right, int split);

// The same quantity from averaged child representations; O((r-l) d) per call.
double direct_first_order_score(const HiddenStates& h, const EncoderParams& params, int k, int left,
                                int right, int split);

double leaf_score(const ScoreTable& table, int k, int position);

class VectorFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector file: a sequence of records, one per sentence. Each record is the
// 8-byte magic "HPVECTOR", uint32 version, uint32 reserved, uint64 n,
// uint64 d, then n*d little-endian binary64 values, row-major.
void write_external_vectors(const std::string& path, std::span<const HiddenStates> sentences);
std::vector<HiddenStates> load_external_vectors(const std::string& path, int expected_dim);

}  // namespace hashparse
