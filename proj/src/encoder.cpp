#include "hashparse/encoder.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "hashparse/types.h"
#include "binary_io.h"

namespace hashparse {

using detail::get_le;
using detail::put_le;

namespace {

std::string tap_name(int layer, int tap) { return "layer" + std::to_string(layer) + ".tap" + std::to_string(tap); }

std::vector<ParamBlock> layout(const EncoderDims& dims) {
  std::vector<ParamBlock> out;
  size_t offset = 0;
  auto push = [&](std::string name, int rows, int cols) {
    out.push_back({std::move(name), offset, rows, cols});
    offset += static_cast<size_t>(rows) * cols;
  };
  push("embedding", dims.vocab_size, dims.dim);
  for (int l = 0; l < dims.layers; ++l) {
    for (int t = 0; t <= 2 * dims.window; ++t) push(tap_name(l, t), dims.dim, dims.dim);
    push("layer" + std::to_string(l) + ".bias", 1, dims.dim);
  }
  push("hash.query", dims.bits * dims.head_dim(), dims.dim);
  push("hash.key", dims.bits * dims.head_dim(), dims.dim);
  return out;
}

void check_dims(const EncoderDims& dims) {
  if (dims.dim < 1 || dims.bits < 1 || dims.bits > dims.dim || dims.layers < 0 ||
      dims.vocab_size < 1 || dims.window < 0) {
    throw std::invalid_argument("encoder dimensions must satisfy d >= K >= 1, L >= 0, V >= 1");
  }
}

}  // namespace

size_t parameter_count(const EncoderDims& dims) {
  auto blocks = layout(dims);
  return blocks.back().offset + blocks.back().size();
}

EncoderParams EncoderParams::zeros(const EncoderDims& dims, double dropout_rate) {
  check_dims(dims);
  EncoderParams p;
  p.dims = dims;
  p.dropout_rate = dropout_rate;
  p.values.assign(parameter_count(dims), 0.0);
  return p;
}

EncoderParams EncoderParams::random(const EncoderDims& dims, double dropout_rate, uint64_t seed) {
  EncoderParams p = zeros(dims, dropout_rate);
  std::mt19937_64 rng(seed);
  const double fan_in = 1.0 / std::sqrt(static_cast<double>(dims.dim));
  const double tap_fan_in = 1.0 / std::sqrt(static_cast<double>((2 * dims.window + 1) * dims.dim));
  for (const auto& b : p.blocks()) {
    double scale = fan_in;
    if (b.name == "embedding") {
      scale = 1.0;
    } else if (b.name.ends_with(".bias")) {
      scale = 0.0;
    } else if (b.name.find(".tap") != std::string::npos) {
      scale = tap_fan_in;
    }
    for (double& x : p.view(b)) x = scale * standard_normal(rng);
  }
  return p;
}

std::vector<ParamBlock> EncoderParams::blocks() const { return layout(dims); }

ParamBlock EncoderParams::block(const std::string& name) const {
  for (auto& b : layout(dims)) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block named " + name);
}

std::span<const double> EncoderParams::embedding() const { return view(block("embedding")); }
std::span<const double> EncoderParams::layer_tap(int layer, int tap) const { return view(block(tap_name(layer, tap))); }
std::span<const double> EncoderParams::layer_bias(int layer) const {
  return view(block("layer" + std::to_string(layer) + ".bias"));
}
std::span<const double> EncoderParams::hash_query() const { return view(block("hash.query")); }
std::span<const double> EncoderParams::hash_key() const { return view(block("hash.key")); }

void EncoderParams::check_finite() const {
  for (const auto& b : blocks()) {
    for (double x : view(b)) {
      if (!std::isfinite(x)) throw std::domain_error("non-finite value in parameter " + b.name);
    }
  }
}

std::vector<double> dropout_mask(size_t count, double rate, uint64_t view_seed, int stage) {
  std::vector<double> mask(count, 1.0);
  if (rate <= 0.0) return mask;
  std::mt19937_64 rng(derive_seed(view_seed, 0xd509u, static_cast<uint64_t>(stage)));
  double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep;
  return mask;
}

std::vector<double> shift_matrix(int n, int offset) {
  std::vector<double> a(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (i + offset >= 0 && i + offset < n) a[static_cast<size_t>(i) * n + i + offset] = 1.0;
  }
  return a;
}

HiddenStates encode(std::span<const int> ids, const EncoderParams& params, uint64_t view_seed) {
  params.check_finite();
  const int n = static_cast<int>(ids.size());
  const int d = params.dims.dim;
  HiddenStates out{n, d, std::vector<double>(static_cast<size_t>(n) * d), view_seed};
  auto emb = params.embedding();
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= params.dims.vocab_size) {
      throw std::out_of_range("token id outside vocabulary: " + std::to_string(ids[i]));
    }
    std::copy_n(emb.data() + static_cast<size_t>(ids[i]) * d, d, out.h.data() + static_cast<size_t>(i) * d);
  }
  auto apply_dropout = [&](int stage) {
    auto mask = dropout_mask(out.h.size(), params.dropout_rate, view_seed, stage);
    for (size_t i = 0; i < out.h.size(); ++i) out.h[i] *= mask[i];
  };
  apply_dropout(0);
  const int w = params.dims.window;
  std::vector<double> u(out.h.size());
  for (int l = 0; l < params.dims.layers; ++l) {
    auto b = params.layer_bias(l);
    for (int i = 0; i < n; ++i) std::copy(b.begin(), b.end(), u.begin() + static_cast<size_t>(i) * d);
    for (int t = 0; t <= 2 * w; ++t) {
      auto tap = params.layer_tap(l, t);
      for (int i = 0; i < n; ++i) {
        const int j = i + t - w;
        if (j < 0 || j >= n) continue;
        for (int o = 0; o < d; ++o) {
          double acc = 0.0;
          for (int c = 0; c < d; ++c) acc += out.h[static_cast<size_t>(j) * d + c] * tap[static_cast<size_t>(o) * d + c];
          u[static_cast<size_t>(i) * d + o] += acc;
        }
      }
    }
    for (size_t i = 0; i < u.size(); ++i) out.h[i] += std::tanh(u[i]);
    apply_dropout(l + 1);
  }
  return out;
}

ScoreTable::ScoreTable(int bits, int n, std::vector<double> scores)
    : bits_(bits), n_(n), s_(std::move(scores)) {
  const size_t side = static_cast<size_t>(n) + 1;
  p_.assign(static_cast<size_t>(bits) * side * side, 0.0);
  for (int k = 0; k < bits; ++k) {
    double* plane = p_.data() + static_cast<size_t>(k) * side * side;
    for (int a = 1; a <= n; ++a) {
      double row = 0.0;
      for (int b = 1; b <= n; ++b) {
        row += score(k, a - 1, b - 1);
        plane[a * side + b] = plane[(a - 1) * side + b] + row;
      }
    }
  }
}

double ScoreTable::rectangle_sum(int k, int i0, int i1, int j0, int j1) const {
  return prefix(k, i1 + 1, j1 + 1) - prefix(k, i0, j1 + 1) - prefix(k, i1 + 1, j0) + prefix(k, i0, j0);
}

namespace {

// Projects every row of h through the stacked per-bit matrices: out is
// n x (K * head_dim).
std::vector<double> project(const HiddenStates& h, std::span<const double> weights, int rows) {
  std::vector<double> out(static_cast<size_t>(h.n) * rows, 0.0);
  for (int i = 0; i < h.n; ++i) {
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int t = 0; t < h.d; ++t) acc += h.h[static_cast<size_t>(i) * h.d + t] * weights[static_cast<size_t>(r) * h.d + t];
      out[static_cast<size_t>(i) * rows + r] = acc;
    }
  }
  return out;
}

}  // namespace

ScoreTable zero_order_scores(const HiddenStates& h, const EncoderParams& params) {
  const int bits = params.dims.bits;
  const int dk = params.dims.head_dim();
  const int rows = bits * dk;
  if (h.d != params.dims.dim) throw std::invalid_argument("hidden size does not match parameters");
  auto q = project(h, params.hash_query(), rows);
  auto key = project(h, params.hash_key(), rows);
  const double norm = 1.0 / std::sqrt(static_cast<double>(dk));
  const int n = h.n;
  std::vector<double> s(static_cast<size_t>(bits) * n * n);
  for (int k = 0; k < bits; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int t = 0; t < dk; ++t) {
          acc += q[static_cast<size_t>(i) * rows + k * dk + t] * key[static_cast<size_t>(j) * rows + k * dk + t];
        }
        s[(static_cast<size_t>(k) * n + i) * n + j] = acc * norm;
      }
    }
  }
  return ScoreTable(bits, n, std::move(s));
}

double first_order_score(const ScoreTable& table, int k, int left, int right, int split) {
  if (!(0 <= left && left <= split && split < right && right < table.size()) || k < 0 ||
      k >= table.bits()) {
    throw std::invalid_argument("first_order_score requires 0 <= left <= split < right < n");
  }
  double area = static_cast<double>(split - left + 1) * (right - split);
  return table.rectangle_sum(k, left, split, split + 1, right) / area;
}

double direct_first_order_score(const HiddenStates& h, const EncoderParams& params, int k, int left,
                                int right, int split) {
  const int d = h.d;
  const int dk = params.dims.head_dim();
  std::vector<double> lhs(d, 0.0), rhs(d, 0.0);
  for (int i = left; i <= split; ++i)
    for (int t = 0; t < d; ++t) lhs[t] += h.h[static_cast<size_t>(i) * d + t];
  for (int j = split + 1; j <= right; ++j)
    for (int t = 0; t < d; ++t) rhs[t] += h.h[static_cast<size_t>(j) * d + t];
  for (int t = 0; t < d; ++t) {
    lhs[t] /= (split - left + 1);
    rhs[t] /= (right - split);
  }
  auto wq = params.hash_query();
  auto wk = params.hash_key();
  double acc = 0.0;
  for (int r = k * dk; r < (k + 1) * dk; ++r) {
    double a = 0.0, b = 0.0;
    for (int t = 0; t < d; ++t) {
      a += wq[static_cast<size_t>(r) * d + t] * lhs[t];
      b += wk[static_cast<size_t>(r) * d + t] * rhs[t];
    }
    acc += a * b;
  }
  return acc / std::sqrt(static_cast<double>(dk));
}

double leaf_score(const ScoreTable& table, int k, int position) { return table.score(k, position, position); }

namespace {

constexpr char kVectorMagic[8] = {'H', 'P', 'V', 'E', 'C', 'T', 'O', 'R'};
constexpr uint32_t kVectorVersion = 1;

}  // namespace

void write_external_vectors(const std::string& path, std::span<const HiddenStates> sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw VectorFileError("cannot open vector file for writing: " + path);
  for (const auto& s : sentences) {
    out.write(kVectorMagic, sizeof(kVectorMagic));
    put_le<uint32_t>(out, kVectorVersion);
    put_le<uint32_t>(out, 0);
    put_le<uint64_t>(out, static_cast<uint64_t>(s.n));
    put_le<uint64_t>(out, static_cast<uint64_t>(s.d));
    for (double x : s.h) put_le<double>(out, x);
  }
  if (!out) throw VectorFileError("write failed: " + path);
}

std::vector<HiddenStates> load_external_vectors(const std::string& path, int expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VectorFileError("cannot open vector file: " + path);
  std::vector<HiddenStates> out;
  while (true) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() == 0) break;
    if (in.gcount() != sizeof(magic)) throw VectorFileError("truncated record header in " + path);
    if (std::memcmp(magic, kVectorMagic, sizeof(magic)) != 0) {
      throw VectorFileError("bad magic in vector file " + path);
    }
    uint32_t version = 0, reserved = 0;
    uint64_t n = 0, d = 0;
    if (!get_le(in, version) || !get_le(in, reserved) || !get_le(in, n) || !get_le(in, d)) {
      throw VectorFileError("truncated record header in " + path);
    }
    if (version != kVectorVersion) {
      throw VectorFileError("unsupported vector file version " + std::to_string(version));
    }
    if (static_cast<int64_t>(d) != expected_dim) {
      throw VectorFileError("dimension mismatch in " + path + ": expected " +
                            std::to_string(expected_dim) + ", got " + std::to_string(d));
    }
    HiddenStates h{static_cast<int>(n), static_cast<int>(d), std::vector<double>(n * d), 0};
    for (double& x : h.h) {
      if (!get_le(in, x)) throw VectorFileError("truncated vector data in " + path);
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace hashparse
