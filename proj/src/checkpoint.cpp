#include "hashparse/checkpoint.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include "binary_io.h"

namespace hashparse {

using detail::get_le;
using detail::put_le;

namespace {

constexpr char kMagic[8] = {'H', 'P', 'C', 'K', 'P', 'T', '\0', '\1'};
constexpr uint32_t kVersion = 1;

void put_string(std::ostream& out, const std::string& s) {
  put_le<uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  put_le<uint64_t>(out, v.size());
  for (double x : v) put_le<double>(out, x);
}

template <typename T>
T take(std::istream& in, const char* what) {
  T value{};
  if (!get_le(in, value)) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  return value;
}

std::string take_string(std::istream& in, const char* what) {
  auto size = take<uint64_t>(in, what);
  if (size > (1u << 30)) throw CheckpointError(std::string("implausible length for ") + what);
  std::string s(size, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(size))) {
    throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  return s;
}

std::vector<double> take_doubles(std::istream& in, const char* what, size_t expected) {
  auto size = take<uint64_t>(in, what);
  if (size != expected) {
    throw CheckpointError(std::string(what) + " has " + std::to_string(size) + " entries, expected " +
                          std::to_string(expected));
  }
  std::vector<double> v(size);
  for (double& x : v) x = take<double>(in, what);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof(kMagic));
  put_le<uint32_t>(out, kVersion);
  put_le<uint32_t>(out, 0);
  put_le<uint64_t>(out, c.config.architecture_hash());
  put_le<uint64_t>(out, static_cast<uint64_t>(c.step));
  const EncoderDims& d = c.params.dims;
  for (int v : {d.vocab_size, d.dim, d.layers, d.bits, d.window}) put_le<int32_t>(out, v);
  put_le<double>(out, c.params.dropout_rate);
  put_string(out, format_config(c.config));
  put_le<uint64_t>(out, c.vocab.words().size());
  for (const auto& w : c.vocab.words()) put_string(out, w);
  put_doubles(out, c.params.values);
  put_doubles(out, c.adam.m);
  put_doubles(out, c.adam.v);
  put_le<int64_t>(out, c.adam.steps);
  return out.str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  auto version = take<uint32_t>(in, "version");
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  take<uint32_t>(in, "header");
  auto hash = take<uint64_t>(in, "architecture hash");
  Checkpoint c;
  c.step = static_cast<long>(take<uint64_t>(in, "step"));
  EncoderDims dims;
  dims.vocab_size = take<int32_t>(in, "dimensions");
  dims.dim = take<int32_t>(in, "dimensions");
  dims.layers = take<int32_t>(in, "dimensions");
  dims.bits = take<int32_t>(in, "dimensions");
  dims.window = take<int32_t>(in, "dimensions");
  double dropout = take<double>(in, "dropout");
  try {
    c.config = parse_config(take_string(in, "config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("embedded config is invalid: ") + e.what());
  }
  if (c.config.architecture_hash() != hash) throw CheckpointError("embedded config does not match stored hash");
  if (c.config.dims(dims.vocab_size) != dims) throw CheckpointError("dimension block disagrees with embedded config");
  auto words = take<uint64_t>(in, "vocabulary");
  std::vector<std::string> list;
  for (uint64_t i = 0; i < words; ++i) list.push_back(take_string(in, "vocabulary"));
  c.vocab = Vocabulary::from_words(std::move(list));
  if (c.vocab.size() != dims.vocab_size) throw CheckpointError("vocabulary size disagrees with dimension block");
  c.params = EncoderParams::zeros(dims, dropout);
  const size_t count = c.params.values.size();
  c.params.values = take_doubles(in, "parameters", count);
  c.adam.m = take_doubles(in, "first moments", count);
  c.adam.v = take_doubles(in, "second moments", count);
  c.adam.steps = static_cast<long>(take<int64_t>(in, "optimizer steps"));
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return deserialize_checkpoint(buffer.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

void check_compatible(const Checkpoint& checkpoint, const TrainConfig& config) {
  uint64_t have = checkpoint.config.architecture_hash(), want = config.architecture_hash();
  if (have != want) {
    std::ostringstream msg;
    msg << "config hash mismatch: checkpoint " << std::hex << have << ", configuration " << want;
    throw ConfigMismatch(msg.str());
  }
}

}  // namespace hashparse
