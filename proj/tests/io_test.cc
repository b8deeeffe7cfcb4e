#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hashparse/checkpoint.h"
#include "hashparse/render.h"
#include "hashparse/selfcheck.h"

namespace hashparse {
namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config.bits = 4;
  c.config.dim = 6;
  c.config.layers = 1;
  c.vocab = Vocabulary::from_words({"[MASK]", "[UNK]", "the", "dog"});
  c.params = EncoderParams::random(c.config.dims(c.vocab.size()), c.config.dropout, 5);
  c.adam = AdamState::zeros(c.params.values.size());
  c.adam.m[3] = 0.25;
  c.adam.v[7] = 1e-9;
  c.adam.steps = 12;
  c.step = 12;
  return c;
}

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint c = sample_checkpoint();
  Checkpoint back = deserialize_checkpoint(serialize_checkpoint(c));
  EXPECT_EQ(back.params.values, c.params.values);
  EXPECT_EQ(back.params.dims, c.params.dims);
  EXPECT_EQ(back.params.dropout_rate, c.params.dropout_rate);
  EXPECT_EQ(back.adam.m, c.adam.m);
  EXPECT_EQ(back.adam.v, c.adam.v);
  EXPECT_EQ(back.adam.steps, 12);
  EXPECT_EQ(back.step, 12);
  EXPECT_EQ(back.vocab.words(), c.vocab.words());
  EXPECT_EQ(format_config(back.config), format_config(c.config));
}

TEST(Checkpoint, FileRoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "hashparse_io_test.ckpt";
  Checkpoint c = sample_checkpoint();
  save_checkpoint(path.string(), c);
  EXPECT_EQ(load_checkpoint(path.string()).params.values, c.params.values);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), CheckpointError);
}

TEST(Checkpoint, CorruptionIsDetected) {
  std::string bytes = serialize_checkpoint(sample_checkpoint());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointError);
  for (size_t cut : {size_t{4}, size_t{20}, bytes.size() / 2}) {
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, cut)), CheckpointError) << "cut at " << cut;
  }
}

TEST(Checkpoint, MismatchedConfigNamesBothHashes) {
  Checkpoint c = sample_checkpoint();
  EXPECT_NO_THROW(check_compatible(c, c.config));
  TrainConfig other = c.config;
  other.lr = 0.5;  // optimizer settings do not touch the architecture
  EXPECT_NO_THROW(check_compatible(c, other));
  other.bits = 5;
  try {
    check_compatible(c, other);
    FAIL();
  } catch (const ConfigMismatch& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("config hash mismatch"), std::string::npos);
    std::ostringstream have;
    have << std::hex << c.config.architecture_hash();
    EXPECT_NE(what.find(have.str()), std::string::npos);
  }
}

TEST(Render, CodeHex) {
  EXPECT_EQ(code_hex({1, -1, 1, 1}), "B");
  EXPECT_EQ(code_hex({-1, -1, -1, -1}), "0");
  EXPECT_EQ(code_hex({1}), "1");
  // Five bits pad to two digits: 1 0000.
  EXPECT_EQ(code_hex({1, -1, -1, -1, -1}), "10");
  EXPECT_EQ(code_hex(Code(20, 1)), "FFFFF");
  EXPECT_EQ(code_hex({-1, 1, -1, 1, 1, -1, 1, -1}), "5A");
}

TEST(Render, SingleTokenTree) {
  BinaryTree t{1, {{0, 0, -1, {1, 1, 1, 1, 1, 1, 1, 1}}}, 0.0};
  std::vector<std::string> words = {"word"};
  EXPECT_EQ(render_tree(t, words, TreeFormat::codes), "(FF word)");
  EXPECT_EQ(render_tree(t, words, TreeFormat::brackets), "(X word)");
}

TEST(Render, BracketsReparseToSameSpans) {
  std::vector<std::string> words = {"a", "b", "c", "d"};
  // ((a b) (c d)) in pre-order.
  BinaryTree t{4,
               {{0, 3, 1, {1}}, {0, 1, 0, {-1}}, {0, 0, -1, {1}}, {1, 1, -1, {1}}, {2, 3, 2, {1}}, {2, 2, -1, {-1}},
                {3, 3, -1, {1}}},
               0.0};
  EXPECT_EQ(render_tree(t, words, TreeFormat::brackets), "(X (X (X a) (X b)) (X (X c) (X d)))");
  EXPECT_EQ(render_tree(t, words, TreeFormat::codes), "(1 (0 (1 a) (1 b)) (1 (0 c) (1 d)))");
  auto parsed = parse_sexpr(render_tree(t, words, TreeFormat::brackets));
  ASSERT_EQ(parsed.size(), 1u);
  std::set<Span> expected;
  for (const Span& s : t.spans()) expected.insert(s);
  EXPECT_EQ(parsed[0].gold.spans, expected);
  std::vector<std::string> short_words = {"a"};
  EXPECT_THROW(render_tree(t, short_words, TreeFormat::brackets), std::invalid_argument);
}

TEST(Selfcheck, PassesOnThisBuild) {
  oracle::SelfcheckReport r = oracle::run_selfcheck({5, 2, 50, 1});
  std::string log;
  for (const auto& line : r.lines) log += line + "\n";
  EXPECT_TRUE(r.ok()) << log;
  EXPECT_GT(r.checks, 0);
}

}  // namespace
}  // namespace hashparse
