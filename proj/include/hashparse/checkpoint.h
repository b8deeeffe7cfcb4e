#pragma once

#include <stdexcept>
#include <string>

#include "hashparse/encoder.h"
#include "hashparse/trainer.h"
#include "hashparse/treebank.h"

namespace hashparse {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a checkpoint is used with a configuration whose architecture
// hash differs from the one it was trained with.
class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  TrainConfig config;
  Vocabulary vocab;
  EncoderParams params;
  AdamState adam;
  long step = 0;
};

// Layout: magic "HPCKPT\0\1", uint32 version, uint32 reserved, uint64
// architecture hash, uint64 step, five int32 dims (V, d, L, K, w), float64
// dropout, length-prefixed config text, vocabulary (count, then
// length-prefixed words), then the parameter vector and both Adam moment
// vectors (count-prefixed float64 blocks) and int64 Adam step count. All
// integers and floats are little-endian.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Throws ConfigMismatch naming both hashes when `config` cannot drive the
// checkpoint's parameters.
void check_compatible(const Checkpoint& checkpoint, const TrainConfig& config);

}  // namespace hashparse
