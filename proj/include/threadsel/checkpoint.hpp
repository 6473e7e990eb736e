#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "threadsel/corpus.hpp"
#include "threadsel/extraction.hpp"
#include "threadsel/model.hpp"

namespace threadsel {

// Binary layout, all integers little-endian:
//   "TSCK" | u32 version | u64 n + n bytes of JSON metadata | u64 tensor count
//   per tensor: u64 n + name | u64 rank | u64 dims[rank] | f64 values (row-major)
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Everything needed to score dialogues with a trained model.
struct Checkpoint {
  ThreadEncoderModel model;
  Tokenizer tokenizer;
  ThreadMode mode = ThreadMode::kDependency;
  ExtractionConfig extraction;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace threadsel
