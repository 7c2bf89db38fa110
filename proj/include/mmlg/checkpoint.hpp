#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mmlg/tensor.hpp"
#include "mmlg/trainer.hpp"
#include "mmlg/util.hpp"

namespace mmlg {

// Checkpoint file: magic "MMLG", u32 version, length-prefixed config text,
// 32-byte vocabulary hash, parameter table (name, shape, raw little-endian
// f32 data), optimizer table, u64 step counter. The metric history CSV is
// written alongside as <path>.metrics.csv.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::string config_text;
  Sha256Digest vocab_hash{};
  std::vector<std::pair<std::string, Tensor<float>>> params;
  OptimizerState optimizer;
  std::uint64_t step_counter = 0;
  std::string metric_history_csv;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

Checkpoint load_checkpoint(const std::filesystem::path& path);
// Verifies the stored vocabulary hash and throws CheckpointError(hash) on
// mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Sha256Digest& expected_vocab);

Checkpoint make_checkpoint(const Model<float>& model, const OptimizerState& opt,
                           std::uint64_t step_counter, const std::string& config_text,
                           const Sha256Digest& vocab_hash, const std::string& metric_history_csv);

// Copies checkpoint parameter values into the model (names and shapes must
// match the model's enumeration exactly).
void apply_checkpoint(Model<float>& model, const Checkpoint& ckpt);

}  // namespace mmlg
