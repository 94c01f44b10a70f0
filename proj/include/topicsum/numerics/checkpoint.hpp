#pragma once

// Checkpoint container shared by the LDA model, the guidance FFN and the
// summarizer.
//
// Layout (all integers little-endian):
//   bytes 0..7   ASCII magic "TSUMCKPT"
//   u32          container format version (kCheckpointFormatVersion)
//   u64          header length N
//   N bytes      UTF-8 JSON header:
//                  {"format_version": 1, "kind": "<artifact kind>",
//                   "meta": {...artifact-specific...},
//                   "tensors": [{"name": "...", "shape": [rows, cols]}, ...]}
//   payload      for each listed tensor in order, rows*cols IEEE-754 f64
//                values, little-endian, row-major
//
// Loading rejects bad magic, unknown versions, truncated payloads and
// trailing bytes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicsum/numerics/tensor.hpp"

namespace topicsum::numerics {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws std::runtime_error on any format violation, or when `expected_kind`
// is non-empty and differs from the stored kind.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = "");

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                  const std::string& expected_kind = "");

}  // namespace topicsum::numerics
