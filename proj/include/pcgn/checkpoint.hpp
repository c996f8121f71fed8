#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "pcgn/data.hpp"
#include "pcgn/model.hpp"

namespace pcgn {

inline constexpr int kCheckpointVersion = 1;

enum class CheckpointErrorKind { Io, Corrupt, Version, ShapeMismatch };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& message);
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct Checkpoint {
  Model model;
  Vocab vocab;
  FeatureSchema schema;
  std::size_t step = 0;
  nlohmann::json run_config = nlohmann::json::object();
};

/// A single JSON document:
///   {"format": "pcgn-checkpoint", "version": 1, "model": {...}, "vocab": {...},
///    "schema": {...}, "step": N, "run_config": {...},
///    "parameters": [{"name": ..., "shape": [...], "values": [...]}, ...]}
/// Values are shortest round-trip decimal renderings of the IEEE-754 doubles, so loading
/// reproduces every parameter bit for bit.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// CRC-32 of a byte string / file, as 8 lowercase hex digits.
std::string checksum(std::string_view bytes);
std::string file_checksum(const std::filesystem::path& path);

}  // namespace pcgn
