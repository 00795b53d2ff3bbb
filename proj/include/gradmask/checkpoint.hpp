#pragma once

#include <string>
#include <vector>

#include "gradmask/tensor.hpp"
#include "json.hpp"

namespace gradmask {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Versioned container: magic line, 8-byte little-endian header length,
/// JSON header (version, config hash, tensor names/shapes, metadata), raw
/// little-endian float64 payloads in declared order, then an FNV-1a
/// checksum of everything before it.
struct Checkpoint {
  std::string config_hash;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor& tensor(const std::string& name) const;
};

/// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws IncompatibleCheckpointError on a version mismatch and
/// CheckpointError on any corruption; never returns partial state.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gradmask
