#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gradmask/model.hpp"
#include "gradmask/optim.hpp"
#include "gradmask/synthetic.hpp"
#include "json.hpp"

namespace gradmask {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | file
  std::string path;
  std::string synthetic_kind = "triangle";  // triangle | hopcount | node_triangle
  SyntheticSpec synthetic;
  std::string split_mode = "ratio";  // ratio (80/10/10) | counts
  std::size_t split_train = 500;
  std::size_t split_val = 100;
  std::size_t split_test = 100;
  std::uint64_t split_seed = 0;
  double low_resource_fraction = 1.0;
  std::uint64_t low_resource_seed = 0;
};

struct OptimConfig {
  std::string optimizer = "adamw";  // adamw | adam
  double lr = 1e-3;
  AdamConfig adam;
  ScheduleKind schedule = ScheduleKind::WarmupCosine;
  double warmup_fraction = 0.05;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::string select_metric = "auto";
  std::size_t eval_workers = 1;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  OptimConfig optim;
  TrainConfig train;
  std::string output_dir = "runs/default";

  /// Fully resolved document, defaults included.
  nlohmann::json to_json() const;
  /// Strict: unknown keys and wrong types raise ConfigError naming the
  /// dotted key; missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& doc);
  /// Hash of everything that affects results (the output directory is excluded).
  std::string hash() const;
  /// Throws ConfigError.
  void validate() const;
};

/// Applies "dotted.key=value"; value is parsed as JSON, falling back to a
/// plain string. Throws ConfigError for unknown keys or malformed input.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a JSON config file (comments allowed) and applies overrides in order.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunConfig make_run_config(const nlohmann::json& doc, const std::vector<std::string>& overrides = {});

}  // namespace gradmask
