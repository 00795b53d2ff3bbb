#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gradmask/config.hpp"
#include "gradmask/structural_index.hpp"
#include "json.hpp"

namespace gradmask {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitCheckFailed = 3;

struct GlobalOptions {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool force = false;
};

/// Config file (or `base` when none is given), then --set overrides in
/// order, then --seed and --out.
RunConfig resolve_config(const GlobalOptions& g, const nlohmann::json& base = nlohmann::json::object());

/// Creates `dir`. Throws ParameterError if it already holds files and
/// `force` is false.
void prepare_output_dir(const std::string& dir, bool force);

struct TrainOptions {
  std::optional<std::string> resume;  // checkpoint to continue from
  std::optional<std::size_t> stop_after_epoch;
};

/// Writes config.json, run_report.json, metrics.csv, sp_trajectories.csv,
/// best.ckpt and last.ckpt into the output directory.
int cmd_train(const GlobalOptions& g, const TrainOptions& opts, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::string checkpoint;
  std::string split = "test";  // train | val | test
};

int cmd_eval(const GlobalOptions& g, const EvalOptions& opts, std::ostream& out, std::ostream& err);

struct AblateOptions {
  std::string axis;                 // lambda | decay_fn | index | mpnn | pe
  std::vector<std::string> values;  // empty: the axis defaults
  std::size_t workers = 1;
};

std::vector<std::string> default_axis_values(const std::string& axis);
/// Config key that an ablation axis overrides.
std::string axis_key(const std::string& axis);

/// One training run per value, each in its own subdirectory. Writes
/// ablation.csv and prints a table. Failed runs are recorded, not fatal.
int cmd_ablate(const GlobalOptions& g, const AblateOptions& opts, std::ostream& out, std::ostream& err);

struct GradcheckOptions {
  bool inject_fault = false;
  double threshold = 1e-4;
};

struct GradcheckReport {
  std::vector<std::pair<std::string, double>> per_parameter;
  double model_max_error = 0.0;
  double mask_sp_max_error = 0.0;
  std::size_t attempts = 0;
};

/// Config used when gradcheck runs without --config: 2 layers, 2 heads,
/// hidden 8, small positional encoding, no dropout.
nlohmann::json gradcheck_base_config();

/// Full-model gradient check on a 6-node and a 4-node graph in one batch,
/// plus the closed-form mask derivative against central differences.
GradcheckReport run_gradcheck(const RunConfig& cfg, bool inject_fault = false);

int cmd_gradcheck(const GlobalOptions& g, const GradcheckOptions& opts, std::ostream& out, std::ostream& err);

struct InspectOptions {
  std::string checkpoint;
  std::optional<std::string> data;  // dataset file; default regenerates the run's dataset
  std::size_t graph = 0;
};

/// Per layer and head: attention_l{l}_h{h}.csv and mask_l{l}_h{h}.csv, plus
/// psi.csv and attention_mass.csv (mean attention mass per psi bucket).
int cmd_inspect_attention(const GlobalOptions& g, const InspectOptions& opts, std::ostream& out, std::ostream& err);

/// Writes dataset.jsonl built from the data section of the config.
int cmd_gen_synthetic(const GlobalOptions& g, std::ostream& out, std::ostream& err);

/// Attention mass per psi bucket, averaged over valid rows. `attention` and
/// `psi` are n x n row-major; unreachable pairs go to the last bucket.
struct MassBucket {
  std::string bucket;
  double mean_mass = 0.0;
};
std::vector<MassBucket> attention_mass_by_hop(const std::vector<double>& attention, const StructuralIndex& index);

/// Runs `fn`, mapping exceptions to exit codes and printing them to `err`.
int guarded(const std::function<int()>& fn, std::ostream& err);

}  // namespace gradmask
