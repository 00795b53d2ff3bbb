#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gradmask/batch.hpp"
#include "gradmask/checkpoint.hpp"
#include "gradmask/config.hpp"
#include "gradmask/metrics.hpp"
#include "gradmask/model.hpp"
#include "gradmask/optim.hpp"
#include "json.hpp"

namespace gradmask {

/// Epoch 0 is the untrained model; epoch e >= 1 follows e passes over train.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  Metrics val;
  Metrics test;
};

struct SpRecord {
  std::size_t epoch = 0;
  std::size_t layer = 0;
  std::size_t head = 0;
  double sp = 0.0;
};

struct RunReport {
  std::string status = "ok";  // ok | diverged
  std::string error;
  std::string config_hash;
  std::string task;
  std::string select_metric;
  bool higher_is_better = true;
  std::size_t parameter_count = 0;
  std::size_t epochs_completed = 0;
  std::size_t best_epoch = 0;
  std::optional<double> best_val;
  Metrics test_at_best;
  std::vector<EpochRecord> history;
  std::vector<SpRecord> sp_trajectories;
  double wall_time_seconds = 0.0;
  std::size_t peak_memory_bytes = 0;

  /// Timing fields vary between identical runs; leave them out to compare
  /// reports for determinism.
  nlohmann::json to_json(bool include_timing = true) const;
};

nlohmann::json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

/// The whole dataset named by the data section, before splitting.
Dataset load_run_dataset(const RunConfig& cfg);

/// Generates or loads the dataset, splits it and applies the low-resource
/// fraction to the training split.
DatasetSplit load_run_data(const RunConfig& cfg);

class Trainer {
 public:
  /// Called after each completed epoch; `improved` marks a new best epoch.
  using EpochCallback = std::function<void(const EpochRecord&, bool improved, const Trainer&)>;

  Trainer(RunConfig cfg, const DatasetSplit& data);

  /// Continues from a checkpoint written by snapshot(). Throws
  /// IncompatibleCheckpointError if it belongs to another config.
  void restore(const Checkpoint& ckpt);
  Checkpoint snapshot() const;

  /// Trains until cfg.train.epochs or until `stop_after_epoch` epochs in
  /// total have completed, whichever is first.
  RunReport run(std::size_t stop_after_epoch = std::numeric_limits<std::size_t>::max(),
                const EpochCallback& on_epoch = {});

  Metrics evaluate(const std::vector<GraphBatch>& batches) const;

  const GradformerModel& model() const { return model_; }
  GradformerModel& model() { return model_; }
  const RunConfig& config() const { return cfg_; }
  const RunReport& report() const { return report_; }
  std::size_t epoch() const { return epoch_; }
  const std::vector<GraphBatch>& val_batches() const { return val_batches_; }
  const std::vector<GraphBatch>& test_batches() const { return test_batches_; }
  const Schedule& schedule() const { return schedule_; }

 private:
  void record_epoch(EpochRecord rec);
  void record_start_points();
  double train_epoch();

  RunConfig cfg_;
  TaskSpec task_;
  SelectionMetric select_;
  std::vector<PreparedGraph> train_;
  std::vector<GraphBatch> val_batches_;
  std::vector<GraphBatch> test_batches_;
  GradformerModel model_;
  std::vector<NamedParameter> params_;
  OptimizerState opt_;
  Schedule schedule_;
  SplitMix64 rng_;
  std::size_t epoch_ = 0;
  bool started_ = false;
  RunReport report_;
};

/// Builds a model for `cfg` and copies parameters from a checkpoint.
GradformerModel model_from_checkpoint(const RunConfig& cfg, const TaskSpec& task, std::size_t d_in,
                                      const Checkpoint& ckpt);

/// Forward passes without gradients, split across `workers` threads; the
/// metric reduction runs in batch order so the worker count never changes
/// the result.
Metrics evaluate_model(const GradformerModel& model, const std::vector<GraphBatch>& batches, std::size_t workers);

/// Batches of consecutive graphs (no shuffling), for evaluation.
std::vector<GraphBatch> make_eval_batches(const std::vector<PreparedGraph>& graphs, const TaskSpec& task,
                                          const UnreachablePolicy& policy, std::size_t batch_size);

}  // namespace gradmask
