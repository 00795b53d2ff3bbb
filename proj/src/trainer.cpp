#include "gradmask/trainer.hpp"

#include <chrono>
#include <cmath>
#include <future>

#include "gradmask/errors.hpp"
#include "gradmask/ops.hpp"
#include "gradmask/synthetic.hpp"

namespace gradmask {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStreamSalt = 0x5EED5EED5EED5EEDULL;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json epoch_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"lr", r.lr},
          {"val", metrics_to_json(r.val)}, {"test", metrics_to_json(r.test)}};
}

EpochRecord epoch_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.train_loss = j.at("train_loss").get<double>();
  r.lr = j.at("lr").get<double>();
  r.val = metrics_from_json(j.at("val"));
  r.test = metrics_from_json(j.at("test"));
  return r;
}

bool better(std::optional<double> candidate, std::optional<double> incumbent, bool higher_is_better) {
  if (!candidate) return false;
  if (!incumbent) return true;
  return higher_is_better ? *candidate > *incumbent : *candidate < *incumbent;
}

}  // namespace

json metrics_to_json(const Metrics& m) {
  return {{"loss", m.loss}, {"accuracy", optional_json(m.accuracy)}, {"auroc", optional_json(m.auroc)},
          {"mae", optional_json(m.mae)}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.loss = j.at("loss").get<double>();
  m.accuracy = optional_from(j, "accuracy");
  m.auroc = optional_from(j, "auroc");
  m.mae = optional_from(j, "mae");
  return m;
}

json RunReport::to_json(bool include_timing) const {
  json history_json = json::array();
  for (const auto& r : history) history_json.push_back(epoch_to_json(r));
  json sp_json = json::array();
  for (const auto& s : sp_trajectories) {
    sp_json.push_back({{"epoch", s.epoch}, {"layer", s.layer}, {"head", s.head}, {"sp", s.sp}});
  }
  json j = {{"status", status},
            {"error", error},
            {"config_hash", config_hash},
            {"task", task},
            {"select_metric", select_metric},
            {"higher_is_better", higher_is_better},
            {"parameter_count", parameter_count},
            {"epochs_completed", epochs_completed},
            {"best_epoch", best_epoch},
            {"best_val", optional_json(best_val)},
            {"test_at_best", metrics_to_json(test_at_best)},
            {"history", std::move(history_json)},
            {"sp_trajectories", std::move(sp_json)}};
  if (include_timing) {
    j["timing"] = {{"wall_time_seconds", wall_time_seconds}, {"peak_memory_bytes", peak_memory_bytes}};
  }
  return j;
}

Dataset load_run_dataset(const RunConfig& cfg) {
  Dataset ds;
  if (cfg.data.source == "file") {
    ds = load_graph_dataset(cfg.data.path);
  } else if (cfg.data.synthetic_kind == "triangle") {
    ds = synth_triangle_task(cfg.data.synthetic);
  } else if (cfg.data.synthetic_kind == "hopcount") {
    ds = synth_hopcount_regression(cfg.data.synthetic);
  } else {
    ds = synth_node_triangle_task(cfg.data.synthetic);
  }
  return ds;
}

DatasetSplit load_run_data(const RunConfig& cfg) {
  const Dataset ds = load_run_dataset(cfg);
  DatasetSplit split = cfg.data.split_mode == "counts"
                           ? split_dataset_counts(ds, cfg.data.split_train, cfg.data.split_val, cfg.data.split_test,
                                                  cfg.data.split_seed)
                           : split_dataset(ds, cfg.data.split_seed);
  if (cfg.data.low_resource_fraction < 1.0) {
    split.train = subsample_low_resource(split.train, cfg.data.low_resource_fraction, cfg.data.low_resource_seed);
  }
  return split;
}

std::vector<GraphBatch> make_eval_batches(const std::vector<PreparedGraph>& graphs, const TaskSpec& task,
                                          const UnreachablePolicy& policy, std::size_t batch_size) {
  std::vector<GraphBatch> out;
  for (std::size_t start = 0; start < graphs.size(); start += batch_size) {
    std::vector<const PreparedGraph*> ptrs;
    for (std::size_t i = start; i < std::min(graphs.size(), start + batch_size); ++i) ptrs.push_back(&graphs[i]);
    out.push_back(make_batch(ptrs, task, policy));
  }
  return out;
}

Trainer::Trainer(RunConfig cfg, const DatasetSplit& data)
    : cfg_(std::move(cfg)),
      task_(data.train.task),
      select_(selection_metric(cfg_.train.select_metric, task_)),
      model_(cfg_.model, task_, data.train.d_in, cfg_.seed),
      rng_(cfg_.seed ^ kTrainStreamSalt) {
  cfg_.validate();
  if (data.train.size() == 0) throw ParameterError("training split is empty");
  const std::size_t pe = cfg_.model.effective_pe_dim();
  train_ = prepare_dataset(data.train, cfg_.model.index, pe);
  const auto val = prepare_dataset(data.val, cfg_.model.index, pe);
  const auto test = prepare_dataset(data.test, cfg_.model.index, pe);
  val_batches_ = make_eval_batches(val, task_, cfg_.model.decay.unreachable, cfg_.train.batch_size);
  test_batches_ = make_eval_batches(test, task_, cfg_.model.decay.unreachable, cfg_.train.batch_size);

  params_ = model_.parameters();
  AdamConfig adam = cfg_.optim.adam;
  adam.decoupled = cfg_.optim.optimizer == "adamw";
  opt_ = OptimizerState::for_parameters(params_, adam);

  const std::size_t per_epoch = (train_.size() + cfg_.train.batch_size - 1) / cfg_.train.batch_size;
  schedule_.kind = cfg_.optim.schedule;
  schedule_.base_lr = cfg_.optim.lr;
  schedule_.total_steps = per_epoch * cfg_.train.epochs;
  schedule_.warmup_steps =
      static_cast<std::size_t>(std::floor(cfg_.optim.warmup_fraction * static_cast<double>(schedule_.total_steps)));

  report_.config_hash = cfg_.hash();
  report_.task = to_string(task_.kind);
  report_.select_metric = select_.name;
  report_.higher_is_better = select_.higher_is_better;
  report_.parameter_count = model_.parameter_count();
}

Metrics evaluate_model(const GradformerModel& model, const std::vector<GraphBatch>& batches, std::size_t workers) {
  const TaskSpec& task = model.task();
  std::vector<std::vector<double>> preds(batches.size());
  auto run_range = [&](std::size_t begin, std::size_t end) {
    NoGradGuard no_grad;
    for (std::size_t b = begin; b < end; ++b) {
      const Tensor out = model.forward(batches[b]);
      preds[b].assign(out.values().begin(), out.values().end());
    }
  };
  workers = std::min(workers, std::max<std::size_t>(1, batches.size()));
  if (workers <= 1) {
    run_range(0, batches.size());
  } else {
    std::vector<std::future<void>> jobs;
    const std::size_t chunk = (batches.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk, end = std::min(batches.size(), begin + chunk);
      if (begin < end) jobs.push_back(std::async(std::launch::async, run_range, begin, end));
    }
    for (auto& j : jobs) j.get();
  }
  // Reduce in fixed batch order so results do not depend on worker count.
  std::vector<double> all_preds, targets;
  std::vector<std::size_t> labels;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    all_preds.insert(all_preds.end(), preds[b].begin(), preds[b].end());
    labels.insert(labels.end(), batches[b].class_labels.begin(), batches[b].class_labels.end());
    targets.insert(targets.end(), batches[b].targets.begin(), batches[b].targets.end());
  }
  return compute_metrics(all_preds, task.output_dim(), labels, targets, task);
}

Metrics Trainer::evaluate(const std::vector<GraphBatch>& batches) const {
  return evaluate_model(model_, batches, cfg_.train.eval_workers);
}

double Trainer::train_epoch() {
  const auto order = random_permutation(train_.size(), rng_);
  const std::size_t bs = cfg_.train.batch_size;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<const PreparedGraph*> ptrs;
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) ptrs.push_back(&train_[order[i]]);
    const GraphBatch batch = make_batch(ptrs, task_, cfg_.model.decay.unreachable);
    for (auto& p : params_) p.tensor.zero_grad();
    ForwardOptions opts;
    opts.training = true;
    opts.rng = &rng_;
    const Tensor pred = model_.forward(batch, opts);
    const Tensor loss = task_.is_classification() ? cross_entropy(pred, batch.class_labels)
                                                  : mean_abs_error(pred, batch.targets);
    if (!std::isfinite(loss.item())) throw NumericalError("non-finite training loss");
    loss.backward();
    adamw_step(params_, opt_, schedule_.lr_at(opt_.step + 1));
    loss_sum += loss.item();
    ++batches;
  }
  return batches ? loss_sum / static_cast<double>(batches) : 0.0;
}

void Trainer::record_start_points() {
  const auto& layers = model_.layers();
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (std::size_t h = 0; h < layers[l].start_points.size(); ++h)
      report_.sp_trajectories.push_back({epoch_, l, h, layers[l].start_points[h].item()});
}

void Trainer::record_epoch(EpochRecord rec) {
  const bool improved = report_.history.empty() ||
                        better(metric_value(rec.val, select_.name), report_.best_val, select_.higher_is_better);
  if (improved) {
    report_.best_epoch = rec.epoch;
    report_.best_val = metric_value(rec.val, select_.name);
    report_.test_at_best = rec.test;
  }
  report_.history.push_back(std::move(rec));
  report_.epochs_completed = epoch_;
  record_start_points();
}

RunReport Trainer::run(std::size_t stop_after_epoch, const EpochCallback& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t baseline = memory_stats().live_bytes;
  reset_peak_memory();
  try {
    if (!started_) {
      EpochRecord initial;
      initial.epoch = 0;
      initial.val = evaluate(val_batches_);
      initial.test = evaluate(test_batches_);
      {
        NoGradGuard no_grad;
        const auto train_batches =
            make_eval_batches(train_, task_, cfg_.model.decay.unreachable, cfg_.train.batch_size);
        initial.train_loss = evaluate(train_batches).loss;
      }
      started_ = true;
      record_epoch(initial);
      if (on_epoch) on_epoch(report_.history.back(), true, *this);
    }
    const std::size_t last = std::min(cfg_.train.epochs, stop_after_epoch);
    while (epoch_ < last) {
      EpochRecord rec;
      rec.train_loss = train_epoch();
      ++epoch_;
      rec.epoch = epoch_;
      rec.lr = schedule_.lr_at(opt_.step);
      rec.val = evaluate(val_batches_);
      rec.test = evaluate(test_batches_);
      const auto previous_best = report_.best_epoch;
      record_epoch(rec);
      if (on_epoch) on_epoch(report_.history.back(), report_.best_epoch != previous_best, *this);
    }
  } catch (const NumericalError& e) {
    report_.status = "diverged";
    report_.error = e.what();
  }
  const auto t1 = std::chrono::steady_clock::now();
  report_.wall_time_seconds += std::chrono::duration<double>(t1 - t0).count();
  const std::size_t peak = memory_stats().peak_bytes;
  report_.peak_memory_bytes = std::max(report_.peak_memory_bytes, peak > baseline ? peak - baseline : 0);
  return report_;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.config_hash = cfg_.hash();
  json history = json::array();
  for (const auto& r : report_.history) history.push_back(epoch_to_json(r));
  const json report = report_.to_json(false);
  ckpt.meta = {{"config", cfg_.to_json()},
               {"epoch", epoch_},
               {"started", started_},
               {"optimizer_step", opt_.step},
               {"rng_version", kRngVersion},
               {"rng_state", rng_.state()},
               {"schedule", {{"warmup_steps", schedule_.warmup_steps}, {"total_steps", schedule_.total_steps}}},
               {"task", to_string(task_.kind)},
               {"num_classes", task_.num_classes},
               {"d_in", model_.input_dim()},
               {"report", report},
               {"timing", {{"wall_time_seconds", report_.wall_time_seconds},
                           {"peak_memory_bytes", report_.peak_memory_bytes}}}};
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& p = params_[k];
    const auto v = p.tensor.values();
    ckpt.tensors.push_back({"param/" + p.name, p.tensor.shape(), {v.begin(), v.end()}});
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ckpt.tensors.push_back({"adam_m/" + params_[k].name, params_[k].tensor.shape(), opt_.first_moment[k]});
    ckpt.tensors.push_back({"adam_v/" + params_[k].name, params_[k].tensor.shape(), opt_.second_moment[k]});
  }
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.config_hash != cfg_.hash()) {
    throw IncompatibleCheckpointError("checkpoint was written for config " + ckpt.config_hash + ", this run is " +
                                      cfg_.hash());
  }
  const auto& meta = ckpt.meta;
  if (meta.at("rng_version").get<int>() != kRngVersion) {
    throw IncompatibleCheckpointError("checkpoint uses a different generator version");
  }
  // Stage everything first so a bad checkpoint leaves the trainer untouched.
  std::vector<std::vector<double>> values, m, v;
  for (const auto& p : params_) {
    const auto& tv = ckpt.tensor("param/" + p.name);
    const auto& tm = ckpt.tensor("adam_m/" + p.name);
    const auto& tvv = ckpt.tensor("adam_v/" + p.name);
    if (tv.shape != p.tensor.shape() || tm.shape != p.tensor.shape() || tvv.shape != p.tensor.shape()) {
      throw IncompatibleCheckpointError("shape mismatch for parameter " + p.name);
    }
    values.push_back(tv.values);
    m.push_back(tm.values);
    v.push_back(tvv.values);
  }
  RunReport restored = report_;
  restored.history.clear();
  for (const auto& h : meta.at("report").at("history")) restored.history.push_back(epoch_from_json(h));
  restored.sp_trajectories.clear();
  for (const auto& s : meta.at("report").at("sp_trajectories")) {
    restored.sp_trajectories.push_back({s.at("epoch").get<std::size_t>(), s.at("layer").get<std::size_t>(),
                                        s.at("head").get<std::size_t>(), s.at("sp").get<double>()});
  }
  const json& rj = meta.at("report");
  restored.status = rj.at("status").get<std::string>();
  restored.error = rj.at("error").get<std::string>();
  restored.epochs_completed = rj.at("epochs_completed").get<std::size_t>();
  restored.best_epoch = rj.at("best_epoch").get<std::size_t>();
  restored.best_val = optional_from(rj, "best_val");
  restored.test_at_best = metrics_from_json(rj.at("test_at_best"));
  restored.wall_time_seconds = meta.at("timing").at("wall_time_seconds").get<double>();
  restored.peak_memory_bytes = meta.at("timing").at("peak_memory_bytes").get<std::size_t>();

  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    std::copy(values[k].begin(), values[k].end(), t.mutable_values().begin());
    opt_.first_moment[k] = std::move(m[k]);
    opt_.second_moment[k] = std::move(v[k]);
  }
  opt_.step = meta.at("optimizer_step").get<std::size_t>();
  rng_.set_state(meta.at("rng_state").get<std::uint64_t>());
  epoch_ = meta.at("epoch").get<std::size_t>();
  started_ = meta.at("started").get<bool>();
  report_ = std::move(restored);
}

GradformerModel model_from_checkpoint(const RunConfig& cfg, const TaskSpec& task, std::size_t d_in,
                                      const Checkpoint& ckpt) {
  GradformerModel model(cfg.model, task, d_in, cfg.seed);
  for (auto& p : model.parameters()) {
    const auto& t = ckpt.tensor("param/" + p.name);
    if (t.shape != p.tensor.shape()) throw IncompatibleCheckpointError("shape mismatch for parameter " + p.name);
    Tensor dst = p.tensor;
    std::copy(t.values.begin(), t.values.end(), dst.mutable_values().begin());
  }
  return model;
}

}  // namespace gradmask
