#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "gradmask/checkpoint.hpp"
#include "gradmask/config.hpp"
#include "gradmask/errors.hpp"
#include "gradmask/metrics.hpp"
#include "gradmask/optim.hpp"
#include "gradmask/trainer.hpp"
#include "test_util.hpp"

using namespace gradmask;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gradmask_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny_config(std::size_t epochs = 4) {
  json doc = {
      {"seed", 3},
      {"data",
       {{"synthetic", {{"count", 60}, {"n_min", 5}, {"n_max", 9}, {"p_edge", 0.3}, {"d_in", 4}, {"seed", 2}}},
        {"split", {{"mode", "counts"}, {"train", 40}, {"val", 10}, {"test", 10}}}}},
      {"model", {{"layers", 1}, {"hidden", 8}, {"heads", 2}, {"pe_dim", 3}, {"dropout", 0.1}}},
      {"decay", {{"lambda", 0.5}}},
      {"optim", {{"lr", 0.005}}},
      {"train", {{"epochs", epochs}, {"batch_size", 8}}},
  };
  return make_run_config(doc);
}

double pair_auroc(const std::vector<double>& s, const std::vector<std::size_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Sets the gradient of w to g by backpropagating sum(w * g).
void set_grad(Tensor w, const std::vector<double>& g) {
  w.zero_grad();
  sum(mul(w, Tensor::from(w.shape(), g))).backward();
}

}  // namespace

TEST(Auroc, MatchesPairCountingOracle) {
  SplitMix64 rng(81);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> s(n);
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so ties are common.
      s[i] = std::round(rng.uniform(0.0, 5.0)) / 5.0;
      y[i] = rng.below(2);
    }
    const auto a = auroc(s, y);
    const bool both = std::count(y.begin(), y.end(), 1u) > 0 && std::count(y.begin(), y.end(), 0u) > 0;
    ASSERT_EQ(a.has_value(), both);
    if (both) EXPECT_NEAR(*a, pair_auroc(s, y), 1e-12);
  }
}

TEST(Auroc, PerfectAndConstantScores) {
  const std::vector<std::size_t> y = {0, 1, 0, 1, 1};
  EXPECT_EQ(auroc(std::vector<double>{0.1, 0.9, 0.2, 0.8, 0.7}, y), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{0.3, 0.3, 0.3, 0.3, 0.3}, y), 0.5);
  EXPECT_FALSE(auroc(std::vector<double>{0.1, 0.2}, std::vector<std::size_t>{1, 1}).has_value());
}

TEST(Accuracy, ArgmaxCount) {
  const std::vector<double> logits = {2, 1, 0, 3, 5, 4};
  EXPECT_NEAR(accuracy(logits, 2, std::vector<std::size_t>{0, 1, 1}), 2.0 / 3.0, 1e-15);
}

TEST(SelectionMetricChoice, DefaultsPerTask) {
  EXPECT_EQ(selection_metric("auto", {TaskKind::GraphRegression, 0}).name, "mae");
  EXPECT_FALSE(selection_metric("auto", {TaskKind::GraphRegression, 0}).higher_is_better);
  EXPECT_TRUE(selection_metric("auto", {TaskKind::GraphClassification, 2}).higher_is_better);
  EXPECT_THROW(selection_metric("auroc", {TaskKind::GraphClassification, 3}), ConfigError);
}

TEST(AdamW, TwoStepsMatchHandEvaluation) {
  Tensor w = Tensor::from({2}, {1.0, -2.0}, true);
  const std::vector<NamedParameter> params = {{"w", w}};
  AdamConfig c;
  c.weight_decay = 0.1;
  OptimizerState state = OptimizerState::for_parameters(params, c);
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const std::vector<std::vector<double>> grads = {{0.5, -0.25}, {-0.3, 0.1}};
  std::vector<double> ref = {1.0, -2.0}, m = {0, 0}, v = {0, 0};
  for (std::size_t t = 1; t <= 2; ++t) {
    set_grad(w, grads[t - 1]);
    adamw_step(params, state, lr);
    for (std::size_t i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      ref[i] = ref[i] * (1 - lr * 0.1) - lr * mh / (std::sqrt(vh) + eps);
      EXPECT_NEAR(w.at(i), ref[i], 1e-12);
    }
  }
  EXPECT_EQ(state.step, 2u);
}

TEST(AdamW, ZeroGradientAndNoDecayLeavesWeights) {
  Tensor w = Tensor::from({3}, {0.4, -1.0, 2.0}, true);
  const std::vector<NamedParameter> params = {{"w", w}};
  AdamConfig c;
  c.weight_decay = 0.0;
  OptimizerState state = OptimizerState::for_parameters(params, c);
  set_grad(w, {0, 0, 0});
  adamw_step(params, state, 0.1);
  EXPECT_EQ(w.at(0), 0.4);
  EXPECT_EQ(w.at(1), -1.0);
  EXPECT_EQ(w.at(2), 2.0);
}

TEST(AdamW, DecayAloneShrinksWeights) {
  Tensor w = Tensor::from({2}, {3.0, -5.0}, true);
  const std::vector<NamedParameter> params = {{"w", w}};
  AdamConfig c;
  c.weight_decay = 0.5;
  OptimizerState state = OptimizerState::for_parameters(params, c);
  adamw_step(params, state, 0.1);
  EXPECT_NEAR(w.at(0), 3.0 * 0.95, 1e-15);
  EXPECT_NEAR(w.at(1), -5.0 * 0.95, 1e-15);
}

TEST(AdamW, CoupledModeFoldsDecayIntoGradient) {
  Tensor w = Tensor::from({1}, {2.0}, true);
  const std::vector<NamedParameter> params = {{"w", w}};
  AdamConfig c;
  c.weight_decay = 0.5;
  c.decoupled = false;
  OptimizerState state = OptimizerState::for_parameters(params, c);
  adamw_step(params, state, 0.1);
  // First bias-corrected step moves by lr * sign(g) for g = wd * w > 0.
  EXPECT_NEAR(w.at(0), 2.0 - 0.1, 1e-7);
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  Tensor w = Tensor::from({1}, {1.0}, true);
  const std::vector<NamedParameter> params = {{"layers.0.wq", w}};
  OptimizerState state = OptimizerState::for_parameters(params, {});
  set_grad(w, {std::nan("")});
  try {
    adamw_step(params, state, 0.1);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layers.0.wq"), std::string::npos);
  }
}

TEST(Schedule, WarmupThenCosine) {
  Schedule s;
  s.warmup_steps = 10;
  s.total_steps = 110;
  s.base_lr = 1e-3;
  EXPECT_EQ(s.lr_at(0), 0.0);
  EXPECT_NEAR(s.lr_at(5), 5e-4, 1e-18);
  EXPECT_NEAR(s.lr_at(10), 1e-3, 1e-18);
  EXPECT_NEAR(s.lr_at(60), 5e-4, 1e-15);
  EXPECT_NEAR(s.lr_at(110), 0.0, 1e-18);
  for (std::size_t k = 10; k < 110; ++k) EXPECT_GE(s.lr_at(k), s.lr_at(k + 1));
  s.kind = ScheduleKind::Constant;
  EXPECT_EQ(s.lr_at(0), 1e-3);
  EXPECT_EQ(s.lr_at(77), 1e-3);
}

TEST(CheckpointFile, RoundTripIsExact) {
  const fs::path dir = temp_dir("roundtrip");
  Checkpoint c;
  c.config_hash = "abc123";
  c.meta = {{"epoch", 7}, {"note", "x"}};
  c.tensors = {{"a", {2, 2}, {1.0, -0.0, 1e-300, 3.141592653589793}}, {"b", {1}, {std::nextafter(1.0, 2.0)}}};
  save_checkpoint((dir / "c.ckpt").string(), c);
  const Checkpoint r = load_checkpoint((dir / "c.ckpt").string());
  EXPECT_EQ(r.config_hash, "abc123");
  EXPECT_EQ(r.meta, c.meta);
  ASSERT_EQ(r.tensors.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(r.tensors[k].name, c.tensors[k].name);
    EXPECT_EQ(r.tensors[k].shape, c.tensors[k].shape);
    for (std::size_t i = 0; i < c.tensors[k].values.size(); ++i)
      EXPECT_EQ(std::bit_cast<std::uint64_t>(r.tensors[k].values[i]),
                std::bit_cast<std::uint64_t>(c.tensors[k].values[i]));
  }
  EXPECT_THROW(r.tensor("missing"), CheckpointError);
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_EQ(e.path().filename(), "c.ckpt");
}

TEST(CheckpointFile, CorruptionDetected) {
  const fs::path dir = temp_dir("corrupt");
  Checkpoint c;
  c.config_hash = "h";
  c.tensors = {{"a", {8}, std::vector<double>(8, 0.25)}};
  save_checkpoint((dir / "c.ckpt").string(), c);
  const std::string good = read_file(dir / "c.ckpt");

  std::string flipped = good;
  flipped[good.size() - 20] ^= 0x01;
  write_file(dir / "flip.ckpt", flipped);
  EXPECT_THROW(load_checkpoint((dir / "flip.ckpt").string()), CheckpointError);

  write_file(dir / "short.ckpt", good.substr(0, good.size() / 2));
  EXPECT_THROW(load_checkpoint((dir / "short.ckpt").string()), CheckpointError);

  write_file(dir / "junk.ckpt", "not a checkpoint");
  EXPECT_THROW(load_checkpoint((dir / "junk.ckpt").string()), CheckpointError);
  EXPECT_THROW(load_checkpoint((dir / "absent.ckpt").string()), CheckpointError);
}

TEST(CheckpointFile, VersionMismatchIsIncompatible) {
  const fs::path dir = temp_dir("version");
  Checkpoint c;
  c.config_hash = "h";
  save_checkpoint((dir / "c.ckpt").string(), c);
  std::string blob = read_file(dir / "c.ckpt");
  const std::string key = "\"format_version\":" + std::to_string(kCheckpointVersion);
  const auto pos = blob.find(key);
  ASSERT_NE(pos, std::string::npos);
  blob[pos + key.size() - 1] = '9';
  // Re-seal with a valid checksum so only the version is wrong.
  std::string body = blob.substr(0, blob.size() - 8);
  const std::uint64_t h = fnv1a(body);
  for (int b = 0; b < 8; ++b) body.push_back(static_cast<char>((h >> (8 * b)) & 0xFF));
  write_file(dir / "v.ckpt", body);
  EXPECT_THROW(load_checkpoint((dir / "v.ckpt").string()), IncompatibleCheckpointError);
}

TEST(Config, DefaultsRoundTrip) {
  const RunConfig a;
  const RunConfig b = RunConfig::from_json(a.to_json());
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(Config, UnknownKeyNamesDottedPath) {
  try {
    RunConfig::from_json(json{{"model", {{"hiden", 8}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.hiden"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::from_json(json{{"model", {{"hidden", "eight"}}}}), ConfigError);
}

TEST(Config, OverridesApplyInOrder) {
  const RunConfig c = make_run_config(json::object(), {"decay.lambda=0.3", "model.mpnn=gcn-parallel", "decay.lambda=0.4"});
  EXPECT_EQ(c.model.decay.lambda, 0.4);
  EXPECT_EQ(c.model.mpnn, MpnnKind::GcnParallel);
  EXPECT_THROW(make_run_config(json::object(), {"decay.lamda=0.3"}), ConfigError);
  EXPECT_THROW(make_run_config(json::object(), {"no_equals_sign"}), ConfigError);
  EXPECT_THROW(make_run_config(json::object(), {"decay.lambda=2"}), ConfigError);
}

TEST(Config, CommentsAllowedInFile) {
  const fs::path dir = temp_dir("config");
  write_file(dir / "c.json", "{\n  // a comment\n  \"train\": {\"epochs\": 3} /* block */\n}\n");
  const RunConfig c = load_run_config((dir / "c.json").string(), {"train.batch_size=4"});
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.batch_size, 4u);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  RunConfig a, b;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.model.decay.lambda = 0.3;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Trainer, ZeroEpochsRecordsInitialEvaluationOnly) {
  const RunConfig cfg = tiny_config(0);
  Trainer t(cfg, load_run_data(cfg));
  const RunReport r = t.run();
  EXPECT_EQ(r.status, "ok");
  EXPECT_EQ(r.epochs_completed, 0u);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].epoch, 0u);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_EQ(r.parameter_count, t.model().parameter_count());
}

TEST(Trainer, SameSeedIsDeterministic) {
  const RunConfig cfg = tiny_config(3);
  const DatasetSplit data = load_run_data(cfg);
  Trainer a(cfg, data), b(cfg, data);
  EXPECT_EQ(a.run().to_json(false), b.run().to_json(false));
  const auto pa = a.model().parameters(), pb = b.model().parameters();
  for (std::size_t k = 0; k < pa.size(); ++k)
    for (std::size_t i = 0; i < pa[k].tensor.numel(); ++i) EXPECT_EQ(pa[k].tensor.at(i), pb[k].tensor.at(i));
}

TEST(Trainer, DifferentSeedDiffers) {
  RunConfig cfg = tiny_config(2);
  const DatasetSplit data = load_run_data(cfg);
  Trainer a(cfg, data);
  cfg.seed = 4;
  Trainer b(cfg, data);
  EXPECT_NE(a.run().history.back().train_loss, b.run().history.back().train_loss);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const RunConfig cfg = tiny_config(5);
  const DatasetSplit data = load_run_data(cfg);
  Trainer full(cfg, data);
  const RunReport ref = full.run();

  const fs::path dir = temp_dir("resume");
  {
    Trainer first(cfg, data);
    first.run(2);
    save_checkpoint((dir / "last.ckpt").string(), first.snapshot());
  }
  Trainer second(cfg, data);
  second.restore(load_checkpoint((dir / "last.ckpt").string()));
  EXPECT_EQ(second.epoch(), 2u);
  const RunReport resumed = second.run();
  EXPECT_EQ(resumed.to_json(false), ref.to_json(false));
  const auto pa = full.model().parameters(), pb = second.model().parameters();
  for (std::size_t k = 0; k < pa.size(); ++k)
    for (std::size_t i = 0; i < pa[k].tensor.numel(); ++i) EXPECT_EQ(pa[k].tensor.at(i), pb[k].tensor.at(i));
}

TEST(Trainer, RestoreRejectsOtherConfig) {
  const RunConfig cfg = tiny_config(1);
  const DatasetSplit data = load_run_data(cfg);
  Trainer a(cfg, data);
  a.run();
  RunConfig other = cfg;
  other.model.decay.lambda = 0.7;
  Trainer b(other, data);
  EXPECT_THROW(b.restore(a.snapshot()), IncompatibleCheckpointError);
}

TEST(Trainer, StartPointsRecordedEveryEpoch) {
  const RunConfig cfg = tiny_config(3);
  Trainer t(cfg, load_run_data(cfg));
  const RunReport r = t.run();
  // Epochs 0..3, one layer, two heads.
  ASSERT_EQ(r.sp_trajectories.size(), 4u * 2u);
  EXPECT_EQ(r.sp_trajectories[0].sp, 0.0);
  EXPECT_EQ(r.sp_trajectories[1].sp, 1.0);
  EXPECT_EQ(r.sp_trajectories.back().epoch, 3u);
}

TEST(Trainer, BestEpochHasBestValidationMetric) {
  const RunConfig cfg = tiny_config(4);
  Trainer t(cfg, load_run_data(cfg));
  const RunReport r = t.run();
  ASSERT_TRUE(r.best_val.has_value());
  const auto& best = r.history[r.best_epoch];
  EXPECT_EQ(metric_value(best.val, r.select_metric), r.best_val);
  for (const auto& rec : r.history) {
    const auto v = metric_value(rec.val, r.select_metric);
    if (!v) continue;
    if (rec.epoch < r.best_epoch) EXPECT_LT(*v, *r.best_val);
    else EXPECT_LE(*v, *r.best_val);
  }
  EXPECT_EQ(metrics_to_json(r.test_at_best), metrics_to_json(best.test));
}

TEST(Trainer, DivergenceIsReported) {
  RunConfig cfg = tiny_config(3);
  cfg.optim.lr = 1e200;
  cfg.optim.schedule = ScheduleKind::Constant;
  Trainer t(cfg, load_run_data(cfg));
  const RunReport r = t.run();
  EXPECT_EQ(r.status, "diverged");
  EXPECT_FALSE(r.error.empty());
}

TEST(Evaluation, WorkerCountDoesNotChangeMetrics) {
  const RunConfig cfg = tiny_config(1);
  const DatasetSplit data = load_run_data(cfg);
  Trainer t(cfg, data);
  t.run();
  const Metrics one = evaluate_model(t.model(), t.val_batches(), 1);
  for (std::size_t w : {2, 3, 8}) {
    const Metrics many = evaluate_model(t.model(), t.val_batches(), w);
    EXPECT_EQ(metrics_to_json(one), metrics_to_json(many));
  }
}

TEST(Evaluation, ModelFromCheckpointReproducesMetrics) {
  const RunConfig cfg = tiny_config(2);
  const DatasetSplit data = load_run_data(cfg);
  Trainer t(cfg, data);
  t.run();
  const Checkpoint ckpt = t.snapshot();
  const GradformerModel m = model_from_checkpoint(cfg, data.train.task, data.train.d_in, ckpt);
  EXPECT_EQ(metrics_to_json(evaluate_model(m, t.test_batches(), 1)),
            metrics_to_json(evaluate_model(t.model(), t.test_batches(), 1)));
}

TEST(Metrics, JsonRoundTrip) {
  Metrics m;
  m.loss = 0.25;
  m.accuracy = 0.75;
  const Metrics r = metrics_from_json(metrics_to_json(m));
  EXPECT_EQ(r.loss, 0.25);
  EXPECT_EQ(r.accuracy, 0.75);
  EXPECT_FALSE(r.auroc.has_value());
  EXPECT_FALSE(r.mae.has_value());
}
