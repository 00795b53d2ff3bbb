#include "gradmask/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "gradmask/checkpoint.hpp"
#include "gradmask/errors.hpp"
#include "gradmask/gradcheck.hpp"
#include "gradmask/ops.hpp"
#include "gradmask/trainer.hpp"

namespace gradmask {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

json resolve_doc(const GlobalOptions& g, const json& base) {
  json doc = base;
  if (g.config) {
    std::ifstream in(*g.config);
    if (!in) throw ConfigError("cannot open config file " + *g.config);
    try {
      doc = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + *g.config + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config file " + *g.config + " must hold a JSON object");
  }
  for (const auto& s : g.sets) apply_override(doc, s);
  if (g.seed) doc["seed"] = *g.seed;
  if (g.out) doc["output"]["dir"] = *g.out;
  return doc;
}

std::string metrics_csv(const RunReport& r) {
  std::ostringstream os;
  os << "epoch,train_loss,lr,val_loss,val_accuracy,val_auroc,val_mae,test_loss,test_accuracy,test_auroc,test_mae\n";
  for (const auto& e : r.history) {
    os << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.lr) << ',' << fmt(e.val.loss) << ','
       << fmt(e.val.accuracy) << ',' << fmt(e.val.auroc) << ',' << fmt(e.val.mae) << ',' << fmt(e.test.loss) << ','
       << fmt(e.test.accuracy) << ',' << fmt(e.test.auroc) << ',' << fmt(e.test.mae) << '\n';
  }
  return os.str();
}

std::string sp_csv(const RunReport& r) {
  std::ostringstream os;
  os << "epoch,layer,head,sp\n";
  for (const auto& s : r.sp_trajectories) os << s.epoch << ',' << s.layer << ',' << s.head << ',' << fmt(s.sp) << '\n';
  return os.str();
}

void write_run_outputs(const fs::path& dir, const RunReport& report) {
  write_text(dir / "run_report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "metrics.csv", metrics_csv(report));
  write_text(dir / "sp_trajectories.csv", sp_csv(report));
}

std::string matrix_csv(const double* v, std::size_t rows, std::size_t cols, std::size_t stride) {
  std::ostringstream os;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) os << (j ? "," : "") << fmt(v[i * stride + j]);
    os << '\n';
  }
  return os.str();
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt, const std::vector<std::string>& overrides) {
  if (!ckpt.meta.contains("config")) throw IncompatibleCheckpointError("checkpoint carries no run config");
  return make_run_config(ckpt.meta.at("config"), overrides);
}

void check_task(const Checkpoint& ckpt, const Dataset& ds) {
  const std::string task = ckpt.meta.value("task", std::string());
  if (task != to_string(ds.task.kind)) {
    throw IncompatibleCheckpointError("checkpoint task " + task + " does not match dataset task " +
                                      to_string(ds.task.kind));
  }
}

}  // namespace

RunConfig resolve_config(const GlobalOptions& g, const json& base) {
  return RunConfig::from_json(resolve_doc(g, base));
}

void prepare_output_dir(const std::string& dir, bool force) {
  const fs::path p(dir);
  if (fs::exists(p)) {
    if (!fs::is_directory(p)) throw ParameterError("output path " + dir + " exists and is not a directory");
    if (!fs::is_empty(p) && !force) {
      throw ParameterError("output directory " + dir + " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(p);
}

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_train(const GlobalOptions& g, const TrainOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const RunConfig cfg = resolve_config(g);
        std::optional<Checkpoint> resume;
        bool force = g.force;
        if (opts.resume) {
          resume = load_checkpoint(*opts.resume);
          // Continuing in the directory the checkpoint came from is expected.
          std::error_code ec;
          if (fs::equivalent(fs::path(*opts.resume).parent_path(), cfg.output_dir, ec)) force = true;
        }
        prepare_output_dir(cfg.output_dir, force);
        const fs::path dir(cfg.output_dir);
        write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");

        Trainer trainer(cfg, load_run_data(cfg));
        if (resume) trainer.restore(*resume);
        out << "training " << trainer.report().task << " model with " << trainer.report().parameter_count
            << " parameters, config " << trainer.report().config_hash << '\n';
        const auto on_epoch = [&](const EpochRecord& rec, bool improved, const Trainer& t) {
          const Checkpoint snap = t.snapshot();
          if (improved) save_checkpoint((dir / "best.ckpt").string(), snap);
          save_checkpoint((dir / "last.ckpt").string(), snap);
          const auto v = metric_value(rec.val, t.report().select_metric);
          out << "epoch " << rec.epoch << " train_loss " << fmt(rec.train_loss) << " val_"
              << t.report().select_metric << ' ' << (v ? fmt(*v) : "n/a") << (improved ? " *" : "") << '\n';
        };
        const RunReport report =
            trainer.run(opts.stop_after_epoch.value_or(std::numeric_limits<std::size_t>::max()), on_epoch);
        write_run_outputs(dir, report);
        if (report.status != "ok") {
          err << "training diverged: " << report.error << '\n';
          return kExitRuntime;
        }
        const auto test = metric_value(report.test_at_best, report.select_metric);
        out << "best epoch " << report.best_epoch << ", test " << report.select_metric << ' '
            << (test ? fmt(*test) : "n/a") << '\n';
        return kExitOk;
      },
      err);
}

int cmd_eval(const GlobalOptions& g, const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
        const RunConfig cfg = config_from_checkpoint(ckpt, g.sets);
        const DatasetSplit split = load_run_data(cfg);
        const Dataset* ds = opts.split == "train" ? &split.train
                            : opts.split == "val" ? &split.val
                            : opts.split == "test" ? &split.test
                                                   : nullptr;
        if (!ds) throw ParameterError("split must be train, val or test");
        check_task(ckpt, *ds);
        const GradformerModel model = model_from_checkpoint(cfg, ds->task, ds->d_in, ckpt);
        const auto prepared = prepare_dataset(*ds, cfg.model.index, cfg.model.effective_pe_dim());
        const auto batches =
            make_eval_batches(prepared, ds->task, cfg.model.decay.unreachable, cfg.train.batch_size);
        const Metrics m = evaluate_model(model, batches, cfg.train.eval_workers);
        const json result = {{"split", opts.split}, {"graphs", ds->size()}, {"metrics", metrics_to_json(m)}};
        out << result.dump(2) << '\n';
        if (g.out) {
          prepare_output_dir(*g.out, g.force);
          write_text(fs::path(*g.out) / ("eval_" + opts.split + ".json"), result.dump(2) + "\n");
        }
        return kExitOk;
      },
      err);
}

std::vector<std::string> default_axis_values(const std::string& axis) {
  if (axis == "lambda") return {"0.3", "0.4", "0.5", "0.6", "0.7"};
  if (axis == "decay_fn") return {"exponential", "linear"};
  if (axis == "index") return {"sph", "curve", "fs"};
  if (axis == "mpnn") return {"gcn-parallel", "none"};
  if (axis == "pe") return {"rwse", "none"};
  throw ParameterError("unknown ablation axis " + axis + " (expected lambda, decay_fn, index, mpnn or pe)");
}

std::string axis_key(const std::string& axis) {
  if (axis == "lambda") return "decay.lambda";
  if (axis == "decay_fn") return "decay.decay_fn";
  if (axis == "index") return "model.index";
  if (axis == "mpnn") return "model.mpnn";
  if (axis == "pe") return "model.pe";
  throw ParameterError("unknown ablation axis " + axis + " (expected lambda, decay_fn, index, mpnn or pe)");
}

int cmd_ablate(const GlobalOptions& g, const AblateOptions& opts, std::ostream& out, std::ostream& err) {
  struct Row {
    std::string value;
    std::string status = "failed";
    std::string error;
    RunReport report;
  };
  return guarded(
      [&] {
        const std::string key = axis_key(opts.axis);
        const std::vector<std::string> values = opts.values.empty() ? default_axis_values(opts.axis) : opts.values;
        const json base = resolve_doc(g, json::object());
        const RunConfig root_cfg = RunConfig::from_json(base);
        prepare_output_dir(root_cfg.output_dir, g.force);
        const fs::path root(root_cfg.output_dir);

        std::vector<Row> rows(values.size());
        std::mutex log_mutex;
        const auto run_one = [&](std::size_t k) {
          Row& row = rows[k];
          row.value = values[k];
          try {
            json doc = base;
            apply_override(doc, key + "=" + values[k]);
            const fs::path sub = root / (opts.axis + "_" + values[k]);
            doc["output"]["dir"] = sub.string();
            const RunConfig cfg = RunConfig::from_json(doc);
            prepare_output_dir(cfg.output_dir, true);
            write_text(sub / "config.json", cfg.to_json().dump(2) + "\n");
            Trainer trainer(cfg, load_run_data(cfg));
            row.report = trainer.run();
            write_run_outputs(sub, row.report);
            row.status = row.report.status;
            row.error = row.report.error;
          } catch (const std::exception& e) {
            row.error = e.what();
          }
          std::lock_guard<std::mutex> lock(log_mutex);
          out << opts.axis << '=' << row.value << ": " << row.status << (row.error.empty() ? "" : " (" + row.error + ")")
              << '\n';
        };
        const std::size_t workers = std::max<std::size_t>(1, opts.workers);
        if (workers == 1) {
          for (std::size_t k = 0; k < values.size(); ++k) run_one(k);
        } else {
          std::size_t next = 0;
          std::mutex next_mutex;
          std::vector<std::future<void>> jobs;
          for (std::size_t w = 0; w < std::min(workers, values.size()); ++w) {
            jobs.push_back(std::async(std::launch::async, [&] {
              for (;;) {
                std::size_t k;
                {
                  std::lock_guard<std::mutex> lock(next_mutex);
                  if (next >= values.size()) return;
                  k = next++;
                }
                run_one(k);
              }
            }));
          }
          for (auto& j : jobs) j.get();
        }

        std::ostringstream csv;
        csv << "axis,value,status,best_epoch,select_metric,best_val,test_metric,test_accuracy,test_auroc,test_mae,"
               "test_loss,wall_time_seconds,error\n";
        std::ostringstream table;
        table << std::left << std::setw(14) << opts.axis << std::setw(10) << "status" << std::setw(12) << "best_epoch"
              << std::setw(14) << "best_val" << "test_metric\n";
        std::size_t failures = 0;
        for (const auto& row : rows) {
          const auto& r = row.report;
          const bool ran = !r.history.empty();
          std::optional<double> best_val, test;
          if (ran) {
            best_val = r.best_val;
            test = metric_value(r.test_at_best, r.select_metric);
          }
          csv << csv_field(opts.axis) << ',' << csv_field(row.value) << ',' << row.status << ','
              << (ran ? std::to_string(r.best_epoch) : "") << ',' << r.select_metric << ',' << fmt(best_val) << ','
              << fmt(test) << ',' << (ran ? fmt(r.test_at_best.accuracy) : "") << ','
              << (ran ? fmt(r.test_at_best.auroc) : "") << ',' << (ran ? fmt(r.test_at_best.mae) : "") << ','
              << (ran ? fmt(r.test_at_best.loss) : "") << ',' << fmt(r.wall_time_seconds) << ','
              << csv_field(row.error) << '\n';
          std::ostringstream bv, tv;
          bv << std::setprecision(4) << (best_val ? *best_val : NAN);
          tv << std::setprecision(4) << (test ? *test : NAN);
          table << std::setw(14) << row.value << std::setw(10) << row.status << std::setw(12)
                << (ran ? std::to_string(r.best_epoch) : "-") << std::setw(14) << (best_val ? bv.str() : "-")
                << (test ? tv.str() : "-") << '\n';
          if (row.status != "ok") ++failures;
        }
        write_text(root / "ablation.csv", csv.str());
        write_text(root / "ablation.txt", table.str());
        out << table.str();
        if (failures) err << failures << " of " << rows.size() << " runs failed\n";
        return kExitOk;
      },
      err);
}

json gradcheck_base_config() {
  return {{"model",
           {{"layers", 2},
            {"hidden", 8},
            {"heads", 2},
            {"pe_dim", 4},
            {"dropout", 0.0},
            {"attention_dropout", 0.0}}},
          {"data", {{"synthetic", {{"d_in", 4}}}}}};
}

namespace {

Dataset gradcheck_graphs(const RunConfig& cfg, SplitMix64& rng) {
  Dataset ds;
  ds.d_in = cfg.data.synthetic.d_in;
  if (cfg.data.source == "file") {
    const Dataset header = load_graph_dataset(cfg.data.path);
    ds.task = header.task;
    ds.d_in = header.d_in;
  } else if (cfg.data.synthetic_kind == "hopcount") {
    ds.task = {TaskKind::GraphRegression, 1};
  } else if (cfg.data.synthetic_kind == "node_triangle") {
    ds.task = {TaskKind::NodeClassification, 2};
  } else {
    ds.task = {TaskKind::GraphClassification, 2};
  }
  const std::vector<std::pair<std::size_t, std::vector<Edge>>> shapes = {
      {6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 2}, {2, 5}}},
      {4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}},
  };
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto& [n, edges] = shapes[k];
    std::vector<double> x(n * ds.d_in);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    GraphLabel label;
    if (ds.task.kind == TaskKind::GraphRegression) {
      label = rng.uniform(0.5, 2.0);
    } else if (ds.task.kind == TaskKind::NodeClassification) {
      std::vector<std::size_t> y(n);
      for (auto& v : y) v = rng.below(ds.task.num_classes);
      label = y;
    } else {
      label = std::size_t{k % ds.task.num_classes};
    }
    ds.graphs.push_back(Graph::make(n, edges, ds.d_in, std::move(x), label));
  }
  return ds;
}

double mask_sp_check() {
  double worst = 0.0;
  const double h = 1e-6;
  for (double lambda : {0.3, 0.5, 0.6, 0.9}) {
    for (double sp0 : {0.37, 1.37, 2.61, 3.9}) {
      for (int psi_i = 0; psi_i <= 7; ++psi_i) {
        const double psi = psi_i;
        if (std::abs(psi - sp0) < 1e-3) continue;
        const Tensor psi_t = Tensor::from({1}, {psi});
        const auto mask_at = [&](double sp) {
          return build_exponential_mask(psi_t, lambda, Tensor::scalar(sp)).item();
        };
        const double fd = (mask_at(sp0 + h) - mask_at(sp0 - h)) / (2.0 * h);
        const double closed = exponential_mask_sp_derivative(psi, lambda, sp0);
        Tensor sp = Tensor::scalar(sp0, true);
        build_exponential_mask(psi_t, lambda, sp).backward();
        const double autodiff = sp.grad()[0];
        worst = std::max({worst, std::abs(closed - fd), std::abs(autodiff - fd)});
      }
    }
  }
  return worst;
}

}  // namespace

GradcheckReport run_gradcheck(const RunConfig& cfg, bool inject_fault) {
  GradcheckReport report;
  SplitMix64 rng(cfg.seed ^ 0x6C8E9CF570932BD5ULL);
  for (report.attempts = 1; report.attempts <= 20; ++report.attempts) {
    const Dataset ds = gradcheck_graphs(cfg, rng);
    GradformerModel model(cfg.model, ds.task, ds.d_in, cfg.seed + report.attempts);
    // Non-integer start points keep relu(psi - sp) away from its kink.
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
      auto& sps = model.layers()[l].start_points;
      for (std::size_t t = 0; t < sps.size(); ++t) sps[t].mutable_values()[0] = t + 0.37 + 0.11 * l;
    }
    // Spread the zero-initialized biases and unit gains so their gradients are generic.
    for (auto& p : model.parameters()) {
      if (p.name.ends_with(".sp")) continue;
      for (auto& v : p.tensor.mutable_values()) v += rng.uniform(-0.2, 0.2);
    }
    const auto prepared = prepare_dataset(ds, cfg.model.index, cfg.model.effective_pe_dim());
    std::vector<const PreparedGraph*> ptrs;
    for (const auto& p : prepared) ptrs.push_back(&p);
    const GraphBatch batch = make_batch(ptrs, ds.task, cfg.model.decay.unreachable);
    const auto loss = [&] {
      const Tensor pred = model.forward(batch);
      return ds.task.is_classification() ? cross_entropy(pred, batch.class_labels)
                                         : mean_abs_error(pred, batch.targets);
    };
    double kink = 0.0;
    {
      ReluKinkMonitor monitor;
      NoGradGuard no_grad;
      loss();
      kink = monitor.min_abs_input();
    }
    if (kink < 1e-4 && report.attempts < 20) continue;

    const auto named = model.parameters();
    std::vector<Tensor> params;
    for (const auto& p : named) params.push_back(p.tensor);
    std::optional<ScopedSoftmaxGradFault> fault;
    if (inject_fault) fault.emplace(1.5);
    const GradcheckResult r = gradcheck(loss, params);
    report.model_max_error = r.max_relative_error;
    for (std::size_t k = 0; k < named.size(); ++k) report.per_parameter.emplace_back(named[k].name, r.per_param[k]);
    break;
  }
  report.mask_sp_max_error = mask_sp_check();
  return report;
}

int cmd_gradcheck(const GlobalOptions& g, const GradcheckOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const RunConfig cfg = resolve_config(g, gradcheck_base_config());
        const GradcheckReport r = run_gradcheck(cfg, opts.inject_fault);
        for (const auto& [name, e] : r.per_parameter) out << std::left << std::setw(32) << name << fmt(e) << '\n';
        out << "model max relative error " << fmt(r.model_max_error) << '\n';
        out << "mask d/dsp max abs error " << fmt(r.mask_sp_max_error) << '\n';
        const bool pass = r.model_max_error <= opts.threshold && r.mask_sp_max_error <= opts.threshold;
        if (g.out) {
          prepare_output_dir(*g.out, g.force);
          json j = {{"model_max_error", r.model_max_error},
                    {"mask_sp_max_error", r.mask_sp_max_error},
                    {"threshold", opts.threshold},
                    {"pass", pass},
                    {"per_parameter", json::object()}};
          for (const auto& [name, e] : r.per_parameter) j["per_parameter"][name] = e;
          write_text(fs::path(*g.out) / "gradcheck.json", j.dump(2) + "\n");
        }
        out << (pass ? "PASS" : "FAIL") << '\n';
        if (!pass) err << "gradient check exceeds threshold " << fmt(opts.threshold) << '\n';
        return pass ? kExitOk : kExitCheckFailed;
      },
      err);
}

std::vector<MassBucket> attention_mass_by_hop(const std::vector<double>& attention, const StructuralIndex& index) {
  const std::size_t n = index.n;
  std::map<long long, double> finite;
  double unreachable = 0.0;
  bool any_unreachable = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = attention[i * n + j];
      if (index.finite(i, j)) {
        finite[static_cast<long long>(std::floor(index.at(i, j) + 1e-9))] += a;
      } else {
        unreachable += a;
        any_unreachable = true;
      }
    }
  }
  std::vector<MassBucket> out;
  const double rows = n ? static_cast<double>(n) : 1.0;
  for (const auto& [b, mass] : finite) out.push_back({std::to_string(b), mass / rows});
  if (any_unreachable) out.push_back({"unreachable", unreachable / rows});
  return out;
}

int cmd_inspect_attention(const GlobalOptions& g, const InspectOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
        const RunConfig cfg = config_from_checkpoint(ckpt, g.sets);
        const Dataset ds = opts.data ? load_graph_dataset(*opts.data) : load_run_dataset(cfg);
        if (opts.graph >= ds.size()) {
          throw ParameterError("graph index " + std::to_string(opts.graph) + " is out of range; dataset has " +
                               std::to_string(ds.size()) + " graphs");
        }
        check_task(ckpt, ds);
        const GradformerModel model = model_from_checkpoint(cfg, ds.task, ds.d_in, ckpt);
        const PreparedGraph pg = prepare_graph(ds.graphs[opts.graph], cfg.model.index, cfg.model.effective_pe_dim());
        const PreparedGraph* ptr = &pg;
        const GraphBatch batch = make_batch(std::span<const PreparedGraph* const>(&ptr, 1), ds.task,
                                            cfg.model.decay.unreachable);
        AttentionRecord record;
        ForwardOptions fo;
        fo.record = &record;
        {
          NoGradGuard no_grad;
          model.forward(batch, fo);
        }
        const std::string dir =
            g.out ? *g.out
                  : (fs::path(opts.checkpoint).parent_path() / ("attention_g" + std::to_string(opts.graph))).string();
        prepare_output_dir(dir, g.force);
        const fs::path root(dir);
        const std::size_t n = pg.graph.n;

        std::ostringstream psi;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            psi << (j ? "," : "") << (pg.index.finite(i, j) ? fmt(pg.index.at(i, j)) : std::string("-1"));
          }
          psi << '\n';
        }
        write_text(root / "psi.csv", psi.str());

        std::ostringstream mass;
        mass << "layer,head,psi_bucket,mean_mass\n";
        const std::vector<double> ones(n * n, 1.0);
        for (std::size_t l = 0; l < record.attention.size(); ++l) {
          for (std::size_t h = 0; h < record.attention[l].size(); ++h) {
            const std::string tag = "_l" + std::to_string(l) + "_h" + std::to_string(h) + ".csv";
            const auto att = record.attention[l][h].values();
            write_text(root / ("attention" + tag), matrix_csv(att.data(), n, n, n));
            const Tensor& mask = record.masks[l][h];
            write_text(root / ("mask" + tag),
                       mask.defined() ? matrix_csv(mask.values().data(), n, n, n) : matrix_csv(ones.data(), n, n, n));
            const std::vector<double> dense(att.begin(), att.begin() + static_cast<std::ptrdiff_t>(n * n));
            for (const auto& b : attention_mass_by_hop(dense, pg.index)) {
              mass << l << ',' << h << ',' << b.bucket << ',' << fmt(b.mean_mass) << '\n';
            }
          }
        }
        write_text(root / "attention_mass.csv", mass.str());
        out << "wrote attention for graph " << opts.graph << " (" << n << " nodes, " << record.attention.size()
            << " layers) to " << dir << '\n';
        return kExitOk;
      },
      err);
}

int cmd_gen_synthetic(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        RunConfig cfg = resolve_config(g);
        cfg.data.source = "synthetic";
        const Dataset ds = load_run_dataset(cfg);
        prepare_output_dir(cfg.output_dir, g.force);
        const fs::path path = fs::path(cfg.output_dir) / "dataset.jsonl";
        save_graph_dataset(path.string(), ds);
        out << "wrote " << ds.size() << " " << to_string(ds.task.kind) << " graphs to " << path.string() << '\n';
        return kExitOk;
      },
      err);
}

}  // namespace gradmask
