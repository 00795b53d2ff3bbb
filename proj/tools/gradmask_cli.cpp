#include <iostream>

#include "CLI11.hpp"
#include "gradmask/commands.hpp"

int main(int argc, char** argv) {
  using namespace gradmask;

  CLI::App app{"Graph transformer with learnable decay masks: train, evaluate, ablate, inspect."};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::string config, out;
  std::uint64_t seed = 0;
  app.add_option("--config", config, "run config (JSON, comments allowed)");
  app.add_option("--set", g.sets, "override a config key, e.g. --set decay.lambda=0.5 (repeatable)");
  auto* seed_opt = app.add_option("--seed", seed, "run seed");
  app.add_option("--out", out, "output directory");
  app.add_flag("--force", g.force, "overwrite a non-empty output directory");

  TrainOptions train_opts;
  std::string resume;
  std::size_t stop_after = 0;
  auto* train = app.add_subcommand("train", "train a model and write report, metrics and checkpoints");
  train->add_option("--resume", resume, "continue from a checkpoint");
  auto* stop_opt = train->add_option("--stop-after-epoch", stop_after, "stop once this many epochs have completed");

  EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split of its dataset");
  eval->add_option("checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
  eval->add_option("--split", eval_opts.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  AblateOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "one training run per value of an axis");
  ablate->add_option("axis", ablate_opts.axis, "lambda, decay_fn, index, mpnn or pe")
      ->required()
      ->check(CLI::IsMember({"lambda", "decay_fn", "index", "mpnn", "pe"}));
  ablate->add_option("--values", ablate_opts.values, "values to sweep (default depends on the axis)");
  ablate->add_option("--workers", ablate_opts.workers, "concurrent runs");

  GradcheckOptions grad_opts;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare autodiff gradients with central differences");
  gradcheck->add_flag("--inject-fault", grad_opts.inject_fault, "scale the softmax derivative to show a failure");
  gradcheck->add_option("--threshold", grad_opts.threshold, "maximum allowed error");

  InspectOptions inspect_opts;
  std::string inspect_data;
  auto* inspect = app.add_subcommand("inspect-attention", "dump attention and mask matrices for one graph");
  inspect->add_option("checkpoint", inspect_opts.checkpoint, "checkpoint file")->required();
  inspect->add_option("--data", inspect_data, "dataset file (default: regenerate the run's dataset)");
  inspect->add_option("--graph", inspect_opts.graph, "graph index");

  auto* gen = app.add_subcommand("gen-synthetic", "write the configured synthetic dataset as JSON lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (!config.empty()) g.config = config;
  if (!out.empty()) g.out = out;
  if (seed_opt->count()) g.seed = seed;
  if (!resume.empty()) train_opts.resume = resume;
  if (stop_opt->count()) train_opts.stop_after_epoch = stop_after;
  if (!inspect_data.empty()) inspect_opts.data = inspect_data;

  if (*train) return cmd_train(g, train_opts, std::cout, std::cerr);
  if (*eval) return cmd_eval(g, eval_opts, std::cout, std::cerr);
  if (*ablate) return cmd_ablate(g, ablate_opts, std::cout, std::cerr);
  if (*gradcheck) return cmd_gradcheck(g, grad_opts, std::cout, std::cerr);
  if (*inspect) return cmd_inspect_attention(g, inspect_opts, std::cout, std::cerr);
  if (*gen) return cmd_gen_synthetic(g, std::cout, std::cerr);
  return kExitValidation;
}
