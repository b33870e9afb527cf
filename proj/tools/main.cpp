#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "mmcl/parallel.hpp"

int main(int argc, char** argv) {
  using namespace mmcl::cli;

  CLI::App app{"Max-margin contrastive learning: SVM-selected hard negatives for representation learning"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "worker threads for per-anchor solves (1 = deterministic; default MMCL_THREADS or 1)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train an encoder");
  train_cmd->add_option("--config", train.config_path, "config file (key = value lines)");
  train_cmd->add_option("--set", train.overrides, "override a config key, key=value (repeatable)");
  train_cmd->add_option("--resume", train.resume_from, "checkpoint to resume from");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "kNN and linear-probe readout of a frozen encoder");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "encoder checkpoint")->required();
  eval_cmd->add_option("--dataset", eval.dataset, "labeled dataset (.csv or .mmd); default: regenerate from config");
  eval_cmd->add_option("--config", eval.config_path, "config file");
  eval_cmd->add_option("--set", eval.overrides, "override a config key (repeatable)");
  eval_cmd->add_option("-k,--k", eval.k, "neighbours for the kNN readout");
  eval_cmd->add_option("--probe-epochs", eval.probe_epochs, "linear probe epochs");
  eval_cmd->add_option("--probe-lr", eval.probe_lr, "linear probe learning rate");
  eval_cmd->add_option("--features", eval.features, "backbone | head");

  SolveArgs solve;
  std::string step = "auto";
  auto* solve_cmd = app.add_subcommand("solve", "solve one SVM dual instance");
  solve_cmd->add_option("instance", solve.instance_path, "instance file")->required();
  solve_cmd->add_option("--solver", solve.solver, "pgd | inv | oracle");
  solve_cmd->add_option("--C", solve.C, "slack penalty (inf allowed)");
  solve_cmd->add_option("--beta", solve.beta, "diagonal regularizer added to delta");
  solve_cmd->add_option("--max-iters", solve.max_iters, "PGD iteration budget");
  solve_cmd->add_option("--step", step, "PGD step size or 'auto' (1/|delta|_2)");
  solve_cmd->add_option("--tol", solve.tol, "PGD stationarity tolerance");
  solve_cmd->add_option("--nesterov", solve.nesterov, "accelerated PGD (true/false)");
  solve_cmd->add_option("--seed", solve.seed, "seed for alpha_0");

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "dump the SVM multipliers for one anchor's batch");
  inspect_cmd->add_option("--checkpoint", inspect.checkpoint, "encoder checkpoint")->required();
  inspect_cmd->add_option("--dataset", inspect.dataset, "labeled dataset; default: regenerate from config");
  inspect_cmd->add_option("--config", inspect.config_path, "config file");
  inspect_cmd->add_option("--set", inspect.overrides, "override a config key (repeatable)");
  inspect_cmd->add_option("--anchor", inspect.anchor, "dataset row of the anchor")->required();
  inspect_cmd->add_option("--solver", inspect.solver, "pgd | inv | oracle");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "time batch_loss per batch size and loss variant");
  bench_cmd->add_option("sizes", bench.sizes, "batch sizes");
  bench_cmd->add_option("--dim", bench.dim, "embedding dimension");
  bench_cmd->add_option("--repeats", bench.repeats, "runs per measurement (median reported)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  mmcl::set_num_threads(threads > 0 ? threads : mmcl::threads_from_env(1));

  if (*train_cmd) return cmd_train(train, std::cout, std::cerr);
  if (*eval_cmd) return cmd_eval(eval, std::cout, std::cerr);
  if (*solve_cmd) {
    if (step != "auto") {
      try {
        solve.step_size = std::stod(step);
      } catch (const std::exception&) {
        std::cerr << "error: --step must be a number or 'auto'\n";
        return kUsageError;
      }
    }
    return cmd_solve(solve, std::cout, std::cerr);
  }
  if (*inspect_cmd) return cmd_inspect(inspect, std::cout, std::cerr);
  if (*bench_cmd) return cmd_bench(bench, std::cout, std::cerr);
  return kUsageError;
}
