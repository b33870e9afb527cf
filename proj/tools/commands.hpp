#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mmcl::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string resume_from;
};

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;  // file; empty means regenerate from the config
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<int> k;
  std::optional<int> probe_epochs;
  std::optional<double> probe_lr;
  std::optional<std::string> features;
};

struct SolveArgs {
  std::string instance_path;
  std::string solver = "inv";
  double C = 100.0;
  double beta = 0.0;
  std::size_t max_iters = 1000;
  std::optional<double> step_size;
  double tol = 1e-8;
  bool nesterov = true;
  std::uint64_t seed = 0;
};

struct InspectArgs {
  std::string checkpoint;
  std::string dataset;
  std::string config_path;
  std::vector<std::string> overrides;
  long long anchor = 0;
  std::string solver = "inv";
};

struct BenchArgs {
  std::vector<int> sizes = {16, 32, 64, 128};
  int dim = 32;
  int repeats = 3;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_solve(const SolveArgs& args, std::ostream& out, std::ostream& err);
int cmd_inspect(const InspectArgs& args, std::ostream& out, std::ostream& err);
int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err);

}  // namespace mmcl::cli

#include "mmcl/svm.hpp"

namespace mmcl::cli {

// Instance files are sections of CSV rows:
//   [delta]                    full dual matrix (beta is still added)
// or
//   [k_xx] (optional, default 1), [k_xY], [K_YY]
// or
//   [kernel] with key = value lines (kind, sigma_sq, gamma, bias, tanh_sign),
//   [z_pos] one row, [Z_neg] one negative per row.
// Throws ParseError on malformed input.
SvmInstance load_instance(const std::string& path, double C, double beta);

}  // namespace mmcl::cli
