#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "mmcl/binio.hpp"
#include "mmcl/config.hpp"
#include "mmcl/data.hpp"
#include "mmcl/encoder.hpp"
#include "mmcl/errors.hpp"
#include "mmcl/eval.hpp"
#include "mmcl/kernels.hpp"
#include "mmcl/loss.hpp"
#include "mmcl/rng.hpp"
#include "mmcl/training.hpp"

namespace mmcl::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_row(const std::string& line, std::size_t line_no) {
  std::vector<double> row;
  std::istringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != cell.size()) throw ParseError("non-numeric cell '" + cell + "'", line_no);
    row.push_back(v);
  }
  return row;
}

struct Sections {
  std::map<std::string, std::vector<std::vector<double>>> numeric;
  std::map<std::string, std::string> kernel;
};

Sections read_sections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open instance '" + path + "'");
  Sections s;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (section != "kernel" && section != "delta" && section != "k_xx" && section != "k_xY" &&
          section != "K_YY" && section != "z_pos" && section != "Z_neg") {
        throw ParseError("unknown section [" + section + "]", line_no);
      }
      if (section != "kernel") s.numeric[section];
      continue;
    }
    if (section.empty()) throw ParseError("data before the first section header", line_no);
    if (section == "kernel") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("expected key = value in [kernel]", line_no);
      s.kernel[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    } else {
      s.numeric[section].push_back(parse_row(line, line_no));
    }
  }
  return s;
}

Mat to_matrix(const std::vector<std::vector<double>>& rows, const std::string& name) {
  if (rows.empty()) throw ParseError("section [" + name + "] is empty", 0);
  const std::size_t w = rows.front().size();
  Mat m(static_cast<Index>(rows.size()), static_cast<Index>(w));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != w) throw ParseError("section [" + name + "] is ragged", 0);
    for (std::size_t c = 0; c < w; ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return m;
}

Vec to_vector(const std::vector<std::vector<double>>& rows, const std::string& name) {
  const Mat m = to_matrix(rows, name);
  if (m.rows() != 1 && m.cols() != 1) throw ParseError("section [" + name + "] must be a single row or column", 0);
  return Eigen::Map<const Vec>(Mat(m.transpose()).data(), m.size());
}

KernelSpec kernel_from(const std::map<std::string, std::string>& kv) {
  KernelSpec k;
  for (const auto& [key, value] : kv) {
    if (key == "kind") {
      k.kind = parse_kernel_kind(value);
    } else if (key == "sigma_sq" || key == "gamma" || key == "bias" || key == "tanh_sign") {
      double v = 0.0;
      try {
        v = std::stod(value);
      } catch (const std::exception&) {
        throw ParseError("bad number for kernel " + key, 0);
      }
      (key == "sigma_sq" ? k.sigma_sq : key == "gamma" ? k.gamma : key == "bias" ? k.bias : k.tanh_sign) = v;
    } else {
      throw ParseError("unknown kernel key '" + key + "'", 0);
    }
  }
  k.validate();
  return k;
}

// Loads a config file (or defaults) and applies overrides.
TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

const char* category(double alpha, double C) {
  if (alpha <= 0.0) return "non-support";
  if (C != kUnboundedC && std::abs(alpha - C) <= 1e-9) return "margin-violator";
  return "support";
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << " [key: " << e.key() << "]\n";
    return kUsageError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

}  // namespace

SvmInstance load_instance(const std::string& path, double C, double beta) {
  const Sections s = read_sections(path);
  const auto has = [&](const char* name) { return s.numeric.count(name) != 0; };
  if (has("delta")) {
    Mat delta = to_matrix(s.numeric.at("delta"), "delta");
    if (delta.rows() != delta.cols()) throw ParseError("[delta] must be square", 0);
    if (!(beta >= 0.0)) throw InvalidArgument("beta must be nonnegative");
    delta.diagonal().array() += beta;
    SvmInstance inst = instance_from_delta(std::move(delta), C);
    inst.beta = beta;
    return inst;
  }
  if (has("k_xY") || has("K_YY")) {
    if (!has("k_xY") || !has("K_YY")) throw ParseError("instance needs both [k_xY] and [K_YY]", 0);
    const double k_xx = has("k_xx") ? to_vector(s.numeric.at("k_xx"), "k_xx")(0) : 1.0;
    Vec k_xy = to_vector(s.numeric.at("k_xY"), "k_xY");
    Mat k_yy = to_matrix(s.numeric.at("K_YY"), "K_YY");
    if (k_yy.rows() != k_xy.size() || k_yy.cols() != k_xy.size()) throw ParseError("[K_YY] must be n x n", 0);
    return instance_from_blocks(k_xx, std::move(k_xy), std::move(k_yy), C, beta);
  }
  if (has("z_pos") && has("Z_neg")) {
    const KernelSpec k = kernel_from(s.kernel);
    const Vec z_pos = to_vector(s.numeric.at("z_pos"), "z_pos");
    const Mat z_neg = to_matrix(s.numeric.at("Z_neg"), "Z_neg").transpose();
    if (z_neg.rows() != z_pos.size()) throw ParseError("[z_pos] and [Z_neg] differ in dimension", 0);
    return build_instance(k, z_pos, z_neg, C, beta);
  }
  throw ParseError("instance needs [delta], [k_xY]+[K_YY], or [z_pos]+[Z_neg]", 0);
}

int cmd_solve(const SolveArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const SolverKind kind = parse_solver_kind(args.solver);
    const SvmInstance inst = load_instance(args.instance_path, args.C, args.beta);
    SolverConfig cfg;
    cfg.step_size = args.step_size;
    cfg.max_iters = args.max_iters;
    cfg.tol = args.tol;
    cfg.nesterov = args.nesterov;
    cfg.seed = args.seed;
    const DualSolution sol = kind == SolverKind::oracle ? solve_oracle(inst) : solve(inst, kind, cfg);

    Index zero = 0;
    Index interior = 0;
    Index bound = 0;
    for (Index i = 0; i < sol.alpha.size(); ++i) {
      const std::string c = category(sol.alpha(i), inst.C);
      (c == "non-support" ? zero : c == "support" ? interior : bound)++;
    }
    out << "solver,n,C,beta,objective,iterations,converged,alpha_x,n_zero,n_interior,n_at_C\n"
        << to_string(sol.solver) << ',' << inst.size() << ',' << format_double(inst.C) << ','
        << format_double(inst.beta) << ',' << format_double(sol.objective) << ',' << sol.iterations << ','
        << (sol.converged ? 1 : 0) << ',' << format_double(sol.alpha_x()) << ',' << zero << ',' << interior << ','
        << bound << "\n\nindex,alpha,category\n";
    for (Index i = 0; i < sol.alpha.size(); ++i) {
      out << i << ',' << format_double(sol.alpha(i)) << ',' << category(sol.alpha(i), inst.C) << '\n';
    }
    return kOk;
  });
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  if (!args.config_path.empty() && !file_exists(args.config_path)) {
    err << "error: config file '" << args.config_path << "' not found\n";
    return kUsageError;
  }
  TrainConfig cfg;
  PreparedData data;
  TrainState state;
  const int setup = guarded(err, [&] {
    cfg = resolve_config(args.config_path, args.overrides);
    data = prepare_data(cfg);
    if (data.train.size() < static_cast<Index>(cfg.batch_size)) {
      throw InvalidArgument("training split has fewer samples than batch_size");
    }
    state = args.resume_from.empty() ? init_train_state(cfg, data.train.dim()) : load_checkpoint(args.resume_from, cfg.lr);
    if (state.params.in_dim() != data.train.dim()) throw InvalidArgument("checkpoint does not match dataset dimension");
    return kOk;
  });
  if (setup != kOk) return setup;

  return guarded(err, [&] {
    const std::string tmp = cfg.metrics_path + ".tmp";
    {
      std::ofstream metrics(tmp, std::ios::trunc);
      if (!metrics) throw std::runtime_error("cannot write metrics to '" + tmp + "'");
      write_metrics_header(metrics);
      for (const auto& m : state.history) write_metrics_row(metrics, m);
      try {
        train(state, cfg, data, [&](const EpochMetrics& m) {
          write_metrics_row(metrics, m);
          metrics.flush();
          out << "epoch " << m.epoch << " loss " << format_double(m.mean_loss);
          if (m.knn_accuracy) out << " knn " << format_double(*m.knn_accuracy);
          out << '\n';
        });
      } catch (const NonFiniteLoss& e) {
        const std::string diag = cfg.checkpoint_path + ".diag.txt";
        std::ofstream(diag) << e.what() << '\n' << e.diagnostics();
        err << "error: " << e.what() << "\ndiagnostics written to " << diag << '\n';
        return kRuntimeError;
      }
    }
    binio::commit_file(tmp, cfg.metrics_path);
    save_checkpoint(cfg.checkpoint_path, state);
    out << "wrote " << cfg.metrics_path << " and " << cfg.checkpoint_path << '\n';
    return kOk;
  });
}

namespace {

Dataset load_eval_dataset(const std::string& dataset, const TrainConfig& cfg) {
  return dataset.empty() ? make_dataset(cfg.data) : load_dataset(dataset);
}

}  // namespace

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    TrainConfig cfg = resolve_config(args.config_path, args.overrides);
    if (args.k) cfg.eval.k = *args.k;
    if (args.probe_epochs) cfg.eval.probe_epochs = *args.probe_epochs;
    if (args.probe_lr) cfg.eval.probe_lr = *args.probe_lr;
    if (args.features) cfg.eval.features = parse_embedding_source(*args.features);
    const TrainState state = load_checkpoint(args.checkpoint);
    const Dataset ds = load_eval_dataset(args.dataset, cfg);
    if (!ds.labeled()) throw InvalidArgument("eval needs a labeled dataset");
    if (ds.dim() != state.params.in_dim()) throw InvalidArgument("checkpoint does not match dataset dimension");
    const auto [train_set, test_set] = split_dataset(ds, cfg.eval.split, cfg.eval.seed);
    const EvalReport r = evaluate(state.params, train_set, test_set, cfg.eval, &err);
    out << "epoch,loss,knn_acc,linear_acc\n"
        << state.epoch << ',' << (state.history.empty() ? "" : format_double(state.history.back().mean_loss)) << ','
        << format_double(r.knn_accuracy) << ',' << format_double(r.linear_accuracy) << '\n';
    return kOk;
  });
}

int cmd_inspect(const InspectArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const TrainConfig cfg = resolve_config(args.config_path, args.overrides);
    const TrainState state = load_checkpoint(args.checkpoint);
    const Dataset ds = load_eval_dataset(args.dataset, cfg);
    if (!ds.labeled()) throw InvalidArgument("inspect needs a labeled dataset");
    if (ds.dim() != state.params.in_dim()) throw InvalidArgument("checkpoint does not match dataset dimension");
    if (args.anchor < 0 || args.anchor >= ds.size()) {
      throw InvalidArgument("anchor index " + std::to_string(args.anchor) + " out of range [0, " +
                            std::to_string(ds.size()) + ")");
    }
    const auto n = static_cast<Index>(cfg.batch_size);
    if (ds.size() < n) throw InvalidArgument("dataset smaller than batch_size");

    // Anchor first, then N - 1 other samples in seeded order.
    std::vector<Index> rows = {static_cast<Index>(args.anchor)};
    CounterRng rng(cfg.seed, stream_id({0x696E7370ULL, static_cast<std::uint64_t>(args.anchor)}));
    for (Index r : shuffled_indices(ds.size(), rng)) {
      if (static_cast<Index>(rows.size()) == n) break;
      if (r != args.anchor) rows.push_back(r);
    }
    const BatchViews views = make_views(cfg, ds, rows, 0, 0);
    Mat x(ds.dim(), 2 * n);
    x << views.view1, views.view2;
    const Mat emb = forward(state.params, x).embeddings;

    TrainConfig solve_cfg = cfg;
    solve_cfg.loss = parse_solver_kind(args.solver) == SolverKind::pgd ? LossKind::mmcl_pgd : LossKind::mmcl_inv;
    const Phase phase = apply_schedules(cfg, state.epoch);
    BatchLossOptions opts = batch_options(solve_cfg, phase, 0, 0);
    opts.fn_correction = false;
    const BatchLossResult res = batch_loss(emb.leftCols(n), emb.rightCols(n), opts);
    const DualSolution& sol = res.anchors.front().solution;
    const auto negs = negative_columns(n, 0);
    const auto& labels = *ds.labels;

    out << "# anchor=" << args.anchor << " label=" << labels[static_cast<std::size_t>(args.anchor)]
        << " C=" << format_double(phase.C) << " alpha_x=" << format_double(sol.alpha_x())
        << " negatives=" << negs.size() << " solver=" << to_string(sol.solver) << '\n';
    out << "anchor_index,negative_index,dataset_index,view,label,alpha,is_support,is_margin_violator,category\n";
    for (std::size_t i = 0; i < negs.size(); ++i) {
      const Index col = negs[i];
      const Index row = rows[static_cast<std::size_t>(col % n)];
      const double a = sol.alpha(static_cast<Index>(i));
      const std::string cat = category(a, phase.C);
      out << args.anchor << ',' << i << ',' << row << ',' << (col < n ? 1 : 2) << ','
          << labels[static_cast<std::size_t>(row)] << ',' << format_double(a) << ',' << (cat == "support" ? 1 : 0)
          << ',' << (cat == "margin-violator" ? 1 : 0) << ',' << cat << '\n';
    }
    return kOk;
  });
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.repeats < 1 || args.dim < 1) throw InvalidArgument("bench: repeats and dim must be >= 1");
    out << "N,loss_variant,ms_per_iter\n";
    for (int n : args.sizes) {
      if (n < 2) throw InvalidArgument("bench: sizes must be >= 2");
      CounterRng rng(args.seed, stream_id({0x62656E6368ULL, static_cast<std::uint64_t>(n)}));
      Mat v1(args.dim, n);
      Mat v2(args.dim, n);
      for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < args.dim; ++i) {
          v1(i, j) = rng.normal();
          v2(i, j) = v1(i, j) + 0.3 * rng.normal();
        }
        v1.col(j).normalize();
        v2.col(j).normalize();
      }
      for (const char* variant : {"mmcl_pgd", "mmcl_inv", "nce"}) {
        std::vector<double> times;
        for (int r = 0; r < args.repeats; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          if (std::string(variant) == "nce") {
            nce_batch_loss(v1, v2, 0.5, Reduction::sum, false);
          } else {
            BatchLossOptions o;
            o.solver = std::string(variant) == "mmcl_pgd" ? SolverKind::pgd : SolverKind::inv;
            o.keep_anchor_grads = false;
            batch_loss(v1, v2, o);
          }
          times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        }
        std::nth_element(times.begin(), times.begin() + static_cast<long>(times.size() / 2), times.end());
        out << n << ',' << variant << ',' << format_double(times[times.size() / 2]) << '\n';
      }
    }
    return kOk;
  });
}

}  // namespace mmcl::cli
