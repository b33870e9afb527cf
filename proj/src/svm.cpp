#include "mmcl/svm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mmcl/errors.hpp"
#include "mmcl/rng.hpp"

namespace mmcl {

std::string_view to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::pgd: return "pgd";
    case SolverKind::inv: return "inv";
    case SolverKind::oracle: return "oracle";
  }
  return "?";
}

SolverKind parse_solver_kind(std::string_view name) {
  if (name == "pgd") return SolverKind::pgd;
  if (name == "inv") return SolverKind::inv;
  if (name == "oracle") return SolverKind::oracle;
  throw InvalidArgument("unknown solver '" + std::string(name) + "'");
}

void SolverConfig::validate() const {
  if (step_size && !(*step_size > 0.0)) throw InvalidArgument("solver step_size must be positive");
  if (!(tol > 0.0)) throw InvalidArgument("solver tol must be positive");
}

namespace {

void check_penalties(double C, double beta) {
  if (!(C > 0.0)) throw InvalidArgument("slack penalty C must be positive");
  if (!(beta >= 0.0)) throw InvalidArgument("beta must be nonnegative");
}

}  // namespace

SvmInstance instance_from_blocks(double k_xx, Vec k_xy, Mat k_yy, double C, double beta) {
  check_penalties(C, beta);
  const Index n = k_xy.size();
  if (n == 0) throw InvalidArgument("svm instance needs at least one negative");
  if (k_yy.rows() != n || k_yy.cols() != n) throw InvalidArgument("K_YY must be n x n with n = |k_xY|");

  SvmInstance inst;
  inst.k_xx = k_xx;
  inst.C = C;
  inst.beta = beta;
  inst.delta.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      inst.delta(i, j) = k_xx + k_yy(i, j) - k_xy(i) - k_xy(j);
      inst.delta(j, i) = inst.delta(i, j);
    }
    inst.delta(j, j) += beta;
  }
  inst.k_xy = std::move(k_xy);
  inst.k_yy = std::move(k_yy);
  return inst;
}

SvmInstance build_instance(const KernelSpec& spec, VecRef z_pos, MatRef z_neg, double C, double beta) {
  if (z_neg.cols() == 0) throw InvalidArgument("svm instance needs at least one negative");
  if (z_pos.size() != z_neg.rows()) throw InvalidArgument("positive and negatives differ in dimension");
  const double k_xx = kernel_eval(spec, z_pos, z_pos);
  Vec k_xy = gram(spec, z_pos, z_neg).transpose();
  Mat k_yy = gram(spec, z_neg, z_neg);
  return instance_from_blocks(k_xx, std::move(k_xy), std::move(k_yy), C, beta);
}

SvmInstance instance_from_delta(Mat delta, double C) {
  check_penalties(C, 0.0);
  if (delta.rows() == 0 || delta.rows() != delta.cols()) throw InvalidArgument("delta must be square and nonempty");
  SvmInstance inst;
  inst.delta = std::move(delta);
  inst.C = C;
  return inst;
}

double dual_objective(MatRef delta, VecRef alpha) {
  if (delta.rows() != alpha.size() || delta.cols() != alpha.size()) {
    throw InvalidArgument("dual_objective: shape mismatch");
  }
  return 0.5 * alpha.dot(delta * alpha) - 2.0 * alpha.sum();
}

Vec project_box(VecRef alpha, double C) {
  Vec out = alpha.cwiseMax(0.0);
  if (C != kUnboundedC) out = out.cwiseMin(C);
  return out;
}

double projected_gradient_norm(const SvmInstance& inst, VecRef alpha) {
  const Vec grad = inst.delta * alpha - Vec::Constant(alpha.size(), 2.0);
  return (alpha - project_box(alpha - grad, inst.C)).norm();
}

double spectral_norm_estimate(MatRef m, int steps) {
  const Index n = m.rows();
  Vec v = Vec::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int s = 0; s < steps; ++s) {
    Vec w = m * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    lambda = norm;
    v = w / norm;
  }
  return lambda;
}

namespace {

DualSolution finish(const SvmInstance& inst, Vec alpha, std::size_t iterations, SolverKind kind, bool converged) {
  DualSolution sol;
  sol.objective = dual_objective(inst.delta, alpha);
  sol.alpha = std::move(alpha);
  sol.iterations = iterations;
  sol.solver = kind;
  sol.converged = converged;
  return sol;
}

}  // namespace

DualSolution solve_inv(const SvmInstance& inst) {
  const Index n = inst.size();
  Eigen::LDLT<Mat> ldlt(inst.delta);
  const bool positive = ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 1e-14 * ldlt.vectorD().maxCoeff();
  const double rcond = positive ? ldlt.rcond() : 0.0;
  if (!(rcond > 1e-14)) {
    std::ostringstream msg;
    msg << "solve_inv: delta is numerically singular (n=" << n << ", beta=" << inst.beta << ", C=" << inst.C
        << ", rcond=" << rcond << ")";
    throw NumericalSingularity(msg.str());
  }
  Vec alpha = ldlt.solve(Vec::Constant(n, 2.0));
  return finish(inst, project_box(alpha, inst.C), 1, SolverKind::inv, true);
}

DualSolution solve_pgd(const SvmInstance& inst, const SolverConfig& cfg) {
  const Index n = inst.size();
  CounterRng rng(cfg.seed, 0x70676430ULL);
  const double hi = std::min(inst.C, 1.0);
  Vec alpha0(n);
  for (Index i = 0; i < n; ++i) alpha0(i) = rng.uniform(0.0, hi);
  return solve_pgd(inst, cfg, alpha0);
}

DualSolution solve_pgd(const SvmInstance& inst, const SolverConfig& cfg, VecRef alpha0) {
  cfg.validate();
  const Index n = inst.size();
  if (alpha0.size() != n) throw InvalidArgument("solve_pgd: alpha0 has wrong size");

  double eta = 0.0;
  if (cfg.step_size) {
    eta = *cfg.step_size;
  } else {
    const double norm = spectral_norm_estimate(inst.delta);
    if (!(norm > 0.0)) throw InvalidInstance("solve_pgd: delta has zero spectral norm");
    eta = 1.0 / norm;
  }

  const Vec two = Vec::Constant(n, 2.0);
  const double C = inst.C;
  auto project = [C](Vec& v) {
    v = v.cwiseMax(0.0);
    if (C != kUnboundedC) v = v.cwiseMin(C);
  };
  Vec alpha = project_box(alpha0, C);
  Vec d_alpha = inst.delta * alpha;
  Vec scratch(n);
  auto stationarity = [&](const Vec& a, const Vec& da) {
    scratch = a - (da - two);
    project(scratch);
    return (a - scratch).norm();
  };

  std::size_t iter = 0;
  bool converged = stationarity(alpha, d_alpha) <= cfg.tol;

  if (!cfg.nesterov) {
    while (!converged && iter < cfg.max_iters) {
      alpha -= eta * (d_alpha - two);
      project(alpha);
      d_alpha.noalias() = inst.delta * alpha;
      ++iter;
      converged = stationarity(alpha, d_alpha) <= cfg.tol;
    }
    return finish(inst, std::move(alpha), iter, SolverKind::pgd, converged);
  }

  // Accelerated variant with function-value restart. delta * y is obtained by
  // linearity from delta * alpha_k and delta * alpha_{k-1}; one product per step.
  Vec prev = alpha;
  Vec d_prev = d_alpha;
  Vec next(n);
  Vec d_next(n);
  double t = 1.0;
  double g = 0.5 * alpha.dot(d_alpha) - 2.0 * alpha.sum();
  while (!converged && iter < cfg.max_iters) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double mom = (t - 1.0) / t_next;
    next = alpha + mom * (alpha - prev) - eta * (d_alpha + mom * (d_alpha - d_prev) - two);
    project(next);
    d_next.noalias() = inst.delta * next;
    double g_next = 0.5 * next.dot(d_next) - 2.0 * next.sum();
    if (g_next > g && mom > 0.0) {
      next = alpha - eta * (d_alpha - two);
      project(next);
      d_next.noalias() = inst.delta * next;
      g_next = 0.5 * next.dot(d_next) - 2.0 * next.sum();
      t = 1.0;
    } else {
      t = t_next;
    }
    prev.swap(alpha);
    alpha.swap(next);
    d_prev.swap(d_alpha);
    d_alpha.swap(d_next);
    g = g_next;
    ++iter;
    converged = stationarity(alpha, d_alpha) <= cfg.tol;
  }
  return finish(inst, std::move(alpha), iter, SolverKind::pgd, converged);
}

DualSolution solve_oracle(const SvmInstance& inst, double tol, std::size_t max_sweeps) {
  if (!(tol > 0.0)) throw InvalidArgument("solve_oracle: tol must be positive");
  const Index n = inst.size();
  for (Index i = 0; i < n; ++i) {
    if (!(inst.delta(i, i) > 0.0)) {
      throw InvalidInstance("solve_oracle: delta(" + std::to_string(i) + "," + std::to_string(i) +
                            ") is not positive");
    }
  }
  Vec alpha = Vec::Zero(n);
  Vec d_alpha = Vec::Zero(n);
  std::size_t sweep = 0;
  bool converged = false;
  while (!converged && sweep < max_sweeps) {
    double max_change = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double dii = inst.delta(i, i);
      const double off = d_alpha(i) - dii * alpha(i);
      double a = (2.0 - off) / dii;
      a = std::max(a, 0.0);
      if (inst.C != kUnboundedC) a = std::min(a, inst.C);
      const double change = a - alpha(i);
      if (change != 0.0) {
        d_alpha += change * inst.delta.col(i);
        alpha(i) = a;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    ++sweep;
    converged = max_change <= tol;
    // Rank-one updates drift; refresh the running product now and then.
    if (sweep % 64 == 0) d_alpha.noalias() = inst.delta * alpha;
  }
  return finish(inst, std::move(alpha), sweep, SolverKind::oracle, converged);
}

DualSolution solve(const SvmInstance& inst, SolverKind kind, const SolverConfig& cfg) {
  switch (kind) {
    case SolverKind::pgd: return solve_pgd(inst, cfg);
    case SolverKind::inv: return solve_inv(inst);
    case SolverKind::oracle: return solve_oracle(inst);
  }
  throw InvalidArgument("unknown solver kind");
}

}  // namespace mmcl
