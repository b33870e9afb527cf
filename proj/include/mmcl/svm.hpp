#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>

#include "mmcl/kernels.hpp"
#include "mmcl/types.hpp"

namespace mmcl {

inline constexpr double kUnboundedC = std::numeric_limits<double>::infinity();

// One positive z+ against n negatives Z-, with the positive's multiplier
// eliminated (alpha_x = sum(alpha)). The reduced dual is
//
//   min_{0 <= alpha <= C}  g(alpha) = 1/2 alpha' delta alpha - 2 alpha' 1,
//   delta = k_xx 11' + K_YY - k_xY 1' - 1 k_xY' + beta I.
//
// delta - beta I is the Gram matrix of the feature-space differences
// phi(z+) - phi(z_i-).
struct SvmInstance {
  double k_xx = 1.0;
  Vec k_xy;
  Mat k_yy;
  Mat delta;
  double C = 100.0;
  double beta = 0.0;

  Index size() const { return delta.rows(); }
  bool unbounded() const { return C == kUnboundedC; }
};

enum class SolverKind { pgd, inv, oracle };

std::string_view to_string(SolverKind kind);
SolverKind parse_solver_kind(std::string_view name);

struct DualSolution {
  Vec alpha;
  double objective = 0.0;
  std::size_t iterations = 0;
  SolverKind solver = SolverKind::pgd;
  bool converged = false;

  // Multiplier of the single positive.
  double alpha_x() const { return alpha.sum(); }
};

struct SolverConfig {
  // nullopt selects 1 / |delta|_2, estimated by power iteration.
  std::optional<double> step_size;
  std::size_t max_iters = 1000;
  // Stop once |alpha - P(alpha - grad)|_2 <= tol.
  double tol = 1e-8;
  bool nesterov = true;
  // Seeds the uniform alpha_0 in [0, min(C, 1)]^n.
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SolverConfig&) const = default;
};

SvmInstance build_instance(const KernelSpec& spec, VecRef z_pos, MatRef z_neg, double C, double beta);

// Same construction from precomputed kernel blocks.
SvmInstance instance_from_blocks(double k_xx, Vec k_xy, Mat k_yy, double C, double beta);

// For callers that already hold delta (k_* blocks are left empty).
SvmInstance instance_from_delta(Mat delta, double C);

double dual_objective(MatRef delta, VecRef alpha);

// Elementwise clip to [0, C]; C = +inf clips below only.
Vec project_box(VecRef alpha, double C);

// |alpha - P(alpha - (delta alpha - 2))|_2
double projected_gradient_norm(const SvmInstance& inst, VecRef alpha);

// Largest eigenvalue of a symmetric PSD matrix by power iteration from 1/sqrt(n).
double spectral_norm_estimate(MatRef m, int steps = 50);

// P(2 delta^-1 1). Throws NumericalSingularity when delta is not numerically
// positive definite.
DualSolution solve_inv(const SvmInstance& inst);

// Projected gradient with alpha_0 drawn from cfg.seed.
DualSolution solve_pgd(const SvmInstance& inst, const SolverConfig& cfg);
DualSolution solve_pgd(const SvmInstance& inst, const SolverConfig& cfg, VecRef alpha0);

// Cyclic exact coordinate minimization until the largest per-sweep change is
// <= tol. Reference solver for tests and diagnostics.
DualSolution solve_oracle(const SvmInstance& inst, double tol = 1e-12, std::size_t max_sweeps = 200000);

DualSolution solve(const SvmInstance& inst, SolverKind kind, const SolverConfig& cfg);

}  // namespace mmcl
