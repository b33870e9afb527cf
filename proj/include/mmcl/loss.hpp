#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mmcl/kernels.hpp"
#include "mmcl/svm.hpp"
#include "mmcl/types.hpp"

namespace mmcl {

// One anchor: z (second view), z_pos (first view, the SVM's positive) and the
// negatives as columns of z_neg. alpha is an input; gradients never flow into it.
struct LossBatch {
  Vec z;
  Vec z_pos;
  Mat z_neg;
  Vec alpha;
};

struct LossGrads {
  Vec d_z;
  Vec d_z_pos;
  Mat d_z_neg;
};

// alpha' (K(Z-, z) - K(z+, z) 1)
double mmcl_loss(const LossBatch& batch, const KernelSpec& spec);
LossGrads mmcl_grad(const LossBatch& batch, const KernelSpec& spec);

// w(z) = alpha' (K(z+, z) 1 - K(Z-, z)) = -mmcl_loss
double decision_function(const LossBatch& batch, const KernelSpec& spec);

// Zeroes coordinates sitting at the upper bound C (|alpha_i - C| <= 1e-9).
Vec fn_correct(VecRef alpha, double C);

// -log softmax of the positive logit, logits = z' [z_pos, Z-] / temperature.
double nce_loss(VecRef z, VecRef z_pos, MatRef z_neg, double temperature);
LossGrads nce_grad(VecRef z, VecRef z_pos, MatRef z_neg, double temperature);

enum class Reduction { sum, mean };

std::string_view to_string(Reduction r);
Reduction parse_reduction(std::string_view name);

struct BatchLossOptions {
  KernelSpec kernel;
  double C = 100.0;
  double beta = 0.1;
  SolverKind solver = SolverKind::inv;
  SolverConfig solver_cfg;
  bool fn_correction = false;
  Reduction reduction = Reduction::sum;
  // Drop per-anchor gradient blocks after accumulation (they are O(N^2 d')).
  bool keep_anchor_grads = true;
};

struct AnchorResult {
  double loss = 0.0;
  // Solver output; `alpha` below is what entered the loss (after correction).
  DualSolution solution;
  Vec alpha;
  LossGrads grads;
};

struct BatchLossResult {
  double loss = 0.0;
  Mat d_view1;
  Mat d_view2;
  std::vector<AnchorResult> anchors;
};

// Columns of [view1 | view2] that act as negatives for anchor k: every column
// except k and N + k, view-1 columns first. Length 2(N - 1).
std::vector<Index> negative_columns(Index batch_size, Index anchor);

// For each anchor k: solve the SVM with z+ = view1[k] against the other
// 2(N - 1) embeddings, then accumulate the loss at z = view2[k]. Anchors run
// in parallel; gradients are summed in anchor order afterwards.
BatchLossResult batch_loss(MatRef view1, MatRef view2, const BatchLossOptions& opts);

// InfoNCE over the same anchor / negative layout.
BatchLossResult nce_batch_loss(MatRef view1, MatRef view2, double temperature, Reduction reduction,
                               bool keep_anchor_grads = true);

}  // namespace mmcl
