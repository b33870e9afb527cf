#pragma once

#include "mmcl/loss.hpp"

// Serial implementations of the parallel kernels, kept for cross-checking.
namespace mmcl::reference {

Mat gram(const KernelSpec& spec, MatRef a, MatRef b);

// Builds every anchor's LossBatch from scratch (fresh kernel evaluations,
// no shared Gram) and runs them one after another.
BatchLossResult batch_loss(MatRef view1, MatRef view2, const BatchLossOptions& opts);

}  // namespace mmcl::reference
