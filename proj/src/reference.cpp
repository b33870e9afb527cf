#include "mmcl/reference.hpp"

#include "mmcl/errors.hpp"
#include "mmcl/rng.hpp"

namespace mmcl::reference {

Mat gram(const KernelSpec& spec, MatRef a, MatRef b) {
  if (a.rows() != b.rows()) throw InvalidArgument("gram: row dimension mismatch");
  Mat out(a.cols(), b.cols());
  for (Index j = 0; j < b.cols(); ++j) {
    for (Index i = 0; i < a.cols(); ++i) out(i, j) = kernel_eval(spec, a.col(i), b.col(j));
  }
  return out;
}

BatchLossResult batch_loss(MatRef view1, MatRef view2, const BatchLossOptions& opts) {
  if (view1.rows() != view2.rows() || view1.cols() != view2.cols()) {
    throw InvalidArgument("batch_loss: views must have identical shapes");
  }
  const Index n = view1.cols();
  if (n < 2) throw InvalidArgument("batch_loss: need N >= 2 so that negatives exist");
  const Index d = view1.rows();

  BatchLossResult out;
  out.d_view1 = Mat::Zero(d, n);
  out.d_view2 = Mat::Zero(d, n);
  for (Index k = 0; k < n; ++k) {
    LossBatch b;
    b.z_pos = view1.col(k);
    b.z = view2.col(k);
    b.z_neg.resize(d, 2 * (n - 1));
    std::vector<std::pair<int, Index>> slots;  // (view, column) per negative
    Index c = 0;
    for (int view = 0; view < 2; ++view) {
      for (Index j = 0; j < n; ++j) {
        if (j == k) continue;
        b.z_neg.col(c++) = view == 0 ? view1.col(j) : view2.col(j);
        slots.emplace_back(view, j);
      }
    }
    // Local Gram evaluation; kernel values match the shared-Gram path entry for entry.
    const double k_xx = kernel_eval(opts.kernel, b.z_pos, b.z_pos);
    Vec k_xy = reference::gram(opts.kernel, b.z_pos, b.z_neg).transpose();
    Mat k_yy = reference::gram(opts.kernel, b.z_neg, b.z_neg);
    const SvmInstance inst = instance_from_blocks(k_xx, std::move(k_xy), std::move(k_yy), opts.C, opts.beta);

    SolverConfig cfg = opts.solver_cfg;
    cfg.seed = stream_id({opts.solver_cfg.seed, static_cast<std::uint64_t>(k)});
    AnchorResult res;
    res.solution = solve(inst, opts.solver, cfg);
    res.alpha = opts.fn_correction ? fn_correct(res.solution.alpha, opts.C) : res.solution.alpha;
    b.alpha = res.alpha;
    res.loss = mmcl_loss(b, opts.kernel);
    res.grads = mmcl_grad(b, opts.kernel);

    out.loss += res.loss;
    out.d_view2.col(k) += res.grads.d_z;
    out.d_view1.col(k) += res.grads.d_z_pos;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto [view, j] = slots[i];
      (view == 0 ? out.d_view1 : out.d_view2).col(j) += res.grads.d_z_neg.col(static_cast<Index>(i));
    }
    if (!opts.keep_anchor_grads) res.grads = LossGrads{};
    out.anchors.push_back(std::move(res));
  }
  if (opts.reduction == Reduction::mean) {
    const double s = 1.0 / static_cast<double>(n);
    out.loss *= s;
    out.d_view1 *= s;
    out.d_view2 *= s;
  }
  return out;
}

}  // namespace mmcl::reference
