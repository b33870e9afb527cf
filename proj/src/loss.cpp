#include "mmcl/loss.hpp"

#include <cmath>
#include <exception>

#include "mmcl/errors.hpp"
#include "mmcl/rng.hpp"

namespace mmcl {

namespace {

void check_batch(const LossBatch& b) {
  const Index d = b.z.size();
  if (d == 0) throw InvalidArgument("loss: empty embedding");
  if (b.z_pos.size() != d || b.z_neg.rows() != d) throw InvalidArgument("loss: embedding dimensions differ");
  if (b.alpha.size() != b.z_neg.cols()) {
    throw InvalidArgument("loss: alpha has " + std::to_string(b.alpha.size()) + " entries for " +
                          std::to_string(b.z_neg.cols()) + " negatives");
  }
}

void check_nce(VecRef z, VecRef z_pos, MatRef z_neg, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("nce: temperature must be positive");
  if (z.size() == 0 || z_pos.size() != z.size() || z_neg.rows() != z.size()) {
    throw InvalidArgument("nce: embedding dimensions differ");
  }
}

// Softmax over [z'z_pos, z'Z-] / temperature.
Vec nce_probabilities(VecRef z, VecRef z_pos, MatRef z_neg, double temperature, double* loss) {
  const Index n = z_neg.cols();
  Vec logits(n + 1);
  logits(0) = z.dot(z_pos) / temperature;
  logits.tail(n) = (z_neg.transpose() * z) / temperature;
  const double top = logits.maxCoeff();
  Vec p = (logits.array() - top).exp().matrix();
  const double total = p.sum();
  if (loss != nullptr) *loss = -(logits(0) - top - std::log(total));
  return p / total;
}

}  // namespace

double mmcl_loss(const LossBatch& batch, const KernelSpec& spec) {
  check_batch(batch);
  const double k_pos = kernel_eval(spec, batch.z_pos, batch.z);
  double loss = 0.0;
  for (Index i = 0; i < batch.z_neg.cols(); ++i) {
    loss += batch.alpha(i) * (kernel_eval(spec, batch.z_neg.col(i), batch.z) - k_pos);
  }
  return loss;
}

LossGrads mmcl_grad(const LossBatch& batch, const KernelSpec& spec) {
  check_batch(batch);
  const Index d = batch.z.size();
  const Index n = batch.z_neg.cols();
  const double alpha_sum = batch.alpha.sum();

  LossGrads g;
  g.d_z = -alpha_sum * kernel_grad(spec, batch.z_pos, batch.z);
  g.d_z_pos = -alpha_sum * kernel_grad(spec, batch.z, batch.z_pos);
  g.d_z_neg = Mat::Zero(d, n);
  for (Index i = 0; i < n; ++i) {
    const double a = batch.alpha(i);
    if (a == 0.0) continue;
    g.d_z += a * kernel_grad(spec, batch.z_neg.col(i), batch.z);
    g.d_z_neg.col(i) = a * kernel_grad(spec, batch.z, batch.z_neg.col(i));
  }
  return g;
}

double decision_function(const LossBatch& batch, const KernelSpec& spec) {
  check_batch(batch);
  const double k_pos = kernel_eval(spec, batch.z_pos, batch.z);
  double w = 0.0;
  for (Index i = 0; i < batch.z_neg.cols(); ++i) {
    w += batch.alpha(i) * (k_pos - kernel_eval(spec, batch.z_neg.col(i), batch.z));
  }
  return w;
}

Vec fn_correct(VecRef alpha, double C) {
  Vec out = alpha;
  if (C == kUnboundedC) return out;
  for (Index i = 0; i < out.size(); ++i) {
    if (std::abs(out(i) - C) <= 1e-9) out(i) = 0.0;
  }
  return out;
}

double nce_loss(VecRef z, VecRef z_pos, MatRef z_neg, double temperature) {
  check_nce(z, z_pos, z_neg, temperature);
  double loss = 0.0;
  nce_probabilities(z, z_pos, z_neg, temperature, &loss);
  return loss;
}

LossGrads nce_grad(VecRef z, VecRef z_pos, MatRef z_neg, double temperature) {
  check_nce(z, z_pos, z_neg, temperature);
  const Vec p = nce_probabilities(z, z_pos, z_neg, temperature, nullptr);
  const Index n = z_neg.cols();
  LossGrads g;
  g.d_z = ((p(0) - 1.0) * z_pos + z_neg * p.tail(n)) / temperature;
  g.d_z_pos = ((p(0) - 1.0) / temperature) * z;
  g.d_z_neg = z * (p.tail(n).transpose() / temperature);
  return g;
}

std::string_view to_string(Reduction r) { return r == Reduction::sum ? "sum" : "mean"; }

Reduction parse_reduction(std::string_view name) {
  if (name == "sum") return Reduction::sum;
  if (name == "mean") return Reduction::mean;
  throw InvalidArgument("unknown reduction '" + std::string(name) + "'");
}

std::vector<Index> negative_columns(Index batch_size, Index anchor) {
  std::vector<Index> cols;
  cols.reserve(static_cast<std::size_t>(2 * (batch_size - 1)));
  for (Index view = 0; view < 2; ++view) {
    for (Index j = 0; j < batch_size; ++j) {
      if (j != anchor) cols.push_back(view * batch_size + j);
    }
  }
  return cols;
}

namespace {

void check_views(MatRef view1, MatRef view2) {
  if (view1.rows() != view2.rows() || view1.cols() != view2.cols()) {
    throw InvalidArgument("batch_loss: views must have identical shapes");
  }
  if (view1.cols() < 2) throw InvalidArgument("batch_loss: need N >= 2 so that negatives exist");
}

Mat stack_views(MatRef view1, MatRef view2) {
  Mat all(view1.rows(), 2 * view1.cols());
  all << view1, view2;
  return all;
}

LossBatch gather_anchor(const Mat& all, Index n, Index k, const std::vector<Index>& negs) {
  LossBatch b;
  b.z_pos = all.col(k);
  b.z = all.col(n + k);
  b.z_neg.resize(all.rows(), static_cast<Index>(negs.size()));
  for (std::size_t i = 0; i < negs.size(); ++i) b.z_neg.col(static_cast<Index>(i)) = all.col(negs[i]);
  return b;
}

// Sums per-anchor gradients into the view buffers in anchor order.
void accumulate(BatchLossResult& out, std::vector<AnchorResult>& anchors, Index n, Index d, double scale,
                bool keep) {
  Mat d_all = Mat::Zero(d, 2 * n);
  out.loss = 0.0;
  for (Index k = 0; k < n; ++k) {
    auto& a = anchors[static_cast<std::size_t>(k)];
    out.loss += a.loss;
    d_all.col(n + k) += a.grads.d_z;
    d_all.col(k) += a.grads.d_z_pos;
    const auto negs = negative_columns(n, k);
    for (std::size_t i = 0; i < negs.size(); ++i) d_all.col(negs[i]) += a.grads.d_z_neg.col(static_cast<Index>(i));
    if (!keep) a.grads = LossGrads{};
  }
  out.loss *= scale;
  d_all *= scale;
  out.d_view1 = d_all.leftCols(n);
  out.d_view2 = d_all.rightCols(n);
  out.anchors = std::move(anchors);
}

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

BatchLossResult batch_loss(MatRef view1, MatRef view2, const BatchLossOptions& opts) {
  check_views(view1, view2);
  opts.kernel.validate();
  const Index n = view1.cols();
  const Mat all = stack_views(view1, view2);
  const Mat g = gram(opts.kernel, all, all);

  std::vector<AnchorResult> anchors(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (Index k = 0; k < n; ++k) {
    try {
      const auto negs = negative_columns(n, k);
      const Index m = static_cast<Index>(negs.size());
      Vec k_xy(m);
      Mat k_yy(m, m);
      for (Index j = 0; j < m; ++j) {
        k_xy(j) = g(k, negs[j]);
        for (Index i = 0; i < m; ++i) k_yy(i, j) = g(negs[i], negs[j]);
      }
      const SvmInstance inst = instance_from_blocks(g(k, k), std::move(k_xy), std::move(k_yy), opts.C, opts.beta);
      SolverConfig cfg = opts.solver_cfg;
      cfg.seed = stream_id({opts.solver_cfg.seed, static_cast<std::uint64_t>(k)});

      auto& res = anchors[static_cast<std::size_t>(k)];
      res.solution = solve(inst, opts.solver, cfg);
      res.alpha = opts.fn_correction ? fn_correct(res.solution.alpha, opts.C) : res.solution.alpha;

      LossBatch b = gather_anchor(all, n, k, negs);
      b.alpha = res.alpha;
      res.loss = mmcl_loss(b, opts.kernel);
      res.grads = mmcl_grad(b, opts.kernel);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  rethrow_first(errors);

  BatchLossResult out;
  const double scale = opts.reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  accumulate(out, anchors, n, view1.rows(), scale, opts.keep_anchor_grads);
  return out;
}

BatchLossResult nce_batch_loss(MatRef view1, MatRef view2, double temperature, Reduction reduction,
                               bool keep_anchor_grads) {
  check_views(view1, view2);
  if (!(temperature > 0.0)) throw InvalidArgument("nce: temperature must be positive");
  const Index n = view1.cols();
  const Mat all = stack_views(view1, view2);

  std::vector<AnchorResult> anchors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < n; ++k) {
    const auto negs = negative_columns(n, k);
    const LossBatch b = gather_anchor(all, n, k, negs);
    auto& res = anchors[static_cast<std::size_t>(k)];
    res.loss = nce_loss(b.z, b.z_pos, b.z_neg, temperature);
    res.grads = nce_grad(b.z, b.z_pos, b.z_neg, temperature);
  }

  BatchLossResult out;
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  accumulate(out, anchors, n, view1.rows(), scale, keep_anchor_grads);
  return out;
}

}  // namespace mmcl
