#pragma once

#include <functional>

#include "mmcl/encoder.hpp"
#include "mmcl/loss.hpp"
#include "test_util.hpp"

namespace mmcl::test {

inline Vec get_flat(const EncoderParams& p) {
  Vec v(p.parameter_count());
  Index at = 0;
  for (std::size_t i = 0; i < p.num_layers(); ++i) {
    const auto& l = p.layer(i);
    v.segment(at, l.weight.size()) = flatten(l.weight);
    at += l.weight.size();
    v.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return v;
}

inline void set_flat(EncoderParams& p, const Vec& v) {
  Index at = 0;
  for (std::size_t i = 0; i < p.num_layers(); ++i) {
    auto& l = p.layer(i);
    l.weight = flatten_to_mat(v.segment(at, l.weight.size()), l.weight.rows(), l.weight.cols());
    at += l.weight.size();
    l.bias = v.segment(at, l.bias.size());
    at += l.bias.size();
  }
}

inline EncoderParams tiny_encoder(std::uint64_t seed, std::vector<Index> backbone, std::vector<Index> head, Index in) {
  EncoderShape s;
  s.in_dim = in;
  s.backbone = std::move(backbone);
  s.head = std::move(head);
  auto p = init_encoder(s, seed);
  // Nonzero biases so every parameter is exercised.
  for (std::size_t i = 0; i < p.num_layers(); ++i) p.layer(i).bias = random_vector(p.layer(i).bias.size(), seed + i, 0.1);
  return p;
}

// Loss of (view1, view2) embeddings; fills d1 / d2 when non-null.
using BatchLoss = std::function<double(const Mat&, const Mat&, Mat*, Mat*)>;

// MMCL batch loss with the multipliers solved once at `e1`, `e2` and then frozen.
inline BatchLoss frozen_mmcl(const Mat& e1, const Mat& e2, const BatchLossOptions& opts) {
  const auto base = batch_loss(e1, e2, opts);
  return [base, opts](const Mat& v1, const Mat& v2, Mat* d1, Mat* d2) {
    const Index n = v1.cols();
    Mat all(v1.rows(), 2 * n);
    all << v1, v2;
    double s = 0;
    for (Index k = 0; k < n; ++k) {
      LossBatch b;
      b.z = v2.col(k);
      b.z_pos = v1.col(k);
      auto cols = negative_columns(n, k);
      b.z_neg.resize(v1.rows(), static_cast<Index>(cols.size()));
      for (size_t i = 0; i < cols.size(); ++i) b.z_neg.col(static_cast<Index>(i)) = all.col(cols[i]);
      b.alpha = base.anchors[static_cast<size_t>(k)].alpha;
      s += mmcl_loss(b, opts.kernel);
    }
    if (d1) {
      *d1 = base.d_view1;
      *d2 = base.d_view2;
    }
    return s;
  };
}

inline BatchLoss nce_of(double temperature) {
  return [temperature](const Mat& v1, const Mat& v2, Mat* d1, Mat* d2) {
    auto r = nce_batch_loss(v1, v2, temperature, Reduction::sum);
    if (d1) {
      *d1 = r.d_view1;
      *d2 = r.d_view2;
    }
    return r.loss;
  };
}

struct GradCheck {
  double relative = 0.0;  // whole-vector relative error
  int bad_entries = 0;    // entries off by more than 1e-4 of their own scale
};

inline GradCheck encoder_gradient_check(const EncoderParams& p, const Mat& x1, const Mat& x2, const BatchLoss& loss) {
  const Index n = x1.cols();
  Mat x(x1.rows(), 2 * n);
  x << x1, x2;
  auto fw = forward(p, x);
  Mat d1, d2;
  loss(fw.embeddings.leftCols(n), fw.embeddings.rightCols(n), &d1, &d2);
  Mat d(d1.rows(), 2 * n);
  d << d1, d2;
  const Vec analytic = get_flat(backward(p, fw.tape, d));
  auto f = [&](const Vec& flat) {
    EncoderParams q = p;
    set_flat(q, flat);
    Mat e = forward(q, x).embeddings;
    return loss(e.leftCols(n), e.rightCols(n), nullptr, nullptr);
  };
  const Vec numeric = numeric_gradient(f, get_flat(p));
  GradCheck out;
  out.relative = relative_error(analytic, numeric);
  for (Index i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(numeric(i)), 1e-3 * numeric.cwiseAbs().maxCoeff());
    if (std::abs(analytic(i) - numeric(i)) > 1e-4 * scale + 1e-9) ++out.bad_entries;
  }
  return out;
}

inline Mat encode_pair(const EncoderParams& p, const Mat& x1, const Mat& x2) {
  Mat x(x1.rows(), x1.cols() + x2.cols());
  x << x1, x2;
  return forward(p, x).embeddings;
}

}  // namespace mmcl::test
