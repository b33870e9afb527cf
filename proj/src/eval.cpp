#include "mmcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mmcl/errors.hpp"
#include "mmcl/rng.hpp"

namespace mmcl {

namespace {

void check_sets(MatRef train, const std::vector<int>& train_labels, MatRef test, const std::vector<int>& test_labels) {
  if (train.cols() == 0 || test.cols() == 0) throw InvalidArgument("evaluation needs nonempty train and test sets");
  if (train.rows() != test.rows()) throw InvalidArgument("train and test embeddings differ in dimension");
  if (static_cast<Index>(train_labels.size()) != train.cols() || static_cast<Index>(test_labels.size()) != test.cols()) {
    throw InvalidArgument("label count does not match the embeddings");
  }
  for (int l : train_labels) {
    if (l < 0) throw InvalidArgument("labels must be nonnegative");
  }
}

Mat unit_columns(MatRef m) {
  Mat out = m;
  for (Index j = 0; j < out.cols(); ++j) {
    const double n = out.col(j).norm();
    if (n > 0.0) out.col(j) /= n;
  }
  return out;
}

int max_label(const std::vector<int>& a, const std::vector<int>& b) {
  int top = 0;
  for (int l : a) top = std::max(top, l);
  for (int l : b) top = std::max(top, l);
  return top;
}

}  // namespace

double knn_readout(MatRef train_emb, const std::vector<int>& train_labels, MatRef test_emb,
                   const std::vector<int>& test_labels, int k, std::ostream* warnings) {
  check_sets(train_emb, train_labels, test_emb, test_labels);
  if (k < 1) throw InvalidArgument("knn_readout: k must be >= 1");
  const Index n_train = train_emb.cols();
  if (k > n_train) {
    if (warnings != nullptr) {
      *warnings << "warning: k=" << k << " exceeds the " << n_train << " train points; using k=" << n_train << '\n';
    }
    k = static_cast<int>(n_train);
  }
  const Mat train = unit_columns(train_emb);
  const Mat test = unit_columns(test_emb);
  const int classes = max_label(train_labels, test_labels) + 1;
  const Index n_test = test.cols();

  std::vector<char> correct(static_cast<std::size_t>(n_test), 0);
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < n_test; ++t) {
    const Vec sims = train.transpose() * test.col(t);
    std::vector<Index> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Index a, Index b) { return sims(a) > sims(b) || (sims(a) == sims(b) && a < b); });
    std::vector<int> votes(static_cast<std::size_t>(classes), 0);
    std::vector<double> mass(static_cast<std::size_t>(classes), 0.0);
    for (int i = 0; i < k; ++i) {
      const Index j = order[static_cast<std::size_t>(i)];
      const auto c = static_cast<std::size_t>(train_labels[static_cast<std::size_t>(j)]);
      ++votes[c];
      mass[c] += sims(j);
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && mass[c] > mass[best])) best = c;
    }
    correct[static_cast<std::size_t>(t)] = static_cast<int>(best) == test_labels[static_cast<std::size_t>(t)];
  }
  const auto hits = std::count(correct.begin(), correct.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(n_test);
}

ProbeResult linear_probe(MatRef train_emb, const std::vector<int>& train_labels, MatRef test_emb,
                         const std::vector<int>& test_labels, const ProbeOptions& opts) {
  check_sets(train_emb, train_labels, test_emb, test_labels);
  const int classes = max_label(train_labels, test_labels) + 1;
  {
    std::vector<int> seen(train_labels);
    std::sort(seen.begin(), seen.end());
    if (std::unique(seen.begin(), seen.end()) - seen.begin() < 2) {
      throw InvalidArgument("linear_probe needs at least two classes in the training labels");
    }
  }
  if (opts.epochs < 0 || !(opts.lr > 0.0)) throw InvalidArgument("linear_probe: bad epochs or lr");

  const Index d = train_emb.rows();
  const Index n = train_emb.cols();
  CounterRng rng(opts.seed, stream_id({0x70726F6265ULL}));
  Mat w(classes, d);
  for (Index c = 0; c < d; ++c) {
    for (Index r = 0; r < classes; ++r) w(r, c) = 0.01 * rng.normal();
  }
  Vec b = Vec::Zero(classes);
  Mat onehot = Mat::Zero(classes, n);
  for (Index j = 0; j < n; ++j) onehot(train_labels[static_cast<std::size_t>(j)], j) = 1.0;

  ProbeResult res;
  res.loss_trace.reserve(static_cast<std::size_t>(opts.epochs));
  for (int e = 0; e < opts.epochs; ++e) {
    Mat logits = w * train_emb;
    logits.colwise() += b;
    double loss = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double top = logits.col(j).maxCoeff();
      logits.col(j) = (logits.col(j).array() - top).exp().matrix();
      const double z = logits.col(j).sum();
      logits.col(j) /= z;
      loss -= std::log(logits(train_labels[static_cast<std::size_t>(j)], j));
    }
    res.loss_trace.push_back(loss / static_cast<double>(n));
    const Mat residual = (logits - onehot) / static_cast<double>(n);
    w -= opts.lr * residual * train_emb.transpose();
    b -= opts.lr * residual.rowwise().sum();
  }

  Mat logits = w * test_emb;
  logits.colwise() += b;
  Index hits = 0;
  for (Index j = 0; j < test_emb.cols(); ++j) {
    Index arg = 0;
    logits.col(j).maxCoeff(&arg);
    if (arg == test_labels[static_cast<std::size_t>(j)]) ++hits;
  }
  res.accuracy = static_cast<double>(hits) / static_cast<double>(test_emb.cols());
  return res;
}

}  // namespace mmcl
