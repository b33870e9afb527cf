#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mmcl/types.hpp"

namespace mmcl {

// Embeddings are d x n (one sample per column).
//
// Cosine-similarity kNN with majority vote; vote ties go to the class with the
// larger summed similarity. k larger than the train set is clipped, with a
// note on `warnings` when given.
double knn_readout(MatRef train_emb, const std::vector<int>& train_labels, MatRef test_emb,
                   const std::vector<int>& test_labels, int k, std::ostream* warnings = nullptr);

struct ProbeOptions {
  int epochs = 500;
  double lr = 0.1;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double accuracy = 0.0;
  // Training cross-entropy before each update.
  std::vector<double> loss_trace;
};

// Multinomial logistic regression on frozen embeddings, full-batch gradient
// descent from a small seeded initialization.
ProbeResult linear_probe(MatRef train_emb, const std::vector<int>& train_labels, MatRef test_emb,
                         const std::vector<int>& test_labels, const ProbeOptions& opts = {});

struct EvalReport {
  double knn_accuracy = 0.0;
  double linear_accuracy = 0.0;
  int k = 200;
  int epochs_probe = 500;
};

}  // namespace mmcl
