#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mmcl/types.hpp"

namespace mmcl {

struct Dense {
  Mat weight;  // out x in
  Vec bias;

  bool operator==(const Dense&) const = default;
};

// Backbone MLP followed by a projection head and unit normalization:
//   f(x) = normalize(head(backbone(x)))
// ReLU follows every layer except the last one of the whole stack.
struct EncoderParams {
  std::vector<Dense> backbone;
  std::vector<Dense> head;
  // Bumped by every optimizer step; ForwardTape records it.
  std::uint64_t version = 0;

  std::size_t num_layers() const { return backbone.size() + head.size(); }
  Dense& layer(std::size_t i) { return i < backbone.size() ? backbone[i] : head[i - backbone.size()]; }
  const Dense& layer(std::size_t i) const {
    return i < backbone.size() ? backbone[i] : head[i - backbone.size()];
  }
  Index in_dim() const;
  Index out_dim() const;
  Index backbone_dim() const;
  Index parameter_count() const;
  bool same_shape(const EncoderParams& other) const;
  bool all_finite() const;

  // Parameter equality; version is ignored.
  bool operator==(const EncoderParams& other) const {
    return backbone == other.backbone && head == other.head;
  }
};

using EncoderGrads = EncoderParams;

struct EncoderShape {
  Index in_dim = 0;
  std::vector<Index> backbone = {64, 64};
  std::vector<Index> head = {64, 32};
};

// He-style uniform init: W ~ U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), b = 0.
EncoderParams init_encoder(const EncoderShape& shape, std::uint64_t seed);
EncoderParams zeros_like(const EncoderParams& params);

// Throws InvalidArgument when consecutive layer shapes do not chain.
void validate_encoder(const EncoderParams& params);

struct ForwardTape {
  std::vector<Mat> inputs;   // input fed to layer i
  std::vector<Mat> outputs;  // pre-activation output of layer i
  Vec norms;                 // |v| per column before normalization
  std::uint64_t params_version = 0;
  Index columns = 0;
};

struct ForwardResult {
  Mat embeddings;  // out_dim x N, unit columns
  ForwardTape tape;
};

inline constexpr double kNormEpsilon = 1e-12;

// X is in_dim x N.
ForwardResult forward(const EncoderParams& params, MatRef x);

// Gradient of every parameter given d loss / d embeddings. Throws
// ContractViolation when the tape does not belong to these parameters.
EncoderGrads backward(const EncoderParams& params, const ForwardTape& tape, MatRef d_embeddings);

// Vector-Jacobian product of v -> v / max(|v|, eps).
Vec normalize_backward(VecRef v, VecRef d);

enum class EmbeddingSource { backbone, head };

std::string_view to_string(EmbeddingSource s);
EmbeddingSource parse_embedding_source(std::string_view name);

// Features for evaluation: backbone output (post-ReLU, unnormalized) or the
// normalized head output. Without a head both are the normalized output.
Mat embed(const EncoderParams& params, MatRef x, EmbeddingSource source);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Dense> m;
  std::vector<Dense> v;

  bool operator==(const AdamState&) const = default;
};

AdamState make_adam(const EncoderParams& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                    double epsilon = 1e-8);

// Bias-corrected Adam update in place.
void adam_step(EncoderParams& params, const EncoderGrads& grads, AdamState& state);

// "MMCL1", u64 in_dim, u64 #backbone, u64 #head, u64 width per layer, then
// per layer weight (row-major) and bias as little-endian f64.
void write_encoder(std::ostream& out, const EncoderParams& params);
EncoderParams read_encoder(std::istream& in);

}  // namespace mmcl
