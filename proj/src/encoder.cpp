#include "mmcl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "mmcl/binio.hpp"
#include "mmcl/errors.hpp"
#include "mmcl/rng.hpp"

namespace mmcl {

Index EncoderParams::in_dim() const { return num_layers() == 0 ? 0 : layer(0).weight.cols(); }

Index EncoderParams::out_dim() const { return num_layers() == 0 ? 0 : layer(num_layers() - 1).weight.rows(); }

Index EncoderParams::backbone_dim() const { return backbone.empty() ? in_dim() : backbone.back().weight.rows(); }

Index EncoderParams::parameter_count() const {
  Index total = 0;
  for (std::size_t i = 0; i < num_layers(); ++i) total += layer(i).weight.size() + layer(i).bias.size();
  return total;
}

bool EncoderParams::same_shape(const EncoderParams& other) const {
  if (backbone.size() != other.backbone.size() || head.size() != other.head.size()) return false;
  for (std::size_t i = 0; i < num_layers(); ++i) {
    if (layer(i).weight.rows() != other.layer(i).weight.rows() ||
        layer(i).weight.cols() != other.layer(i).weight.cols()) {
      return false;
    }
  }
  return true;
}

bool EncoderParams::all_finite() const {
  for (std::size_t i = 0; i < num_layers(); ++i) {
    if (!layer(i).weight.allFinite() || !layer(i).bias.allFinite()) return false;
  }
  return true;
}

void validate_encoder(const EncoderParams& params) {
  if (params.num_layers() == 0) throw InvalidArgument("encoder has no layers");
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    const Dense& l = params.layer(i);
    if (l.bias.size() != l.weight.rows()) throw InvalidArgument("encoder layer " + std::to_string(i) + ": bias size");
    if (i > 0 && l.weight.cols() != params.layer(i - 1).weight.rows()) {
      throw InvalidArgument("encoder layer " + std::to_string(i) + " does not chain with its predecessor");
    }
  }
}

EncoderParams init_encoder(const EncoderShape& shape, std::uint64_t seed) {
  if (shape.in_dim < 1) throw InvalidArgument("encoder input dimension must be >= 1");
  if (shape.backbone.empty() && shape.head.empty()) throw InvalidArgument("encoder needs at least one layer");
  EncoderParams p;
  Index fan_in = shape.in_dim;
  std::uint64_t layer_id = 0;
  auto make = [&](Index width) {
    if (width < 1) throw InvalidArgument("encoder layer widths must be >= 1");
    CounterRng rng(seed, stream_id({0x656E63ULL, layer_id++}));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Dense d{Mat(width, fan_in), Vec::Zero(width)};
    for (Index r = 0; r < width; ++r) {
      for (Index c = 0; c < fan_in; ++c) d.weight(r, c) = rng.uniform(-bound, bound);
    }
    fan_in = width;
    return d;
  };
  for (Index w : shape.backbone) p.backbone.push_back(make(w));
  for (Index w : shape.head) p.head.push_back(make(w));
  return p;
}

EncoderParams zeros_like(const EncoderParams& params) {
  EncoderParams z;
  for (const auto& l : params.backbone) z.backbone.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())});
  for (const auto& l : params.head) z.head.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())});
  return z;
}

namespace {

Mat affine(const Dense& l, const Mat& in) {
  Mat out = l.weight * in;
  out.colwise() += l.bias;
  return out;
}

}  // namespace

ForwardResult forward(const EncoderParams& params, MatRef x) {
  validate_encoder(params);
  if (x.rows() != params.in_dim()) {
    throw InvalidArgument("forward: input has " + std::to_string(x.rows()) + " rows, encoder expects " +
                          std::to_string(params.in_dim()));
  }
  ForwardResult r;
  ForwardTape& tape = r.tape;
  const std::size_t depth = params.num_layers();
  tape.inputs.reserve(depth);
  tape.outputs.reserve(depth);
  Mat h = x;
  for (std::size_t i = 0; i < depth; ++i) {
    tape.inputs.push_back(h);
    tape.outputs.push_back(affine(params.layer(i), h));
    h = tape.outputs.back();
    if (i + 1 < depth) h = h.cwiseMax(0.0);
  }
  tape.norms = h.colwise().norm().transpose();
  for (Index j = 0; j < h.cols(); ++j) h.col(j) /= std::max(tape.norms(j), kNormEpsilon);
  tape.params_version = params.version;
  tape.columns = x.cols();
  r.embeddings = std::move(h);
  return r;
}

Vec normalize_backward(VecRef v, VecRef d) {
  const double n = v.norm();
  if (n <= kNormEpsilon) return d / kNormEpsilon;
  return d / n - v * (v.dot(d) / (n * n * n));
}

EncoderGrads backward(const EncoderParams& params, const ForwardTape& tape, MatRef d_embeddings) {
  const std::size_t depth = params.num_layers();
  if (tape.params_version != params.version || tape.inputs.size() != depth || tape.outputs.size() != depth) {
    throw ContractViolation("backward: tape was recorded against different parameters");
  }
  for (std::size_t i = 0; i < depth; ++i) {
    if (tape.outputs[i].rows() != params.layer(i).weight.rows() || tape.inputs[i].rows() != params.layer(i).weight.cols()) {
      throw ContractViolation("backward: tape shapes do not match the parameters");
    }
  }
  if (d_embeddings.rows() != params.out_dim() || d_embeddings.cols() != tape.columns) {
    throw InvalidArgument("backward: gradient shape does not match the forward output");
  }

  EncoderGrads grads = zeros_like(params);
  const Mat& v = tape.outputs.back();
  Mat delta(v.rows(), v.cols());
  for (Index j = 0; j < v.cols(); ++j) delta.col(j) = normalize_backward(v.col(j), d_embeddings.col(j));

  for (std::size_t i = depth; i-- > 0;) {
    if (i + 1 < depth) delta = delta.cwiseProduct((tape.outputs[i].array() > 0.0).cast<double>().matrix());
    Dense& g = grads.layer(i);
    g.weight.noalias() = delta * tape.inputs[i].transpose();
    g.bias = delta.rowwise().sum();
    if (i > 0) delta = params.layer(i).weight.transpose() * delta;
  }
  return grads;
}

std::string_view to_string(EmbeddingSource s) { return s == EmbeddingSource::backbone ? "backbone" : "head"; }

EmbeddingSource parse_embedding_source(std::string_view name) {
  if (name == "backbone") return EmbeddingSource::backbone;
  if (name == "head") return EmbeddingSource::head;
  throw InvalidArgument("unknown embedding source '" + std::string(name) + "'");
}

Mat embed(const EncoderParams& params, MatRef x, EmbeddingSource source) {
  if (source == EmbeddingSource::head || params.head.empty() || params.backbone.empty()) {
    return forward(params, x).embeddings;
  }
  validate_encoder(params);
  if (x.rows() != params.in_dim()) throw InvalidArgument("embed: input dimension mismatch");
  Mat h = x;
  for (const auto& l : params.backbone) h = affine(l, h).cwiseMax(0.0);
  return h;
}

AdamState make_adam(const EncoderParams& params, double lr, double beta1, double beta2, double epsilon) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  const EncoderParams z = zeros_like(params);
  for (std::size_t i = 0; i < z.num_layers(); ++i) s.m.push_back(z.layer(i));
  s.v = s.m;
  return s;
}

void adam_step(EncoderParams& params, const EncoderGrads& grads, AdamState& state) {
  if (!params.same_shape(grads) || state.m.size() != params.num_layers() || state.v.size() != params.num_layers()) {
    throw InvalidArgument("adam_step: parameter, gradient, and moment shapes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    update(params.layer(i).weight, grads.layer(i).weight, state.m[i].weight, state.v[i].weight);
    update(params.layer(i).bias, grads.layer(i).bias, state.m[i].bias, state.v[i].bias);
  }
  ++params.version;
}

void write_encoder(std::ostream& out, const EncoderParams& params) {
  validate_encoder(params);
  binio::write_magic(out, "MMCL1");
  binio::write_u64(out, static_cast<std::uint64_t>(params.in_dim()));
  binio::write_u64(out, params.backbone.size());
  binio::write_u64(out, params.head.size());
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    binio::write_u64(out, static_cast<std::uint64_t>(params.layer(i).weight.rows()));
  }
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    binio::write_matrix(out, params.layer(i).weight);
    binio::write_vector(out, params.layer(i).bias);
  }
}

EncoderParams read_encoder(std::istream& in) {
  binio::expect_magic(in, "MMCL1", "checkpoint");
  const auto in_dim = static_cast<Index>(binio::read_u64(in));
  const auto n_backbone = binio::read_u64(in);
  const auto n_head = binio::read_u64(in);
  if (in_dim < 1 || n_backbone + n_head == 0 || n_backbone + n_head > 1024) {
    throw ParseError("checkpoint: implausible header", 0);
  }
  std::vector<Index> widths;
  for (std::uint64_t i = 0; i < n_backbone + n_head; ++i) widths.push_back(static_cast<Index>(binio::read_u64(in)));

  EncoderParams p;
  Index fan_in = in_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    Dense d{Mat(widths[i], fan_in), Vec(widths[i])};
    binio::read_matrix(in, d.weight);
    binio::read_vector(in, d.bias);
    (i < n_backbone ? p.backbone : p.head).push_back(std::move(d));
    fan_in = widths[i];
  }
  return p;
}

}  // namespace mmcl
