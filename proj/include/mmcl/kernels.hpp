#pragma once

#include <string>
#include <string_view>

#include "mmcl/types.hpp"

namespace mmcl {

enum class KernelKind { linear, rbf, tanh };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

// linear: a'b
// rbf:    exp(-|a - b|^2 / (2 sigma_sq))
// tanh:   tanh(tanh_sign * gamma * a'b + bias)
//
// tanh_sign defaults to -1, i.e. tanh(-gamma a'b + bias). With that sign the
// similarity decreases in a'b; set it to +1 for the conventional form.
struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double sigma_sq = 1.0;
  double gamma = 1.0;
  double bias = 0.0;
  double tanh_sign = -1.0;

  // Throws InvalidArgument for sigma_sq <= 0 (rbf) or a sign other than +-1.
  void validate() const;

  bool operator==(const KernelSpec&) const = default;
};

double kernel_eval(const KernelSpec& spec, VecRef a, VecRef b);

// Gram matrix between the columns of a (d x m) and b (d x n). Columns of b
// are distributed over the OpenMP pool; every entry is kernel_eval.
Mat gram(const KernelSpec& spec, MatRef a, MatRef b);

// d kernel(a, b) / d b. Use kernel_grad(spec, b, a) for the derivative in a.
Vec kernel_grad(const KernelSpec& spec, VecRef a, VecRef b);

}  // namespace mmcl
