#include "mmcl/kernels.hpp"

#include <cmath>

#include "mmcl/errors.hpp"

namespace mmcl {

namespace {

void check_dims(Index da, Index db, const char* what) {
  if (da != db) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(da) + " vs " +
                          std::to_string(db) + ")");
  }
  if (da < 1) throw InvalidArgument(std::string(what) + ": empty vectors");
}

double squared_distance(VecRef a, VecRef b) { return (a - b).squaredNorm(); }

}  // namespace

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf";
    case KernelKind::tanh: return "tanh";
  }
  return "?";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "rbf") return KernelKind::rbf;
  if (name == "tanh") return KernelKind::tanh;
  throw InvalidArgument("unknown kernel kind '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf && !(sigma_sq > 0.0)) {
    throw InvalidArgument("rbf kernel requires sigma_sq > 0");
  }
  if (tanh_sign != 1.0 && tanh_sign != -1.0) throw InvalidArgument("tanh_sign must be +1 or -1");
}

double kernel_eval(const KernelSpec& spec, VecRef a, VecRef b) {
  check_dims(a.size(), b.size(), "kernel_eval");
  switch (spec.kind) {
    case KernelKind::linear: return a.dot(b);
    case KernelKind::rbf: return std::exp(-squared_distance(a, b) / (2.0 * spec.sigma_sq));
    case KernelKind::tanh: return std::tanh(spec.tanh_sign * spec.gamma * a.dot(b) + spec.bias);
  }
  return 0.0;
}

Mat gram(const KernelSpec& spec, MatRef a, MatRef b) {
  if (a.rows() != b.rows()) {
    throw InvalidArgument("gram: row dimension mismatch (" + std::to_string(a.rows()) + " vs " +
                          std::to_string(b.rows()) + ")");
  }
  Mat out(a.cols(), b.cols());
  const Index n = b.cols();
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < a.cols(); ++i) out(i, j) = kernel_eval(spec, a.col(i), b.col(j));
  }
  return out;
}

Vec kernel_grad(const KernelSpec& spec, VecRef a, VecRef b) {
  check_dims(a.size(), b.size(), "kernel_grad");
  switch (spec.kind) {
    case KernelKind::linear: return a;
    case KernelKind::rbf: {
      const double k = kernel_eval(spec, a, b);
      return (k / spec.sigma_sq) * (a - b);
    }
    case KernelKind::tanh: {
      const double t = std::tanh(spec.tanh_sign * spec.gamma * a.dot(b) + spec.bias);
      return (spec.tanh_sign * spec.gamma * (1.0 - t * t)) * a;
    }
  }
  return Vec::Zero(a.size());
}

}  // namespace mmcl
