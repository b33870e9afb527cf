#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmcl/rng.hpp"
#include "mmcl/types.hpp"

namespace mmcl {

struct Dataset {
  std::string name;
  Mat samples;  // N x d, one sample per row
  std::optional<std::vector<int>> labels;

  Index size() const { return samples.rows(); }
  Index dim() const { return samples.cols(); }
  bool labeled() const { return labels.has_value(); }
  int num_classes() const;

  // Throws InvalidArgument on NaN/Inf or labels that do not match the rows.
  void validate() const;

  // d x |rows| matrix of the selected samples, one per column.
  Mat columns(const std::vector<Index>& rows) const;
  std::vector<int> labels_of(const std::vector<Index>& rows) const;

  bool operator==(const Dataset&) const = default;
};

// x -> s x + noise, then each coordinate zeroed with probability dropout_p,
// s ~ U[scale_lo, scale_hi], noise ~ N(0, noise_sigma^2).
struct AugmentationSpec {
  double noise_sigma = 0.1;
  double dropout_p = 0.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;

  void validate() const;
  bool operator==(const AugmentationSpec&) const = default;
};

Vec augment(const AugmentationSpec& spec, VecRef x, CounterRng& rng);

// Unit-covariance Gaussian clusters with means separation / sqrt(2) * e_c, so
// every pair of means is `separation` apart. Requires num_classes <= d.
Dataset make_blobs(int num_classes, int per_class, int d, double separation, std::uint64_t seed);

// Two interleaved half circles (upper arc centred at the origin, radius 1)
// with isotropic noise in the plane, zero-padded and rotated by a random
// orthogonal matrix into ambient_dim.
Dataset make_moons(int per_class, double noise, int ambient_dim, std::uint64_t seed);

// Numeric CSV. An optional first line of column names is recognised; when
// its last name is "label" that column becomes integer labels.
Dataset load_csv(const std::string& path);
void save_csv(const std::string& path, const Dataset& ds);

// "MMD1", u64 N, u64 d, u64 has_labels, row-major f64 samples, then N i64
// labels when present. Little-endian throughout.
Dataset load_binary(const std::string& path);
void save_binary(const std::string& path, const Dataset& ds);

// Dispatches on extension: ".mmd" is binary, anything else is CSV.
Dataset load_dataset(const std::string& path);

// Seeded permutation of the rows, first round(fraction * N) go to the first set.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, std::uint64_t seed);

std::vector<Index> shuffled_indices(Index n, CounterRng& rng);

}  // namespace mmcl
