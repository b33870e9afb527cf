#include "mmcl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mmcl/binio.hpp"
#include "mmcl/errors.hpp"

namespace mmcl {

int Dataset::num_classes() const {
  if (!labels || labels->empty()) return 0;
  return *std::max_element(labels->begin(), labels->end()) + 1;
}

void Dataset::validate() const {
  if (!samples.allFinite()) throw InvalidArgument("dataset '" + name + "' contains NaN or Inf");
  if (labels) {
    if (static_cast<Index>(labels->size()) != samples.rows()) {
      throw InvalidArgument("dataset '" + name + "': label count differs from sample count");
    }
    for (int l : *labels) {
      if (l < 0) throw InvalidArgument("dataset '" + name + "': negative label");
    }
  }
}

Mat Dataset::columns(const std::vector<Index>& rows) const {
  Mat out(dim(), static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) out.col(static_cast<Index>(j)) = samples.row(rows[j]).transpose();
  return out;
}

std::vector<int> Dataset::labels_of(const std::vector<Index>& rows) const {
  if (!labels) throw InvalidArgument("dataset '" + name + "' has no labels");
  std::vector<int> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back((*labels)[static_cast<std::size_t>(r)]);
  return out;
}

void AugmentationSpec::validate() const {
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("augmentation: noise_sigma must be >= 0");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InvalidArgument("augmentation: dropout_p must be in [0, 1)");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) throw InvalidArgument("augmentation: need 0 < scale_lo <= scale_hi");
}

Vec augment(const AugmentationSpec& spec, VecRef x, CounterRng& rng) {
  // Every draw happens unconditionally so stream positions do not depend on the spec values.
  const double s = rng.uniform(spec.scale_lo, spec.scale_hi);
  Vec out = s * x;
  for (Index i = 0; i < out.size(); ++i) {
    out(i) += spec.noise_sigma * rng.normal();
    if (rng.uniform() < spec.dropout_p) out(i) = 0.0;
  }
  return out;
}

Dataset make_blobs(int num_classes, int per_class, int d, double separation, std::uint64_t seed) {
  if (num_classes < 1 || per_class < 1 || d < 1) throw InvalidArgument("make_blobs: counts must be >= 1");
  if (!(separation > 0.0)) throw InvalidArgument("make_blobs: separation must be positive");
  if (num_classes > d) throw InvalidArgument("make_blobs: num_classes must not exceed d");
  Dataset ds;
  ds.name = "blobs";
  ds.samples.resize(static_cast<Index>(num_classes) * per_class, d);
  ds.labels.emplace();
  CounterRng rng(seed, stream_id({0x626C6F62ULL}));
  const double offset = separation / std::numbers::sqrt2;
  Index row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      for (int j = 0; j < d; ++j) ds.samples(row, j) = rng.normal() + (j == c ? offset : 0.0);
      ds.labels->push_back(c);
    }
  }
  return ds;
}

namespace {

// Haar-ish random orthogonal matrix: QR of a Gaussian matrix with the sign of
// R's diagonal folded into Q.
Mat random_rotation(int dim, CounterRng& rng) {
  Mat g(dim, dim);
  for (int c = 0; c < dim; ++c) {
    for (int r = 0; r < dim; ++r) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat rr = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < dim; ++c) {
    if (rr(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

}  // namespace

Dataset make_moons(int per_class, double noise, int ambient_dim, std::uint64_t seed) {
  if (per_class < 1) throw InvalidArgument("make_moons: per_class must be >= 1");
  if (ambient_dim < 2) throw InvalidArgument("make_moons: ambient_dim must be >= 2");
  if (!(noise >= 0.0)) throw InvalidArgument("make_moons: noise must be >= 0");
  CounterRng rng(seed, stream_id({0x6D6F6F6EULL}));
  Dataset ds;
  ds.name = "moons";
  ds.labels.emplace();
  Mat planar = Mat::Zero(2 * per_class, ambient_dim);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const double t = per_class == 1 ? 0.0 : std::numbers::pi * i / (per_class - 1);
      const Index row = static_cast<Index>(c) * per_class + i;
      planar(row, 0) = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
      planar(row, 1) = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
      ds.labels->push_back(c);
    }
  }
  for (Index r = 0; r < planar.rows(); ++r) {
    planar(r, 0) += noise * rng.normal();
    planar(r, 1) += noise * rng.normal();
  }
  const Mat rot = random_rotation(ambient_dim, rng);
  ds.samples = planar * rot.transpose();
  return ds;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  Dataset ds;
  ds.name = path;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  bool has_label = false;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    auto fields = split_fields(line);
    if (first) {
      first = false;
      double probe = 0.0;
      if (!parse_double(fields.front(), probe)) {
        has_label = fields.back() == "label";
        width = fields.size();
        continue;
      }
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw ParseError("ragged row: expected " + std::to_string(width) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    std::vector<double> values(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (!parse_double(fields[i], values[i])) throw ParseError("non-numeric cell '" + fields[i] + "'", line_no);
    }
    if (has_label) {
      const double l = values.back();
      if (l != std::floor(l) || l < 0) throw ParseError("label must be a nonnegative integer", line_no);
      labels.push_back(static_cast<int>(l));
      values.pop_back();
    }
    rows.push_back(std::move(values));
  }
  const std::size_t d = has_label ? width - 1 : width;
  if (rows.empty() || d == 0) throw ParseError("dataset '" + path + "' has no samples", line_no);
  ds.samples.resize(static_cast<Index>(rows.size()), static_cast<Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) ds.samples(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  if (has_label) ds.labels = std::move(labels);
  ds.validate();
  return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
  binio::write_atomically(path, [&](std::ostream& out) {
    char buf[32];
    for (Index c = 0; c < ds.dim(); ++c) out << (c ? "," : "") << "x" << c;
    if (ds.labels) out << ",label";
    out << '\n';
    for (Index r = 0; r < ds.size(); ++r) {
      for (Index c = 0; c < ds.dim(); ++c) {
        auto res = std::to_chars(buf, buf + sizeof buf, ds.samples(r, c));
        out << (c ? "," : "") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
      }
      if (ds.labels) out << ',' << (*ds.labels)[static_cast<std::size_t>(r)];
      out << '\n';
    }
  });
}

Dataset load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  binio::expect_magic(in, "MMD1", "dataset");
  const auto n = static_cast<Index>(binio::read_u64(in));
  const auto d = static_cast<Index>(binio::read_u64(in));
  const auto has_labels = binio::read_u64(in);
  Dataset ds;
  ds.name = path;
  ds.samples.resize(n, d);
  binio::read_matrix(in, ds.samples);
  if (has_labels != 0) {
    ds.labels.emplace();
    for (Index i = 0; i < n; ++i) ds.labels->push_back(static_cast<int>(static_cast<std::int64_t>(binio::read_u64(in))));
  }
  ds.validate();
  return ds;
}

void save_binary(const std::string& path, const Dataset& ds) {
  binio::write_atomically(path, [&](std::ostream& out) {
    binio::write_magic(out, "MMD1");
    binio::write_u64(out, static_cast<std::uint64_t>(ds.size()));
    binio::write_u64(out, static_cast<std::uint64_t>(ds.dim()));
    binio::write_u64(out, ds.labels ? 1 : 0);
    binio::write_matrix(out, ds.samples);
    if (ds.labels) {
      for (int l : *ds.labels) binio::write_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(l)));
    }
  });
}

Dataset load_dataset(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".mmd") == 0) return load_binary(path);
  return load_csv(path);
}

std::vector<Index> shuffled_indices(Index n, CounterRng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("split fraction must be in (0, 1)");
  CounterRng rng(seed, stream_id({0x73706C6974ULL}));
  const auto idx = shuffled_indices(ds.size(), rng);
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  auto take = [&](std::size_t lo, std::size_t hi, const char* suffix) {
    Dataset part;
    part.name = ds.name + suffix;
    part.samples.resize(static_cast<Index>(hi - lo), ds.dim());
    if (ds.labels) part.labels.emplace();
    for (std::size_t i = lo; i < hi; ++i) {
      part.samples.row(static_cast<Index>(i - lo)) = ds.samples.row(idx[i]);
      if (ds.labels) part.labels->push_back((*ds.labels)[static_cast<std::size_t>(idx[i])]);
    }
    return part;
  };
  return {take(0, cut, ".train"), take(cut, idx.size(), ".test")};
}

}  // namespace mmcl
