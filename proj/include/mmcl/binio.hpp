#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "mmcl/types.hpp"

// Little-endian primitives shared by the checkpoint and dataset formats.
namespace mmcl::binio {

void write_magic(std::ostream& out, std::string_view magic);
// Throws ParseError when the next bytes are not `magic`.
void expect_magic(std::istream& in, std::string_view magic, const std::string& what);
bool peek_magic(std::istream& in, std::string_view magic);

void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

// Row-major payload.
void write_matrix(std::ostream& out, MatRef m);
void read_matrix(std::istream& in, Mat& m);
void write_vector(std::ostream& out, VecRef v);
void read_vector(std::istream& in, Vec& v);

// Writes to `path.tmp` then renames over `path`.
template <typename Fn>
void write_atomically(const std::string& path, Fn&& fn);

void commit_file(const std::string& tmp, const std::string& path);

}  // namespace mmcl::binio

#include <fstream>

#include "mmcl/errors.hpp"

namespace mmcl::binio {

template <typename Fn>
void write_atomically(const std::string& path, Fn&& fn) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    fn(out);
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  commit_file(tmp, path);
}

}  // namespace mmcl::binio
