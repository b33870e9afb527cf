#include "mmcl/binio.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

namespace mmcl::binio {

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
  std::vector<char> buf(magic.size());
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in || std::memcmp(buf.data(), magic.data(), magic.size()) != 0) {
    throw ParseError(what + ": bad magic, expected '" + std::string(magic) + "'", 0);
  }
}

bool peek_magic(std::istream& in, std::string_view magic) {
  const auto pos = in.tellg();
  std::vector<char> buf(magic.size());
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  const bool ok = in.gcount() == static_cast<std::streamsize>(buf.size()) &&
                  std::memcmp(buf.data(), magic.data(), magic.size()) == 0;
  in.clear();
  in.seekg(pos);
  return ok;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw ParseError("unexpected end of binary file", 0);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

void write_matrix(std::ostream& out, MatRef m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
  }
}

void read_matrix(std::istream& in, Mat& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = read_f64(in);
  }
}

void write_vector(std::ostream& out, VecRef v) {
  for (Index i = 0; i < v.size(); ++i) write_f64(out, v(i));
}

void read_vector(std::istream& in, Vec& v) {
  for (Index i = 0; i < v.size(); ++i) v(i) = read_f64(in);
}

void commit_file(const std::string& tmp, const std::string& path) {
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

}  // namespace mmcl::binio
