#pragma once

// Binary and text I/O shared by the persisted artifacts: little-endian
// scalar streams, the row-major matrix file, content hashing.

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stnc/error.hpp"

namespace stnc::io {

namespace fs = std::filesystem;

class BinaryWriter {
 public:
  explicit BinaryWriter(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    require(static_cast<bool>(out_), ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  }

  void u64(std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(bytes), 8);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  void close() {
    out_.flush();
    require(static_cast<bool>(out_), ErrorKind::kIo, "write failed for '" + path_.string() + "'");
    out_.close();
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    require(static_cast<bool>(in_), ErrorKind::kIo, "cannot open '" + path.string() + "'");
  }

  std::uint64_t u64() {
    unsigned char bytes[8];
    in_.read(reinterpret_cast<char*>(bytes), 8);
    require(in_.gcount() == 8, ErrorKind::kParse, "unexpected end of '" + path_.string() + "'");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::uint64_t max_len = 1ULL << 32) {
    const std::uint64_t n = u64();
    require(n <= max_len, ErrorKind::kParse, "string length out of range in '" + path_.string() + "'");
    return raw(n);
  }
  std::string raw(std::uint64_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    require(static_cast<std::uint64_t>(in_.gcount()) == n, ErrorKind::kParse,
            "unexpected end of '" + path_.string() + "'");
    return s;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ifstream in_;
};

// Matrix file: u64 rows, u64 cols, then rows*cols little-endian doubles in row-major order.
inline void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
  BinaryWriter w(path);
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
  w.close();
}

inline Eigen::MatrixXd read_matrix(const fs::path& path) {
  BinaryReader r(path);
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  require(rows < (1ULL << 31) && cols < (1ULL << 31), ErrorKind::kParse,
          "matrix header out of range in '" + path.string() + "'");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  require(r.at_end(), ErrorKind::kParse, "trailing bytes in matrix file '" + path.string() + "'");
  return m;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

// FNV-1a, 64 bit. Used for stage-cache keys and reproducibility digests.
class Hasher {
 public:
  Hasher& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 1099511628211ULL;
    }
    return *this;
  }
  Hasher& str(std::string_view s) {
    const std::uint64_t n = s.size();
    bytes(&n, sizeof n);
    return bytes(s.data(), s.size());
  }
  Hasher& u64(std::uint64_t v) { return bytes(&v, sizeof v); }
  Hasher& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }
  Hasher& matrix(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) f64(m(i, j));
    return *this;
  }

  std::uint64_t value() const { return state_; }
  std::string hex() const {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << state_;
    return ss.str();
  }

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

inline std::string file_digest(const fs::path& path) { return Hasher().str(read_text(path)).hex(); }

}  // namespace stnc::io
